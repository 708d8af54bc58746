"""Synaptic-operation counting and the MAC/AC energy model.

The first layer sees real-valued input and costs one multiply-accumulate
(MAC) per synapse per timestep.  Every later layer, the readout included, is
driven by spikes and costs one accumulate (AC) per spike per outgoing
synapse.  Energy is ``e_mac * macs + e_ac * acs``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .network import ForwardTape, LayerSpec, Network
from .tensor import DTYPE, conv2d_grad_input

SCHEMA_VERSION = 1

# Per-sample (ACs, MACs, energy in joules) published for DA-LIF ResNets:
# CIFAR-100 at T=4, ImageNet at T=4, CIFAR10-DVS at T=16.
PUBLISHED_ROWS = (
    (143.31e6, 56.55e6, 0.3891e-3),
    (1.33e9, 974.86e6, 5.6814e-3),
    (1.42e9, 863.85e6, 5.2517e-3),
)


class SingularSystemError(ValueError):
    pass


@dataclass(frozen=True)
class EnergyModel:
    e_mac: float  # joules per MAC
    e_ac: float   # joules per AC

    def __post_init__(self):
        if not self.e_mac > self.e_ac > 0:
            raise ValueError(f"need e_mac > e_ac > 0, got {self.e_mac}, {self.e_ac}")


@dataclass
class SynOpCount:
    acs: float = 0.0
    macs: float = 0.0
    flops: float = 0.0
    params: int = 0

    def __add__(self, other: "SynOpCount") -> "SynOpCount":
        if self.params and other.params and self.params != other.params:
            raise ValueError("cannot add counts from networks of different size")
        return SynOpCount(self.acs + other.acs, self.macs + other.macs,
                          self.flops + other.flops, self.params or other.params)

    def scaled(self, factor: float) -> "SynOpCount":
        return SynOpCount(self.acs * factor, self.macs * factor, self.flops * factor, self.params)


def dense_synapse_count(layer: LayerSpec, in_shape) -> int:
    """Multiply-adds of one dense-equivalent evaluation of the layer's synapse."""
    out = layer.output_shape(in_shape)
    if layer.kind == "conv":
        return int(np.prod(out)) * int(np.prod(layer.weight.shape[1:]))
    return int(layer.weight.size)


def fanout_map(layer: LayerSpec, in_shape) -> np.ndarray:
    """Number of outgoing synapses of every input position, shape ``in_shape``."""
    if layer.kind == "dense":
        return np.full(in_shape, layer.weight.shape[0], dtype=DTYPE)
    out = layer.output_shape(in_shape)
    ones_out = np.ones((1,) + out, dtype=DTYPE)
    ones_w = np.ones_like(layer.weight)
    return conv2d_grad_input(ones_out, ones_w, in_shape[1:], layer.stride, layer.padding)[0]


def count_synops(net: Network, tape: ForwardTape, input_seq=None) -> SynOpCount:
    """Operation counts for the recorded forward pass, summed over the batch."""
    inputs = tape.inputs if input_seq is None else np.asarray(input_seq, dtype=DTYPE)
    if inputs.shape != tape.inputs.shape or len(tape.layers) != len(net.layers):
        raise ValueError("tape does not belong to this input/network")
    T, B = inputs.shape[:2]
    shapes = [net.input_shape] + net.layer_shapes()
    dense_total = sum(dense_synapse_count(l, shapes[n]) for n, l in enumerate(net.layers))
    dense_total += net.readout.size
    macs = T * B * dense_synapse_count(net.layers[0], shapes[0])
    acs = 0.0
    for n in range(1, len(net.layers)):
        spikes = tape.layers[n - 1].s
        acs += float(np.sum((spikes != 0) * fanout_map(net.layers[n], shapes[n])))
    acs += float(np.count_nonzero(tape.layers[-1].s)) * net.readout.shape[0]
    params = sum(l.weight.size for l in net.layers) + net.readout.size
    return SynOpCount(acs=acs, macs=float(macs), flops=float(T * B * dense_total), params=int(params))


def solve_energy_model(rows) -> EnergyModel:
    """Least-squares ``(e_mac, e_ac)`` from rows of ``(acs, macs, energy)``."""
    rows = np.asarray(rows, dtype=DTYPE)
    if rows.ndim != 2 or rows.shape[1] != 3:
        raise ValueError("rows must be (acs, macs, energy) triples")
    A = rows[:, [1, 0]]
    if rows.shape[0] < 2 or np.linalg.matrix_rank(A) < 2:
        raise SingularSystemError("need at least two linearly independent (acs, macs) rows")
    # column scaling keeps the normal equations well conditioned
    scale = np.abs(A).max(axis=0)
    sol, *_ = np.linalg.lstsq(A / scale, rows[:, 2], rcond=None)
    e_mac, e_ac = sol / scale
    return EnergyModel(float(e_mac), float(e_ac))


def energy(count: SynOpCount, model: EnergyModel) -> float:
    return model.e_mac * count.macs + model.e_ac * count.acs


def energy_report(count: SynOpCount, model: EnergyModel, timesteps: int) -> dict:
    out = asdict(count)
    out.update(energy_joules=energy(count, model), e_mac=model.e_mac, e_ac=model.e_ac,
               timesteps=int(timesteps), schema_version=SCHEMA_VERSION)
    return out
