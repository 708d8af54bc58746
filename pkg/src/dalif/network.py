"""Layered spiking network unrolled over T timesteps.

A :class:`Network` is a stack of spiking layers (conv or dense synapse
followed by a LIF-family neuron) and a non-spiking dense readout.  The
readout's synaptic output is averaged over time (rate decoding) to form the
logits.

Arrays carry a leading time axis and a batch axis: inputs are ``[T, B, ...]``.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field

import numpy as np

from . import neuron as nrn
from .neuron import DecayParams, NeuronConfig
from .tensor import (
    DTYPE, RngStream, ShapeError, conv2d, conv_output_size, fully_connected, kaiming_init,
)

NEURON_MODELS = ("dalif", "vanilla")


@dataclass
class LayerSpec:
    kind: str  # "conv" | "dense"
    weight: np.ndarray
    stride: int = 1
    padding: int = 0
    neuron: NeuronConfig = field(default_factory=NeuronConfig)
    decays: DecayParams = field(default_factory=DecayParams)
    neuron_model: str = "dalif"

    def __post_init__(self):
        if self.kind not in ("conv", "dense"):
            raise ValueError(f"layer kind must be 'conv' or 'dense', got {self.kind!r}")
        if self.neuron_model not in NEURON_MODELS:
            raise ValueError(f"neuron_model must be one of {NEURON_MODELS}")
        self.weight = np.asarray(self.weight, dtype=DTYPE)

    def synapse(self, s_prev: np.ndarray) -> np.ndarray:
        if self.kind == "conv":
            return conv2d(s_prev, self.weight, self.stride, self.padding)
        return fully_connected(s_prev.reshape(s_prev.shape[0], -1), self.weight)

    def output_shape(self, in_shape) -> tuple:
        if self.kind == "conv":
            c, h, w = in_shape
            if c != self.weight.shape[1]:
                raise ShapeError(f"layer expects {self.weight.shape[1]} channels, got {c}")
            k = self.weight.shape[2]
            return (self.weight.shape[0],
                    conv_output_size(h, k, self.stride, self.padding),
                    conv_output_size(w, k, self.stride, self.padding))
        if int(np.prod(in_shape)) != self.weight.shape[1]:
            raise ShapeError(f"dense layer expects {self.weight.shape[1]} inputs, got {in_shape}")
        return (self.weight.shape[0],)

    def effective_decays(self) -> tuple[float, float]:
        """``(alpha, beta)`` used by the charging rule at the current parameters."""
        if self.neuron_model == "vanilla":
            return nrn.vanilla_decays(self.neuron)
        return self.decays.effective(self.neuron.decay_activation)


@dataclass
class Network:
    layers: list[LayerSpec]
    readout: np.ndarray  # [classes, features of last spiking layer]
    input_shape: tuple
    T: int = 4
    readout_mode: str = "rate"

    def __post_init__(self):
        if self.T < 1:
            raise ValueError(f"T must be >= 1, got {self.T}")
        if self.readout_mode != "rate":
            raise ValueError("only rate readout is supported")
        self.readout = np.asarray(self.readout, dtype=DTYPE)
        self.input_shape = tuple(self.input_shape)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
        if self.readout.ndim != 2 or self.readout.shape[1] != int(np.prod(shape)):
            raise ShapeError(
                f"readout {self.readout.shape} does not match last layer output {shape}"
            )

    @property
    def num_classes(self) -> int:
        return self.readout.shape[0]

    def layer_shapes(self) -> list[tuple]:
        shapes, shape = [], self.input_shape
        for layer in self.layers:
            shape = layer.output_shape(shape)
            shapes.append(shape)
        return shapes

    def copy(self) -> "Network":
        return copy.deepcopy(self)


def build_network(input_shape, hidden, num_classes: int, seed: int, T: int = 4,
                  neuron: NeuronConfig | None = None, neuron_model: str = "dalif",
                  rho_alpha: float = 1.0, rho_beta: float = 1.0) -> Network:
    """Build a network from layer descriptors.

    ``hidden`` is a list of dicts: ``{"kind": "conv", "out": 16, "k": 3,
    "stride": 1, "padding": 1}`` or ``{"kind": "dense", "out": 64}``.
    """
    neuron = neuron or NeuronConfig()
    rng = RngStream(seed)
    layers, shape = [], tuple(input_shape)
    for spec in hidden:
        kind = spec["kind"]
        if kind == "conv":
            k = spec.get("k", 3)
            fan_in = shape[0] * k * k
            w = kaiming_init(rng, (spec["out"], shape[0], k, k), fan_in)
            layer = LayerSpec("conv", w, spec.get("stride", 1), spec.get("padding", 0),
                              neuron, DecayParams(rho_alpha, rho_beta), neuron_model)
        elif kind == "dense":
            fan_in = int(np.prod(shape))
            w = kaiming_init(rng, (spec["out"], fan_in), fan_in)
            layer = LayerSpec("dense", w, neuron=neuron,
                              decays=DecayParams(rho_alpha, rho_beta), neuron_model=neuron_model)
        else:
            raise ValueError(f"unknown layer kind {kind!r}")
        shape = layer.output_shape(shape)
        layers.append(layer)
    features = int(np.prod(shape))
    readout = kaiming_init(rng, (num_classes, features), features)
    return Network(layers, readout, tuple(input_shape), T)


REFERENCE_HIDDEN = (
    {"kind": "conv", "out": 16, "k": 3, "stride": 1, "padding": 1},
    {"kind": "conv", "out": 32, "k": 3, "stride": 2, "padding": 1},
)


def reference_network(seed: int = 7, input_shape=(1, 8, 8), num_classes: int = 2, T: int = 4,
                      **kwargs) -> Network:
    """Desk reference net: conv16 -> DA-LIF -> conv32/s2 -> DA-LIF -> dense readout."""
    return build_network(input_shape, list(REFERENCE_HIDDEN), num_classes, seed, T, **kwargs)


@dataclass
class LayerTape:
    """Per-layer record over time; each array is ``[T, B, ...]``."""

    x: np.ndarray
    v: np.ndarray
    s: np.ndarray
    h: np.ndarray
    alpha: np.ndarray  # [T] effective spatial decay used at each step
    beta: np.ndarray   # [T]

    def h_prev(self) -> np.ndarray:
        """``H^{t-1}`` for every t, with the zero initial state at t = 0."""
        out = np.zeros_like(self.h)
        out[1:] = self.h[:-1]
        return out


@dataclass
class ForwardTape:
    inputs: np.ndarray
    layers: list[LayerTape]
    readout_in: np.ndarray  # [T, B, features]
    logits: np.ndarray      # [T, B, classes]
    smooth: bool = False

    @property
    def T(self) -> int:
        return self.inputs.shape[0]


def ramp_spike(v, v_th: float, a: float):
    """Piecewise-linear spike whose derivative is exactly the rectangular surrogate."""
    return np.clip((v - v_th) / a + 0.5, 0.0, 1.0)


def layer_forward(layer: LayerSpec, s_prev: np.ndarray, h_prev: np.ndarray,
                  alpha: float | None = None, beta: float | None = None,
                  smooth: bool = False):
    """One timestep of one layer; returns ``(S, V, H, X)``.

    ``alpha``/``beta`` override the layer's effective decays.  With ``smooth``
    the Heaviside is replaced by :func:`ramp_spike` (gradient checking only).
    """
    x = layer.synapse(s_prev)
    if np.shape(h_prev) != x.shape:
        raise ShapeError(f"state shape {np.shape(h_prev)} does not match layer output {x.shape}")
    cfg = layer.neuron
    if alpha is None and beta is None and layer.neuron_model == "vanilla":
        v = nrn.charge_vanilla(h_prev, x, cfg)
    else:
        a0, b0 = layer.effective_decays()
        v = nrn.charge_dalif(h_prev, x, a0 if alpha is None else alpha, b0 if beta is None else beta)
    if smooth:
        s = ramp_spike(v, cfg.v_th, cfg.surrogate_a)
        h = nrn.reset_blend(v, s, cfg.v_reset)
    else:
        s = nrn.fire(v, cfg.v_th)
        h = nrn.reset(v, s, cfg)
    return s, v, h, x


def _per_step(value, T: int) -> np.ndarray:
    arr = np.broadcast_to(np.asarray(value, dtype=DTYPE), (T,))
    return np.array(arr)


def network_forward(net: Network, input_seq: np.ndarray, decays=None, smooth: bool = False):
    """Run the network over ``input_seq`` of shape ``[T, B, *input_shape]``.

    ``decays`` optionally overrides the effective ``(alpha, beta)`` per layer;
    each entry may be a scalar or a length-T sequence (untied per timestep).
    Returns ``(logits_per_t [T, B, classes], tape)``.
    """
    input_seq = np.asarray(input_seq, dtype=DTYPE)
    if input_seq.ndim != len(net.input_shape) + 2 or input_seq.shape[2:] != net.input_shape:
        raise ShapeError(
            f"expected input [T, B, {', '.join(map(str, net.input_shape))}], got {input_seq.shape}"
        )
    T, B = input_seq.shape[:2]
    shapes = net.layer_shapes()
    per_layer = []
    for n, layer in enumerate(net.layers):
        if decays is not None and decays[n] is not None:
            a, b = decays[n]
            per_layer.append((_per_step(a, T), _per_step(b, T), True))
        else:
            a, b = layer.effective_decays()
            per_layer.append((_per_step(a, T), _per_step(b, T), False))

    rec = {k: [np.empty((T, B) + shp, dtype=DTYPE) for shp in shapes] for k in "xvsh"}
    state = [np.zeros((B,) + shp, dtype=DTYPE) for shp in shapes]
    readout_in = np.empty((T, B, net.readout.shape[1]), dtype=DTYPE)
    for t in range(T):
        s_prev = input_seq[t]
        for n, layer in enumerate(net.layers):
            alphas, betas, override = per_layer[n]
            if override:
                s, v, h, x = layer_forward(layer, s_prev, state[n], alphas[t], betas[t], smooth)
            else:
                s, v, h, x = layer_forward(layer, s_prev, state[n], smooth=smooth)
            rec["x"][n][t], rec["v"][n][t], rec["s"][n][t], rec["h"][n][t] = x, v, s, h
            state[n] = h
            s_prev = s
        readout_in[t] = s_prev.reshape(B, -1)
    logits = fully_connected(readout_in, net.readout)
    layers = [
        LayerTape(rec["x"][n], rec["v"][n], rec["s"][n], rec["h"][n], per_layer[n][0], per_layer[n][1])
        for n in range(len(net.layers))
    ]
    return logits, ForwardTape(input_seq, layers, readout_in, logits, smooth)


def readout_rate(logits_per_t: np.ndarray) -> np.ndarray:
    """Mean over the leading time axis."""
    logits_per_t = np.asarray(logits_per_t, dtype=DTYPE)
    if logits_per_t.shape[0] < 1:
        raise ValueError("need at least one timestep")
    return logits_per_t.mean(axis=0)


def softmax_cross_entropy(logits, label):
    """Stable softmax cross-entropy.

    ``logits`` is ``[C]`` with an integer ``label``, or ``[B, C]`` with a
    length-B label array; the batched loss is the mean over samples and the
    returned gradient is of that mean.
    """
    logits = np.asarray(logits, dtype=DTYPE)
    single = logits.ndim == 1
    z = logits[None] if single else logits
    labels = np.atleast_1d(np.asarray(label, dtype=np.int64))
    C = z.shape[1]
    if labels.shape[0] != z.shape[0]:
        raise ShapeError(f"{labels.shape[0]} labels for {z.shape[0]} samples")
    if np.any(labels < 0) or np.any(labels >= C):
        raise IndexError(f"label out of range for {C} classes: {labels}")
    shifted = z - z.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    idx = np.arange(z.shape[0])
    losses = log_norm - shifted[idx, labels]
    probs = np.exp(shifted - log_norm[:, None])
    grad = probs
    grad[idx, labels] -= 1.0
    if single:
        return float(losses[0]), grad[0]
    B = z.shape[0]
    return float(losses.sum() / B), grad / B


def loss_and_grad(net: Network, input_seq, labels, decays=None, smooth: bool = False):
    """Forward + rate readout + CE; returns ``(loss, dL/dlogits_per_t, tape)``."""
    logits_t, tape = network_forward(net, input_seq, decays, smooth)
    loss, g = softmax_cross_entropy(readout_rate(logits_t), labels)
    T = logits_t.shape[0]
    g_t = np.broadcast_to(g / T, logits_t.shape).copy()
    return loss, g_t, tape
