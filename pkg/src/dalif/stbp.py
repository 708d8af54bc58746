"""Spatio-temporal backpropagation with a rectangular surrogate gradient.

The reverse pass walks layers from the readout down to the input and, inside
each layer, timesteps from last to first.  At every ``(t, n)`` the gradient
reaching the membrane potential ``V^{t,n}`` combines

* the spatial path through the spike ``S^{t,n}`` (surrogate derivative), and
* the temporal path through the carried state ``H^{t,n}`` into
  ``V^{t+1,n} = beta * H^{t,n} + alpha * X^{t+1,n}``.

The reset ``H = v_reset*S + V*(1-S)`` is differentiated through the
surrogate unless ``detach_reset`` is set on the layer's neuron.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import ForwardTape, Network, loss_and_grad, network_forward, readout_rate, \
    softmax_cross_entropy
from .neuron import effective_decay_grad
from .tensor import DTYPE, conv2d_grad_input, conv2d_grad_weight


def surrogate_grad(v, v_th: float = 1.0, a: float = 1.0):
    """``(1/a) * [|v - v_th| < a/2]``; zero on the window boundary."""
    if not a > 0:
        raise ValueError(f"surrogate width must be positive, got {a}")
    return (np.abs(np.asarray(v, dtype=DTYPE) - v_th) < a / 2).astype(DTYPE) / a


@dataclass
class LayerGrad:
    dW: np.ndarray
    d_rho_alpha: float
    d_rho_beta: float
    d_alpha_t: np.ndarray  # per-timestep dL/d(effective alpha)
    d_beta_t: np.ndarray


@dataclass
class Gradients:
    layers: list[LayerGrad]
    d_readout: np.ndarray

    def all_finite(self) -> bool:
        parts = [self.d_readout] + [g.dW for g in self.layers]
        scalars = [v for g in self.layers for v in (g.d_rho_alpha, g.d_rho_beta)]
        return all(np.all(np.isfinite(p)) for p in parts) and bool(np.all(np.isfinite(scalars)))


def _check_tape(net: Network, tape: ForwardTape, dlogits_t: np.ndarray):
    if len(tape.layers) != len(net.layers):
        raise ValueError(f"tape has {len(tape.layers)} layers, network has {len(net.layers)}")
    for n, (shape, lt) in enumerate(zip(net.layer_shapes(), tape.layers)):
        if lt.v.shape[2:] != shape:
            raise ValueError(f"tape layer {n} shape {lt.v.shape[2:]} != network {shape}")
    if dlogits_t.shape != tape.logits.shape:
        raise ValueError(f"dL/dlogits shape {dlogits_t.shape} != logits {tape.logits.shape}")


def _synapse_backward(layer, dx: np.ndarray, s_in: np.ndarray, need_input: bool):
    """Weight and input gradients of the synapse with time folded into batch."""
    T, B = dx.shape[:2]
    dx_f = dx.reshape((T * B,) + dx.shape[2:])
    s_f = s_in.reshape((T * B,) + s_in.shape[2:])
    if layer.kind == "conv":
        k = layer.weight.shape[2]
        dW = conv2d_grad_weight(dx_f, s_f, k, layer.stride, layer.padding)
        ds = (conv2d_grad_input(dx_f, layer.weight, s_f.shape[2:], layer.stride, layer.padding)
              if need_input else None)
    else:
        flat = s_f.reshape(T * B, -1)
        dW = dx_f.T @ flat
        ds = (dx_f @ layer.weight).reshape(s_f.shape) if need_input else None
    if ds is not None:
        ds = ds.reshape(s_in.shape)
    return dW, ds


def backward(net: Network, tape: ForwardTape, dlogits_t: np.ndarray) -> Gradients:
    """Gradients of the loss for every weight and raw decay parameter.

    ``dlogits_t`` is dL/d(logits at each timestep), shape ``[T, B, classes]``.
    """
    dlogits_t = np.asarray(dlogits_t, dtype=DTYPE)
    _check_tape(net, tape, dlogits_t)
    T = tape.T
    d_readout = np.tensordot(dlogits_t, tape.readout_in, axes=([0, 1], [0, 1]))
    last = tape.layers[-1]
    ds = (dlogits_t @ net.readout).reshape(last.s.shape)

    grads: list[LayerGrad] = [None] * len(net.layers)
    for n in range(len(net.layers) - 1, -1, -1):
        layer, lt = net.layers[n], tape.layers[n]
        cfg = layer.neuron
        h_prev = lt.h_prev()
        dv = np.zeros_like(lt.v)
        dv_next = None
        for t in range(T - 1, -1, -1):
            sg = surrogate_grad(lt.v[t], cfg.v_th, cfg.surrogate_a)
            if dv_next is None:
                dv[t] = ds[t] * sg
            else:
                dh = lt.beta[t + 1] * dv_next
                if cfg.detach_reset:
                    dv[t] = ds[t] * sg + dh * (1.0 - lt.s[t])
                else:
                    dv[t] = (ds[t] + dh * (cfg.v_reset - lt.v[t])) * sg + dh * (1.0 - lt.s[t])
            dv_next = dv[t]
        axes = tuple(range(1, dv.ndim))
        d_alpha_t = np.sum(dv * lt.x, axis=axes)
        d_beta_t = np.sum(dv * h_prev, axis=axes)
        dx = lt.alpha.reshape((T,) + (1,) * (dv.ndim - 1)) * dv
        s_in = tape.inputs if n == 0 else tape.layers[n - 1].s
        dW, ds = _synapse_backward(layer, dx, s_in, need_input=n > 0)

        if layer.neuron_model == "dalif":
            act = cfg.decay_activation
            d_rho_a = effective_decay_grad(layer.decays.rho_alpha, act) * float(d_alpha_t.sum())
            d_rho_b = effective_decay_grad(layer.decays.rho_beta, act) * float(d_beta_t.sum())
        else:
            d_rho_a = d_rho_b = 0.0
        grads[n] = LayerGrad(dW, d_rho_a, d_rho_b, d_alpha_t, d_beta_t)
    return Gradients(grads, d_readout)


# ---------------------------------------------------------------------------
# finite-difference oracle

def _param_slots(net: Network):
    """Yield ``(name, slot)`` for every scalar parameter."""
    for n, layer in enumerate(net.layers):
        w = layer.weight
        for idx in np.ndindex(w.shape):
            yield f"layers[{n}].weight{list(idx)}", ("w", n, idx)
        if layer.neuron_model == "dalif":
            yield f"layers[{n}].rho_alpha", ("ra", n, None)
            yield f"layers[{n}].rho_beta", ("rb", n, None)
    for idx in np.ndindex(net.readout.shape):
        yield f"readout{list(idx)}", ("r", None, idx)


def _get(net, slot):
    kind, n, idx = slot
    if kind == "w":
        return net.layers[n].weight[idx]
    if kind == "ra":
        return net.layers[n].decays.rho_alpha
    if kind == "rb":
        return net.layers[n].decays.rho_beta
    return net.readout[idx]


def _set(net, slot, value):
    kind, n, idx = slot
    if kind == "w":
        net.layers[n].weight[idx] = value
    elif kind == "ra":
        net.layers[n].decays.rho_alpha = value
    elif kind == "rb":
        net.layers[n].decays.rho_beta = value
    else:
        net.readout[idx] = value


def _analytic(grads: Gradients, slot):
    kind, n, idx = slot
    if kind == "w":
        return grads.layers[n].dW[idx]
    if kind == "ra":
        return grads.layers[n].d_rho_alpha
    if kind == "rb":
        return grads.layers[n].d_rho_beta
    return grads.d_readout[idx]


def _regions(tape: ForwardTape, net: Network):
    """Which linear piece of the ramp each membrane value sits on."""
    out = []
    for layer, lt in zip(net.layers, tape.layers):
        half = layer.neuron.surrogate_a / 2
        d = lt.v - layer.neuron.v_th
        out.append(np.where(d <= -half, 0, np.where(d >= half, 2, 1)).astype(np.int8))
    return out


@dataclass
class GradCheckReport:
    max_rel_error: float
    worst_param: str | None
    checked: int
    skipped: int

    def __float__(self):
        return self.max_rel_error


def grad_check(net: Network, input_seq, labels, epsilon: float = 1e-5, corrupt: bool = False,
               params=None) -> GradCheckReport:
    """Compare :func:`backward` against central differences of the loss.

    Both sides use the ramp-smoothed forward, whose exact derivative is the
    surrogate.  A coordinate is skipped when either perturbation moves some
    membrane value onto a different piece of the ramp, since the difference
    quotient would then straddle a kink.  ``params`` optionally restricts the
    check to names starting with any of the given prefixes.  ``corrupt``
    perturbs the analytic gradient (negative control for the harness itself).
    """
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    net = net.copy()
    labels = np.atleast_1d(labels)
    _, g_t, tape = loss_and_grad(net, input_seq, labels, smooth=True)
    grads = backward(net, tape, g_t)
    base_regions = _regions(tape, net)

    def readout_loss():
        z = readout_rate(tape.readout_in @ net.readout.T)
        return softmax_cross_entropy(z, labels)[0]

    worst, worst_name, checked, skipped = 0.0, None, 0, 0
    for name, slot in _param_slots(net):
        if params is not None and not any(name.startswith(p) for p in params):
            continue
        orig = _get(net, slot)
        losses = []
        crossed = False
        for sign in (1.0, -1.0):
            _set(net, slot, orig + sign * epsilon)
            if slot[0] == "r":
                losses.append(readout_loss())
            else:
                logits_t, tp = network_forward(net, input_seq, smooth=True)
                losses.append(softmax_cross_entropy(readout_rate(logits_t), labels)[0])
                if any(np.any(a != b) for a, b in zip(_regions(tp, net), base_regions)):
                    crossed = True
        _set(net, slot, orig)
        if crossed:
            skipped += 1
            continue
        numeric = (losses[0] - losses[1]) / (2 * epsilon)
        analytic = _analytic(grads, slot)
        if corrupt:
            analytic = 1.5 * analytic + 1e-3
        err = abs(analytic - numeric) / max(1.0, abs(numeric))
        checked += 1
        if err > worst or worst_name is None:
            worst, worst_name = err, name
    return GradCheckReport(float(worst), worst_name, checked, skipped)
