"""Charging, firing and reset rules for LIF-family neurons.

Three charging rules are provided:

* ``charge_vanilla``  -- fixed leak ``1 - 1/tau_m`` and input gain ``1/tau_m``;
* ``charge_variable`` -- separate leak/drive factors ``mu`` and ``lambda``
  sharing one time constant;
* ``charge_dalif``    -- independent input gain ``alpha`` (spatial decay) and
  membrane carry-over ``beta`` (temporal decay).

All three are written so that the reductions between them hold bit-exactly:
``charge_dalif(H, X, 1/tau, 1 - 1/tau)`` and ``charge_variable`` with
``mu = lambda = 1`` evaluate the same floating point expression as
``charge_vanilla``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import DTYPE, ShapeError

ACTIVATIONS = ("tanh", "sigmoid")


@dataclass(frozen=True)
class NeuronConfig:
    v_th: float = 1.0
    v_reset: float = 0.0
    v_rest: float = 0.0
    tau_m: float = 2.0
    surrogate_a: float = 1.0
    detach_reset: bool = False
    decay_activation: str = "tanh"

    def __post_init__(self):
        if not self.v_th > self.v_reset:
            raise ValueError(f"v_th ({self.v_th}) must exceed v_reset ({self.v_reset})")
        if not self.tau_m > 1.0:
            raise ValueError(f"tau_m must be > 1, got {self.tau_m}")
        if not self.surrogate_a > 0.0:
            raise ValueError(f"surrogate_a must be > 0, got {self.surrogate_a}")
        if self.decay_activation not in ACTIVATIONS:
            raise ValueError(
                f"decay_activation must be one of {ACTIVATIONS}, got {self.decay_activation!r}"
            )


@dataclass
class DecayParams:
    """Raw learnable decays of one layer; shared by every timestep."""

    rho_alpha: float = 1.0
    rho_beta: float = 1.0

    def effective(self, activation: str = "tanh") -> tuple[float, float]:
        return (effective_decay(self.rho_alpha, activation),
                effective_decay(self.rho_beta, activation))


def effective_decay(rho: float, activation: str = "tanh") -> float:
    if activation == "tanh":
        return float(np.tanh(rho))
    if activation == "sigmoid":
        return float(1.0 / (1.0 + np.exp(-rho)))
    raise ValueError(f"unknown decay activation {activation!r}")


def effective_decay_grad(rho: float, activation: str = "tanh") -> float:
    """Derivative of :func:`effective_decay` with respect to ``rho``."""
    y = effective_decay(rho, activation)
    if activation == "tanh":
        return 1.0 - y * y
    return y * (1.0 - y)


def _same_shape(a: np.ndarray, b: np.ndarray):
    if np.shape(a) != np.shape(b):
        raise ShapeError(f"shape mismatch: {np.shape(a)} vs {np.shape(b)}")


def vanilla_decays(cfg: NeuronConfig) -> tuple[float, float]:
    """``(alpha, beta)`` at which DA-LIF charging coincides with vanilla LIF."""
    gain = 1.0 / cfg.tau_m
    return gain, 1.0 - gain


def charge_vanilla(h_prev, x, cfg: NeuronConfig):
    _same_shape(h_prev, x)
    gain, leak = vanilla_decays(cfg)
    v = leak * h_prev + gain * x
    if cfg.v_rest != 0.0:
        v = v + gain * cfg.v_rest
    return v


def charge_variable(h_prev, x, mu: float, lam: float, cfg: NeuronConfig):
    _same_shape(h_prev, x)
    return (1.0 - mu / cfg.tau_m) * h_prev + (lam / cfg.tau_m) * x


def charge_dalif(h_prev, x, alpha, beta):
    _same_shape(h_prev, x)
    return beta * h_prev + alpha * x


def fire(v, v_th: float):
    """Heaviside threshold; a potential exactly at threshold fires."""
    return (np.asarray(v) >= v_th).astype(DTYPE)


def reset(v, s, cfg: NeuronConfig):
    """Hard reset of fired positions to ``v_reset``; ``s`` must be binary."""
    _same_shape(v, s)
    s = np.asarray(s)
    if not np.all((s == 0.0) | (s == 1.0)):
        raise ValueError("reset expects a binary spike tensor")
    return reset_blend(v, s, cfg.v_reset)


def reset_blend(v, s, v_reset: float = 0.0):
    """``v_reset*s + v*(1-s)`` without the binary check (used by the ramp forward)."""
    return v_reset * s + v * (1.0 - s)


def euler_reference_step(u: float, current: float, dt: float, mu: float, lam: float,
                         tau_m: float, cfg: NeuronConfig) -> float:
    """One forward-Euler step of ``tau_m du/dt = -mu (u - v_rest) + lam I``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    return u + (dt / tau_m) * (-mu * (u - cfg.v_rest) + lam * current)
