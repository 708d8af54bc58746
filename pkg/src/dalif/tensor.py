"""Dense float64 tensor helpers: fills, direct convolution, dense synapses, seeded init.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 in row-major
(C) order.  Convolutions accept a leading batch axis, ``[B, C, H, W]``, or a
single unbatched image ``[C, H, W]``.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float64


class ShapeError(ValueError):
    """Operand extents do not compose."""


class NonFiniteError(FloatingPointError):
    """An operation produced NaN or Inf."""


def _finite(arr: np.ndarray, where: str) -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"non-finite values produced by {where}")
    return arr


def tensor_full(shape, value: float) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ShapeError(f"negative extent in shape {shape}")
    return np.full(shape, value, dtype=DTYPE)


class RngStream:
    """Seeded random stream (PCG64), reproducible across runs and platforms.

    ``RngStream(seed, *keys)`` derives an independent stream from the seed and
    any extra integer keys, e.g. ``RngStream(seed, epoch)`` for per-epoch
    shuffles.
    """

    def __init__(self, seed: int, *keys: int):
        self.seed = int(seed)
        self.keys = tuple(int(k) for k in keys)
        ss = np.random.SeedSequence([self.seed & 0xFFFFFFFFFFFFFFFF, *self.keys])
        self._gen = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, low: float, high: float, shape) -> np.ndarray:
        return self._gen.uniform(low, high, size=tuple(shape)).astype(DTYPE)

    def random(self, shape) -> np.ndarray:
        return self._gen.random(size=tuple(shape), dtype=DTYPE)

    def integers(self, low: int, high: int, shape=None):
        return self._gen.integers(low, high, size=shape)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)


def kaiming_init(rng: RngStream, shape, fan_in: int) -> np.ndarray:
    """Uniform init in ``[-sqrt(6/fan_in), sqrt(6/fan_in)]``."""
    if fan_in <= 0:
        raise ValueError(f"fan_in must be positive, got {fan_in}")
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, shape)


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


def _as_batched(x: np.ndarray):
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"conv2d expects [C,H,W] or [B,C,H,W], got shape {x.shape}")


def _check_conv(x: np.ndarray, weight: np.ndarray, stride: int, padding: int):
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv weight must be [C_out,C_in,k,k], got {weight.shape}")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(
            f"input has {x.shape[1]} channels but weight expects {weight.shape[1]}"
        )
    if stride < 1:
        raise ShapeError(f"stride must be >= 1, got {stride}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")
    k = weight.shape[2]
    if k > x.shape[2] + 2 * padding or k > x.shape[3] + 2 * padding:
        raise ShapeError(f"kernel {k} larger than padded input {x.shape[2:]}")


def _windows(x: np.ndarray, k: int, stride: int, padding: int) -> np.ndarray:
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # [B, C, H', W', k, k]
    return sliding_window_view(x, (k, k), axis=(2, 3))[:, :, ::stride, ::stride]


def conv2d(x: np.ndarray, weight: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    """Cross-correlation with zero padding, no bias."""
    xb, squeeze = _as_batched(np.asarray(x, dtype=DTYPE))
    _check_conv(xb, weight, stride, padding)
    cols = _windows(xb, weight.shape[2], stride, padding)
    out = np.tensordot(cols, weight, axes=([1, 4, 5], [1, 2, 3]))  # [B,H',W',O]
    out = np.ascontiguousarray(out.transpose(0, 3, 1, 2))
    _finite(out, "conv2d")
    return out[0] if squeeze else out


def conv2d_grad_weight(grad_out: np.ndarray, x: np.ndarray, k: int, stride: int = 1,
                       padding: int = 0) -> np.ndarray:
    """dL/dW given dL/d(output) ``[B,O,H',W']`` and the input ``[B,C,H,W]``."""
    cols = _windows(x, k, stride, padding)
    return np.tensordot(grad_out, cols, axes=([0, 2, 3], [0, 2, 3]))  # [O,C,k,k]


def conv2d_grad_input(grad_out: np.ndarray, weight: np.ndarray, input_hw, stride: int = 1,
                      padding: int = 0) -> np.ndarray:
    """dL/d(input) by scattering each kernel tap back onto the padded input."""
    b, _, ho, wo = grad_out.shape
    c_in, k = weight.shape[1], weight.shape[2]
    h, w = input_hw
    hp, wp = h + 2 * padding, w + 2 * padding
    dx = np.zeros((b, hp, wp, c_in), dtype=DTYPE)
    for u in range(k):
        for v in range(k):
            tap = np.tensordot(grad_out, weight[:, :, u, v], axes=([1], [0]))  # [B,H',W',C]
            dx[:, u:u + stride * (ho - 1) + 1:stride, v:v + stride * (wo - 1) + 1:stride] += tap
    dx = dx[:, padding:padding + h, padding:padding + w]
    return np.ascontiguousarray(dx.transpose(0, 3, 1, 2))


def fully_connected(x: np.ndarray, weight: np.ndarray) -> np.ndarray:
    """``weight @ x`` for ``x`` of shape ``[N_in]`` or ``[B, N_in]``."""
    x = np.asarray(x, dtype=DTYPE)
    if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
        raise ShapeError(f"cannot apply weight {weight.shape} to input {x.shape}")
    return _finite(x @ weight.T, "fully_connected")
