"""Rank-4 tensors and stride-1 2D convolution.

Tensors are plain numpy arrays laid out as (batch, channel, height, width).
"Convolution" here means cross-correlation, the usual CNN convention; the
true flipped-kernel operation is obtained by composing with ``rotate180``.
"""

from dataclasses import dataclass

import numpy as np

DTYPES = {"single": np.float32, "double": np.float64}


class NonFiniteError(FloatingPointError):
    """Raised when an operation produces NaN or Inf."""


def as_tensor(a, precision="single"):
    """Return a contiguous rank-4 array of the requested precision."""
    arr = np.ascontiguousarray(a, dtype=DTYPES[precision])
    if arr.ndim != 4:
        raise ValueError(f"expected rank-4 (n, c, h, w) tensor, got shape {arr.shape}")
    check_finite(arr)
    return arr


def check_finite(a, what="tensor"):
    if not np.all(np.isfinite(a)):
        raise NonFiniteError(f"{what} contains NaN or Inf")
    return a


@dataclass
class Filter:
    """A filter bank: weights (c_out, c_in, k, k) and a bias per output channel."""

    weights: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        w = self.weights
        if w.ndim != 4:
            raise ValueError(f"filter weights must be rank 4, got {w.shape}")
        if w.shape[2] != w.shape[3] or w.shape[2] not in (1, 3):
            raise ValueError(f"kernel must be 1x1 or 3x3, got {w.shape[2]}x{w.shape[3]}")
        if self.bias.shape != (w.shape[0],):
            raise ValueError(f"bias shape {self.bias.shape} does not match c_out={w.shape[0]}")
        check_finite(w, "filter weights")

    @property
    def c_out(self):
        return self.weights.shape[0]

    @property
    def c_in(self):
        return self.weights.shape[1]

    @property
    def size(self):
        return self.weights.shape[2]

    @classmethod
    def zeros(cls, c_out, c_in, k, dtype=np.float64):
        return cls(np.zeros((c_out, c_in, k, k), dtype), np.zeros(c_out, dtype))


def rotate180(f):
    """Reverse both spatial axes of every (c_out, c_in) kernel slice.

    Accepts a ``Filter`` or a bare array whose last two axes are spatial.
    """
    if isinstance(f, np.ndarray):
        return np.ascontiguousarray(f[..., ::-1, ::-1])
    return Filter(np.ascontiguousarray(f.weights[:, :, ::-1, ::-1]), f.bias.copy())


def _pad(x, p):
    # negative padding crops
    if p > 0:
        return np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    if p < 0:
        return x[:, :, -p:p, -p:p]
    return x


def _im2col(x, k, pad):
    """Unfold (n, c, h, w) into rows of receptive fields, shape (n*H*W, c*k*k)."""
    xp = _pad(x, pad)
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    n, c, oh, ow = win.shape[:4]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * k * k)
    return cols, (n, oh, ow)


def _correlate(x, weights, pad):
    k = weights.shape[2]
    c_out = weights.shape[0]
    if k == 1 and pad == 0:
        out = np.tensordot(weights[:, :, 0, 0], x, axes=([1], [1]))
        return out.transpose(1, 0, 2, 3)
    cols, (n, oh, ow) = _im2col(x, k, pad)
    out = cols @ weights.reshape(c_out, -1).T
    return out.reshape(n, oh, ow, c_out).transpose(0, 3, 1, 2)


def conv2d_forward(x, f, zero_pad=None):
    """Stride-1 cross-correlation of ``x`` with filter bank ``f`` plus bias.

    ``zero_pad`` defaults to ``k // 2`` which preserves the spatial size.
    """
    if zero_pad is None:
        zero_pad = f.size // 2
    if zero_pad < 0:
        raise ValueError("zero_pad must be nonnegative")
    if x.ndim != 4 or x.shape[1] != f.c_in:
        raise ValueError(f"input shape {x.shape} does not match filter c_in={f.c_in}")
    out = _correlate(x, f.weights, zero_pad)
    out = np.ascontiguousarray(out + f.bias.reshape(1, -1, 1, 1))
    return check_finite(out, "conv2d output")


def conv2d_backward(x, f, grad_out, zero_pad=None):
    """Gradients of a ``conv2d_forward`` call.

    Returns ``(grad_input, grad_filter)``. The input gradient is the adjoint
    map: correlation of ``grad_out`` with the 180-degree rotated, channel
    transposed kernel, padded by ``k - 1 - zero_pad``.
    """
    if zero_pad is None:
        zero_pad = f.size // 2
    k = f.size
    n, _, h, w = x.shape
    oh, ow = h + 2 * zero_pad - k + 1, w + 2 * zero_pad - k + 1
    if grad_out.shape != (n, f.c_out, oh, ow):
        raise ValueError(
            f"grad_out shape {grad_out.shape} does not match forward output {(n, f.c_out, oh, ow)}"
        )

    flipped = rotate180(f).weights.transpose(1, 0, 2, 3)
    grad_in = np.ascontiguousarray(_correlate(grad_out, flipped, k - 1 - zero_pad))

    cols, _ = _im2col(x, k, zero_pad)
    g = grad_out.transpose(0, 2, 3, 1).reshape(-1, f.c_out)
    grad_w = (g.T @ cols).reshape(f.weights.shape)
    grad_b = grad_out.sum(axis=(0, 2, 3))
    return grad_in, Filter(grad_w, grad_b)


def conv2d_naive(x, f, zero_pad=None):
    """Nested-loop reference for ``conv2d_forward``. Slow; for testing."""
    if zero_pad is None:
        zero_pad = f.size // 2
    n, c, h, w = x.shape
    k = f.size
    oh, ow = h + 2 * zero_pad - k + 1, w + 2 * zero_pad - k + 1
    out = np.zeros((n, f.c_out, oh, ow), dtype=np.float64)
    for b in range(n):
        for o in range(f.c_out):
            for i in range(oh):
                for j in range(ow):
                    acc = float(f.bias[o])
                    for ci in range(c):
                        for di in range(k):
                            for dj in range(k):
                                r, s = i + di - zero_pad, j + dj - zero_pad
                                if 0 <= r < h and 0 <= s < w:
                                    acc += x[b, ci, r, s] * f.weights[o, ci, di, dj]
                    out[b, o, i, j] = acc
    return out
