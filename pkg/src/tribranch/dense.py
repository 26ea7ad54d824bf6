"""Dense float64 plumbing: matmul, im2col/col2im, nearest upsampling.

Matrices are 2-D float64 numpy arrays; image-shaped activations are 4-D
``(n, c, h, w)`` float64 arrays.
"""

import numpy as np

from .errors import ArgumentError, InvalidInputError, ShapeError


def as_matrix(a, name="matrix") -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    return a


def as_tensor4(x, name="tensor") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeError(f"{name} must be 4-D (n, c, h, w), got shape {x.shape}")
    return x


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a, "left operand")
    b = as_matrix(b, "right operand")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    out = a @ b
    if not np.all(np.isfinite(out)):
        raise InvalidInputError("matmul produced non-finite entries")
    return out


def conv_out_size(size: int, k: int, pad: int, stride: int) -> int:
    if k < 1 or stride < 1 or pad < 0:
        raise ArgumentError(f"invalid window: kernel={k} pad={pad} stride={stride}")
    if size + 2 * pad < k:
        raise ShapeError(f"kernel {k} larger than padded input {size + 2 * pad}")
    return (size + 2 * pad - k) // stride + 1


def im2col(x, kh: int, kw: int, pad: int = 0, stride: int = 1) -> np.ndarray:
    """Unfold receptive fields into rows.

    Output shape is ``(n*h_out*w_out, c*kh*kw)``; rows run over (n, y, x) and
    columns are channel-major, then kernel row, then kernel column.
    """
    x = as_tensor4(x)
    n, c, h, w = x.shape
    h_out = conv_out_size(h, kh, pad, stride)
    w_out = conv_out_size(w, kw, pad, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, : stride * (h_out - 1) + 1 : stride, : stride * (w_out - 1) + 1 : stride]
    # (n, c, h_out, w_out, kh, kw) -> (n, h_out, w_out, c, kh, kw), one copy
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h_out * w_out, c * kh * kw)


def col2im(cols, shape, kh: int, kw: int, pad: int = 0, stride: int = 1) -> np.ndarray:
    """Adjoint of :func:`im2col`: scatter-add rows back onto an image of ``shape``."""
    n, c, h, w = shape
    h_out = conv_out_size(h, kh, pad, stride)
    w_out = conv_out_size(w, kw, pad, stride)
    cols = as_matrix(cols, "cols")
    if cols.shape != (n * h_out * w_out, c * kh * kw):
        raise ShapeError(f"cols shape {cols.shape} does not match image {shape} and kernel {kh}x{kw}")
    col = np.ascontiguousarray(cols.reshape(n, h_out, w_out, c, kh, kw).transpose(4, 5, 0, 3, 1, 2))
    xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=np.float64)
    for dy in range(kh):
        y_end = dy + stride * (h_out - 1) + 1
        for dx in range(kw):
            x_end = dx + stride * (w_out - 1) + 1
            xp[:, :, dy:y_end:stride, dx:x_end:stride] += col[dy, dx]
    return xp[:, :, pad:pad + h, pad:pad + w] if pad else xp


def tokens_to_tensor(tokens, n: int, h: int, w: int) -> np.ndarray:
    """Reshape an ``(n*h*w, c)`` token matrix to ``(n, c, h, w)``."""
    return tokens.reshape(n, h, w, -1).transpose(0, 3, 1, 2)


def tensor_to_tokens(x) -> np.ndarray:
    n, c, h, w = x.shape
    return x.transpose(0, 2, 3, 1).reshape(n * h * w, c)


def upsample_nearest(x, factor: int) -> np.ndarray:
    if factor < 1:
        raise ArgumentError(f"upsample factor must be >= 1, got {factor}")
    if factor == 1:
        return x
    return x.repeat(factor, axis=2).repeat(factor, axis=3)


def upsample_nearest_backward(grad, factor: int) -> np.ndarray:
    if factor == 1:
        return grad
    n, c, h, w = grad.shape
    return grad.reshape(n, c, h // factor, factor, w // factor, factor).sum(axis=(3, 5))


def leaky_relu(x, slope: float = 0.2) -> np.ndarray:
    return np.where(x >= 0, x, slope * x)


def leaky_relu_backward(x, grad, slope: float = 0.2) -> np.ndarray:
    return np.where(x >= 0, grad, slope * grad)
