"""
Differentiable primitives. Every forward computes on numpy arrays and, when
any input requires grad, records a backward rule on the thread-local tape.
Feature maps are row-major [B, C, H, W] throughout.
"""
from __future__ import annotations
from typing import Literal, Optional, Sequence

from engine.tensor_class import Tensor, as_tensor, record
from classes.errors import ShapeError

from einops import rearrange
from scipy.special import erf, expit
import numpy as np

UnaryKind = Literal['sigmoid', 'gelu', 'sqrt_eps', 'exp', 'log', 'abs', 'square']

_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """
    Sums a broadcast gradient back down to `shape`
    :param grad: gradient with the broadcast shape
    :param shape: shape of the original operand
    :return: np.ndarray with shape `shape`
    """
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad

def _check_map(x: Tensor, what: str):
    if x.ndim != 4:
        raise ShapeError(f'{what} expects a [B,C,H,W] tensor, got shape {x.shape}')

# ---------------- Elementwise ----------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data + b.data)
    record('add', (a, b), (out,), lambda g: (unbroadcast(g[0], a.shape), unbroadcast(g[0], b.shape)))
    return out

def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data - b.data)
    record('sub', (a, b), (out,), lambda g: (unbroadcast(g[0], a.shape), unbroadcast(-g[0], b.shape)))
    return out

def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data * b.data)

    def rule(g):
        return unbroadcast(g[0] * b.data, a.shape), unbroadcast(g[0] * a.data, b.shape)

    record('mul', (a, b), (out,), rule)
    return out

def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = Tensor(a.data / b.data)

    def rule(g):
        ga = g[0] / b.data
        gb = -g[0] * a.data / (b.data * b.data)
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    record('div', (a, b), (out,), rule)
    return out

def unary_map(x: Tensor, kind: UnaryKind, eps: float = 0.0) -> Tensor:
    """
    Elementwise map with its derivative
    :param x: input tensor
    :param kind: sigmoid | gelu | sqrt_eps | exp | log | abs | square
    :param eps: only for sqrt_eps, computes sqrt(x + eps^2)
    :return: Tensor of the same shape
    """
    v = x.data
    if kind == 'sigmoid':
        y = expit(v)
        deriv = lambda: y * (1.0 - y)
    elif kind == 'gelu':
        cdf = 0.5 * (1.0 + erf(v * _INV_SQRT2))
        y = v * cdf
        deriv = lambda: cdf + v * _INV_SQRT2PI * np.exp(-0.5 * v * v)
    elif kind == 'sqrt_eps':
        y = np.sqrt(v + eps * eps)
        # subgradient 0 where the root is exactly zero
        deriv = lambda: np.divide(0.5, y, out=np.zeros_like(y), where=y > 0)
    elif kind == 'exp':
        y = np.exp(v)
        deriv = lambda: y
    elif kind == 'log':
        y = np.log(v)
        deriv = lambda: 1.0 / v
    elif kind == 'abs':
        y = np.abs(v)
        deriv = lambda: np.sign(v)
    elif kind == 'square':
        y = v * v
        deriv = lambda: 2.0 * v
    else:
        raise ValueError(f'unknown unary kind: {kind}')

    out = Tensor(y)
    record(kind, (x,), (out,), lambda g: (g[0] * deriv(),))
    return out

def sigmoid(x: Tensor) -> Tensor:
    return unary_map(x, 'sigmoid')

def gelu(x: Tensor) -> Tensor:
    return unary_map(x, 'gelu')

# ---------------- Linear algebra ----------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """
    Batched matrix product [.., m, k] x [.., k, n] -> [.., m, n]
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f'matmul shape mismatch: {a.shape} x {b.shape}')
    try:
        out = Tensor(np.matmul(a.data, b.data))
    except ValueError:
        raise ShapeError(f'matmul batch dimensions not broadcastable: {a.shape} x {b.shape}')

    def rule(g):
        ga = np.matmul(g[0], np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g[0])
        return unbroadcast(ga, a.shape), unbroadcast(gb, b.shape)

    record('matmul', (a, b), (out,), rule)
    return out

def conv_pointwise(x: Tensor, w: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    1x1 convolution: per-pixel channel mixing
    :param x: [B, C, H, W]
    :param w: [C_out, C]
    :param bias: optional [C_out]
    :return: [B, C_out, H, W]
    """
    _check_map(x, 'conv_pointwise')
    b_, c, h, wd = x.shape
    if w.ndim != 2 or w.shape[1] != c:
        raise ShapeError(f'conv_pointwise weight {w.shape} does not match input {x.shape}')
    if bias is not None and bias.shape != (w.shape[0],):
        raise ShapeError(f'conv_pointwise bias {bias.shape} does not match weight {w.shape}')
    x3 = x.data.reshape(b_, c, h * wd)
    y = np.matmul(w.data, x3)
    if bias is not None:
        y = y + bias.data[None, :, None]
    out = Tensor(y.reshape(b_, w.shape[0], h, wd))

    def rule(g):
        g3 = g[0].reshape(b_, w.shape[0], h * wd)
        gx = np.matmul(w.data.T, g3).reshape(x.shape)
        gw = np.matmul(g3, np.swapaxes(x3, 1, 2)).sum(axis=0)
        gb = g3.sum(axis=(0, 2)) if bias is not None else None
        return gx, gw, gb

    inputs = (x, w) if bias is None else (x, w, bias)
    record('conv_pointwise', inputs, (out,), rule)
    return out

def conv_depthwise3x3(x: Tensor, w: Tensor, bias: Optional[Tensor] = None) -> Tensor:
    """
    Depthwise 3x3 convolution, zero padding 1, stride 1
    :param x: [B, C, H, W]
    :param w: [C, 3, 3]
    :param bias: optional [C]
    :return: [B, C, H, W]
    """
    _check_map(x, 'conv_depthwise3x3')
    _, c, h, wd = x.shape
    if w.shape != (c, 3, 3):
        raise ShapeError(f'conv_depthwise3x3 weight {w.shape} does not match input {x.shape}')
    xp = np.pad(x.data, ((0, 0), (0, 0), (1, 1), (1, 1)))
    y = np.zeros(x.shape, dtype=np.result_type(x.data, w.data))
    for i in range(3):
        for j in range(3):
            y += w.data[None, :, i, j, None, None] * xp[:, :, i:i + h, j:j + wd]
    if bias is not None:
        y += bias.data[None, :, None, None]
    out = Tensor(y)

    def rule(g):
        g0 = g[0]
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for i in range(3):
            for j in range(3):
                gxp[:, :, i:i + h, j:j + wd] += g0 * w.data[None, :, i, j, None, None]
                gw[:, i, j] = (g0 * xp[:, :, i:i + h, j:j + wd]).sum(axis=(0, 2, 3))
        gb = g0.sum(axis=(0, 2, 3)) if bias is not None else None
        return gxp[:, :, 1:-1, 1:-1], gw, gb

    inputs = (x, w) if bias is None else (x, w, bias)
    record('conv_depthwise3x3', inputs, (out,), rule)
    return out

def conv2d(x: Tensor, w: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = None) -> Tensor:
    """
    Dense k x k convolution with zero padding
    :param x: [B, C, H, W]
    :param w: [C_out, C, k, k]
    :param bias: optional [C_out]
    :param stride: spatial stride
    :param padding: zero padding, defaults to k // 2
    :return: [B, C_out, H_out, W_out]
    """
    _check_map(x, 'conv2d')
    b_, c, h, wd = x.shape
    if w.ndim != 4 or w.shape[1] != c or w.shape[2] != w.shape[3]:
        raise ShapeError(f'conv2d weight {w.shape} does not match input {x.shape}')
    k = w.shape[2]
    pad = k // 2 if padding is None else padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    ho = (h + 2 * pad - k) // stride + 1
    wo = (wd + 2 * pad - k) // stride + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f'conv2d input {x.shape} too small for kernel {k} and stride {stride}')

    def patch(i, j):
        return xp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride].reshape(b_, c, ho * wo)

    y = np.zeros((b_, w.shape[0], ho * wo), dtype=np.result_type(x.data, w.data))
    for i in range(k):
        for j in range(k):
            y += np.matmul(w.data[:, :, i, j], patch(i, j))
    if bias is not None:
        y += bias.data[None, :, None]
    out = Tensor(y.reshape(b_, w.shape[0], ho, wo))

    def rule(g):
        g3 = g[0].reshape(b_, w.shape[0], ho * wo)
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(w.data)
        for i in range(k):
            for j in range(k):
                gw[:, :, i, j] = np.matmul(g3, np.swapaxes(patch(i, j), 1, 2)).sum(axis=0)
                gxp[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += \
                    np.matmul(w.data[:, :, i, j].T, g3).reshape(b_, c, ho, wo)
        gx = gxp[:, :, pad:pad + h, pad:pad + wd]
        gb = g3.sum(axis=(0, 2)) if bias is not None else None
        return gx, gw, gb

    inputs = (x, w) if bias is None else (x, w, bias)
    record('conv2d', inputs, (out,), rule)
    return out

# ---------------- Normalization ----------------

def softmax_axis(x: Tensor, axis: int) -> Tensor:
    """
    Max-subtracted softmax along `axis`
    """
    if not -x.ndim <= axis < x.ndim:
        raise ShapeError(f'softmax axis {axis} out of range for shape {x.shape}')
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = Tensor(y)

    def rule(g):
        return (y * (g[0] - (g[0] * y).sum(axis=axis, keepdims=True)),)

    record('softmax', (x,), (out,), rule)
    return out

def layernorm_channel(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Per-pixel normalization over the channel axis followed by an affine map
    :param x: [B, C, H, W]
    :param gamma: [C]
    :param beta: [C]
    :param eps: added to the variance
    :return: [B, C, H, W]
    """
    _check_map(x, 'layernorm_channel')
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f'layernorm params {gamma.shape}/{beta.shape} do not match input {x.shape}')
    mu = x.data.mean(axis=1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    out = Tensor(gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None])

    def rule(g):
        g0 = g[0]
        dxhat = g0 * gamma.data[None, :, None, None]
        gx = inv_std * (dxhat - dxhat.mean(axis=1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=1, keepdims=True))
        return gx, (g0 * xhat).sum(axis=(0, 2, 3)), g0.sum(axis=(0, 2, 3))

    record('layernorm_channel', (x, gamma, beta), (out,), rule)
    return out

def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """
    x / max(||x||, eps) along `axis`
    """
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    denom = np.maximum(norm, eps)
    y = x.data / denom
    out = Tensor(y)

    def rule(g):
        g0 = g[0]
        projected = g0 - y * (g0 * y).sum(axis=axis, keepdims=True)
        return (np.where(norm > eps, projected, g0) / denom,)

    record('l2_normalize', (x,), (out,), rule)
    return out

# ---------------- Reductions ----------------

def _normalize_axes(axis, ndim) -> tuple:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)

def reduce_sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    # float64 accumulation keeps the reduction order-independent at f32
    y = np.sum(x.data, axis=axes, dtype=np.float64, keepdims=keepdims).astype(x.data.dtype)
    out = Tensor(y)

    def rule(g):
        g0 = g[0] if keepdims else np.expand_dims(g[0], axes)
        return (np.broadcast_to(g0, x.shape).copy(),)

    record('sum', (x,), (out,), rule)
    return out

def reduce_mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axes(axis, x.ndim)
    count = int(np.prod([x.shape[a] for a in axes])) if axes else 1
    y = (np.sum(x.data, axis=axes, dtype=np.float64, keepdims=keepdims) / count).astype(x.data.dtype)
    out = Tensor(y)

    def rule(g):
        g0 = g[0] if keepdims else np.expand_dims(g[0], axes)
        return (np.broadcast_to(g0 / count, x.shape).copy(),)

    record('mean', (x,), (out,), rule)
    return out

# ---------------- Shape ----------------

def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        y = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f'cannot reshape {x.shape} into {tuple(shape)}')
    out = Tensor(y)
    record('reshape', (x,), (out,), lambda g: (g[0].reshape(x.shape),))
    return out

def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))
    out = Tensor(np.transpose(x.data, axes))
    record('transpose', (x,), (out,), lambda g: (np.transpose(g[0], inverse),))
    return out

def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)

def concat(tensors: Sequence[Tensor], axis: int) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    try:
        y = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError:
        raise ShapeError(f'cannot concatenate shapes {[t.shape for t in tensors]} along axis {axis}')
    out = Tensor(y)
    bounds = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def rule(g):
        return tuple(np.split(g[0], bounds, axis=axis))

    record('concat', tensors, (out,), rule)
    return out

def take_along_axis(x: Tensor, indices: np.ndarray, axis: int) -> Tensor:
    """
    Gathers entries of x along `axis`; indices are constants
    """
    axis = axis % x.ndim
    out = Tensor(np.take_along_axis(x.data, indices, axis=axis))

    def rule(g):
        gx = np.zeros_like(x.data)
        grid = list(np.indices(indices.shape, sparse=True))
        grid[axis] = indices
        np.add.at(gx, tuple(grid), g[0])
        return (gx,)

    record('take_along_axis', (x,), (out,), rule)
    return out

def take_rows(x: Tensor, rows: np.ndarray) -> Tensor:
    """
    x[rows] for a 2-D tensor [P, C]
    """
    out = Tensor(x.data[rows])

    def rule(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, rows, g[0])
        return (gx,)

    record('take_rows', (x,), (out,), rule)
    return out

def scatter_rows(values: Tensor, rows: np.ndarray, count: int) -> Tensor:
    """
    Adds each row of `values` into a zero [count, C] tensor at `rows`
    """
    y = np.zeros((count,) + values.shape[1:], dtype=values.data.dtype)
    np.add.at(y, rows, values.data)
    out = Tensor(y)
    record('scatter_rows', (values,), (out,), lambda g: (g[0][rows],))
    return out

def pixel_unshuffle(x: Tensor, r: int = 2) -> Tensor:
    """
    [B, C, H, W] -> [B, C*r*r, H/r, W/r], channel index c*r*r + i*r + j
    """
    _check_map(x, 'pixel_unshuffle')
    if x.shape[2] % r or x.shape[3] % r:
        raise ShapeError(f'pixel_unshuffle: spatial dims of {x.shape} not divisible by {r}')
    out = Tensor(rearrange(x.data, 'b c (h r1) (w r2) -> b (c r1 r2) h w', r1=r, r2=r))
    record('pixel_unshuffle', (x,), (out,),
           lambda g: (rearrange(g[0], 'b (c r1 r2) h w -> b c (h r1) (w r2)', r1=r, r2=r),))
    return out

def pixel_shuffle(x: Tensor, r: int = 2) -> Tensor:
    """
    Inverse of pixel_unshuffle: [B, C*r*r, H, W] -> [B, C, H*r, W*r]
    """
    _check_map(x, 'pixel_shuffle')
    if x.shape[1] % (r * r):
        raise ShapeError(f'pixel_shuffle: channels of {x.shape} not divisible by {r * r}')
    out = Tensor(rearrange(x.data, 'b (c r1 r2) h w -> b c (h r1) (w r2)', r1=r, r2=r))
    record('pixel_shuffle', (x,), (out,),
           lambda g: (rearrange(g[0], 'b c (h r1) (w r2) -> b (c r1 r2) h w', r1=r, r2=r),))
    return out
