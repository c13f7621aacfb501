"""Differentiable layer ops: convolution (direct and transposed), pooling,
activations, batch normalization, concat/add plumbing.

Convolution is cross-correlation, computed by lowering windows to columns
(a strided view reshaped into a matrix) and letting BLAS do the contraction.
The input gradient is the standard transposed form: the upstream gradient is
zero-stuffed by the stride and fully correlated with the flipped kernel.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError
from .tensor import Tensor, make_result


def _im2col(xp: np.ndarray, kh: int, kw: int, sh: int, sw: int,
            dh: int, dw: int, oh: int, ow: int) -> np.ndarray:
    n, c = xp.shape[:2]
    s0, s1, s2, s3 = xp.strides
    view = np.lib.stride_tricks.as_strided(
        xp, (n, c, kh, kw, oh, ow),
        (s0, s1, s2 * dh, s3 * dw, s2 * sh, s3 * sw), writeable=False)
    return np.ascontiguousarray(view).reshape(n, c * kh * kw, oh * ow)


def _corr(x: np.ndarray, w: np.ndarray, stride: int, dilation: int, pad: int):
    """Raw cross-correlation. Returns (y, columns, padded input shape)."""
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if cw != c:
        raise InvalidInputError(f"channel mismatch: input {c}, kernel {cw}")
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    hp, wp = xp.shape[2], xp.shape[3]
    eh = dilation * (kh - 1) + 1
    ew = dilation * (kw - 1) + 1
    if hp < eh or wp < ew:
        raise InvalidInputError("kernel footprint exceeds padded input")
    oh = (hp - eh) // stride + 1
    ow = (wp - ew) // stride + 1
    cols = _im2col(xp, kh, kw, stride, stride, dilation, dilation, oh, ow)
    y = np.matmul(w.reshape(f, -1), cols).reshape(n, f, oh, ow)
    return y, cols, (hp, wp)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None,
           stride: int = 1, dilation: int = 1) -> Tensor:
    """2-d cross-correlation with same-style zero padding for stride 1
    (pad = dilation*(k-1)//2, exact for odd kernels)."""
    xd, wd = x.data, w.data
    if xd.ndim != 4 or wd.ndim != 4:
        raise InvalidInputError("conv2d expects NCHW input and FCKK weights")
    f, _, kh, kw = wd.shape
    if kh != kw:
        raise InvalidInputError("only square kernels supported")
    if b is not None and b.data.shape != (f,):
        raise InvalidInputError("bias must have one entry per output channel")
    pad = dilation * (kh - 1) // 2
    y, cols, (hp, wp) = _corr(xd, wd, stride, dilation, pad)
    if b is not None:
        y = y + b.data[None, :, None, None]
    n, _, oh, ow = y.shape
    h, wdt = xd.shape[2], xd.shape[3]

    def backward(gy):
        gy_flat = gy.reshape(n, f, oh * ow)
        gw = np.einsum("nfl,nkl->fk", gy_flat, cols).reshape(wd.shape)
        gb = None if b is None else gy.sum(axis=(0, 2, 3))
        # input gradient: zero-stuff by stride, full-correlate flipped kernel
        if stride > 1:
            gys = np.zeros((n, f, (oh - 1) * stride + 1, (ow - 1) * stride + 1),
                           dtype=gy.dtype)
            gys[:, :, ::stride, ::stride] = gy
        else:
            gys = gy
        wflip = wd[:, :, ::-1, ::-1].swapaxes(0, 1)
        gxp, _, _ = _corr(gys, wflip, 1, dilation, dilation * (kh - 1))
        if gxp.shape[2] < hp or gxp.shape[3] < wp:
            gxp = np.pad(gxp, ((0, 0), (0, 0),
                               (0, hp - gxp.shape[2]), (0, wp - gxp.shape[3])))
        gx = gxp[:, :, pad:pad + h, pad:pad + wdt]
        parents_grads = [gx, gw]
        if b is not None:
            parents_grads.append(gb)
        return parents_grads

    parents = [x, w] + ([b] if b is not None else [])
    return make_result(y, parents, backward)


def conv_transpose2d(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """Stride-2 transposed convolution with a 2x2 kernel: each input pixel
    scatters its 2x2 weighted copy, doubling H and W. Weights are (C, F, 2, 2)."""
    xd, wd = x.data, w.data
    if wd.ndim != 4 or wd.shape[2:] != (2, 2):
        raise InvalidInputError("conv_transpose2d expects (C, F, 2, 2) weights")
    n, c, h, wdt = xd.shape
    if wd.shape[0] != c:
        raise InvalidInputError(f"channel mismatch: input {c}, kernel {wd.shape[0]}")
    f = wd.shape[1]
    y = np.zeros((n, f, 2 * h, 2 * wdt), dtype=xd.dtype)
    for a in (0, 1):
        for bb in (0, 1):
            y[:, :, a::2, bb::2] = np.tensordot(xd, wd[:, :, a, bb],
                                                axes=([1], [0])).transpose(0, 3, 1, 2)
    if b is not None:
        if b.data.shape != (f,):
            raise InvalidInputError("bias must have one entry per output channel")
        y = y + b.data[None, :, None, None]

    def backward(gy):
        gx = np.zeros_like(xd)
        gw = np.zeros_like(wd)
        for a in (0, 1):
            for bb in (0, 1):
                gyab = gy[:, :, a::2, bb::2]
                gx += np.tensordot(gyab, wd[:, :, a, bb],
                                   axes=([1], [1])).transpose(0, 3, 1, 2)
                gw[:, :, a, bb] = np.tensordot(xd, gyab,
                                               axes=([0, 2, 3], [0, 2, 3]))
        out = [gx, gw]
        if b is not None:
            out.append(gy.sum(axis=(0, 2, 3)))
        return out

    parents = [x, w] + ([b] if b is not None else [])
    return make_result(y, parents, backward)


def maxpool2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2; gradient routes to the argmax (first
    occurrence on ties)."""
    xd = x.data
    n, c, h, w = xd.shape
    if h % 2 or w % 2:
        raise InvalidInputError(f"maxpool2 needs even spatial dims, got {h}x{w}")
    blocks = xd.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    flat = blocks.reshape(n, c, h // 2, w // 2, 4)
    idx = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, idx[..., None], axis=-1)[..., 0]

    def backward(gy):
        gflat = np.zeros_like(flat)
        np.put_along_axis(gflat, idx[..., None], gy[..., None], axis=-1)
        gx = gflat.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        return [gx.reshape(n, c, h, w)]

    return make_result(y, [x], backward)


def relu(x: Tensor) -> Tensor:
    y = np.maximum(x.data, 0)

    def backward(gy):
        return [gy * (x.data > 0)]

    return make_result(y, [x], backward)


def sigmoid(x: Tensor) -> Tensor:
    xd = x.data
    y = np.empty_like(xd)
    pos = xd >= 0
    y[pos] = 1.0 / (1.0 + np.exp(-xd[pos]))
    ex = np.exp(xd[~pos])
    y[~pos] = ex / (1.0 + ex)

    def backward(gy):
        return [gy * y * (1.0 - y)]

    return make_result(y, [x], backward)


@dataclass
class BatchNormState:
    """Per-channel affine parameters plus running statistics."""
    gamma: Tensor
    beta: Tensor
    running_mean: np.ndarray
    running_var: np.ndarray
    eps: float = 1e-5
    momentum: float = 0.1

    @classmethod
    def create(cls, channels: int, dtype=np.float32) -> "BatchNormState":
        return cls(gamma=Tensor(np.ones(channels, dtype=dtype), requires_grad=True),
                   beta=Tensor(np.zeros(channels, dtype=dtype), requires_grad=True),
                   running_mean=np.zeros(channels, dtype=dtype),
                   running_var=np.ones(channels, dtype=dtype))


def batchnorm(x: Tensor, state: BatchNormState, training: bool) -> Tensor:
    """Channel-wise normalization. Train mode normalizes with batch moments
    (biased variance) and updates the running statistics; eval mode uses the
    stored running statistics."""
    xd = x.data
    c = xd.shape[1]
    if state.gamma.data.shape != (c,):
        raise InvalidInputError(f"batchnorm state is for {state.gamma.data.shape[0]} "
                                f"channels, input has {c}")
    gamma, beta = state.gamma, state.beta
    if training:
        mean = xd.mean(axis=(0, 2, 3))
        var = xd.var(axis=(0, 2, 3))
        state.running_mean *= (1.0 - state.momentum)
        state.running_mean += state.momentum * mean.astype(state.running_mean.dtype)
        state.running_var *= (1.0 - state.momentum)
        state.running_var += state.momentum * var.astype(state.running_var.dtype)
    else:
        mean = state.running_mean.astype(xd.dtype)
        var = state.running_var.astype(xd.dtype)
    inv = 1.0 / np.sqrt(var + state.eps)
    xhat = (xd - mean[None, :, None, None]) * inv[None, :, None, None]
    y = gamma.data[None, :, None, None] * xhat + beta.data[None, :, None, None]
    m = xd.shape[0] * xd.shape[2] * xd.shape[3]

    def backward(gy):
        ggamma = (gy * xhat).sum(axis=(0, 2, 3))
        gbeta = gy.sum(axis=(0, 2, 3))
        gxhat = gy * gamma.data[None, :, None, None]
        if training:
            # mean/var both depend on x
            gx = (inv[None, :, None, None] / m) * (
                m * gxhat
                - gxhat.sum(axis=(0, 2, 3))[None, :, None, None]
                - xhat * (gxhat * xhat).sum(axis=(0, 2, 3))[None, :, None, None])
        else:
            gx = gxhat * inv[None, :, None, None]
        return [gx, ggamma, gbeta]

    return make_result(y, [x, gamma, beta], backward)


def concat(tensors: list[Tensor], axis: int = 1) -> Tensor:
    y = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def backward(gy):
        return np.split(gy, splits, axis=axis)

    return make_result(y, list(tensors), backward)


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.data.shape != b.data.shape:
        raise InvalidInputError("add expects equal shapes")
    y = a.data + b.data

    def backward(gy):
        return [gy, gy]

    return make_result(y, [a, b], backward)
