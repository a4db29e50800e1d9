"""Max pooling and three-level 3D spatial pyramid pooling."""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from usvideo.errors import ConfigurationError


def _batched(x: np.ndarray, rank: int) -> tuple[np.ndarray, bool]:
    if x.ndim == rank:
        return x[None], True
    if x.ndim == rank + 1:
        return x, False
    raise ConfigurationError(f"expected rank {rank} or {rank + 1} input, got shape {x.shape}")


def maxpool3d(x: np.ndarray, window=(2, 2, 2), stride=None, arg: np.ndarray | None = None):
    """Max over each window of a (C, D, H, W) or (N, C, D, H, W) map.

    Output extents use floor semantics; a trailing remainder is dropped.
    The gradient of a tied window goes to its first row-major maximizer.
    A given ``arg`` (from an earlier call's cache) pins which element each
    window selects.
    """
    window = (window,) * 3 if isinstance(window, int) else tuple(window)
    stride = window if stride is None else ((stride,) * 3 if isinstance(stride, int) else tuple(stride))
    xb, single = _batched(x, 4)
    spatial = xb.shape[2:]
    if any(k > n for k, n in zip(window, spatial)):
        raise ConfigurationError(f"pool window {window} larger than input {spatial}")
    out_sp = tuple((n - k) // s + 1 for n, k, s in zip(spatial, window, stride))
    win = sliding_window_view(xb, window, axis=(2, 3, 4))
    win = win[:, :, :: stride[0], :: stride[1], :: stride[2]]
    flat = win.reshape(*win.shape[:5], -1)
    if arg is None:
        arg = flat.argmax(axis=-1)
    out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    cache = (xb.shape, window, stride, arg, single)
    return (out[0] if single else out), cache


def maxpool3d_backward(dout: np.ndarray, cache) -> np.ndarray:
    shape, window, stride, arg, single = cache
    if single:
        dout = dout[None]
    n, c = shape[:2]
    kd, kh, kw = np.unravel_index(arg, window)
    od, oh, ow = np.meshgrid(*(np.arange(e) for e in arg.shape[2:]), indexing="ij")
    d = od * stride[0] + kd
    h = oh * stride[1] + kh
    w = ow * stride[2] + kw
    nn, cc = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
    idx = (nn[:, :, None, None, None], cc[:, :, None, None, None], d, h, w)
    dx = np.zeros(shape, dtype=dout.dtype)
    np.add.at(dx, idx, dout)
    return dx[0] if single else dx


def _bins(extent: int, levels: int = 2) -> list[tuple[int, int]]:
    return [(math.floor(i * extent / levels), math.ceil((i + 1) * extent / levels)) for i in range(levels)]


def spp_length(channels: int, spatial) -> int:
    d, h, w = spatial
    return channels * (d * h * w + 8 + 1)


def spp3d(x: np.ndarray, pinned=None):
    """Concatenate the raw map, a 2x2x2 adaptive max pool and a global max.

    Per sample the layout is ``[C*D*H*W | C*8 | C]``, each part flattened in
    row-major (channel-first) order. ``pinned`` (an earlier call's cache)
    fixes the selected maxima.
    """
    xb, single = _batched(x, 4)
    n, c, d, h, w = xb.shape
    if min(d, h, w) < 2:
        raise ConfigurationError(f"spp needs every extent >= 2, got {(d, h, w)}")
    pooled = np.empty((n, c, 2, 2, 2), dtype=xb.dtype)
    argmaxes = {}
    for i, (d0, d1) in enumerate(_bins(d)):
        for j, (h0, h1) in enumerate(_bins(h)):
            for k, (w0, w1) in enumerate(_bins(w)):
                block = xb[:, :, d0:d1, h0:h1, w0:w1].reshape(n, c, -1)
                a = block.argmax(axis=-1) if pinned is None else pinned[1][(i, j, k)][3]
                pooled[:, :, i, j, k] = np.take_along_axis(block, a[..., None], axis=-1)[..., 0]
                argmaxes[(i, j, k)] = ((d0, d1), (h0, h1), (w0, w1), a)
    flat_all = xb.reshape(n, c, -1)
    g = flat_all.argmax(axis=-1) if pinned is None else pinned[2]
    glob = np.take_along_axis(flat_all, g[..., None], axis=-1)[..., 0]
    out = np.concatenate([xb.reshape(n, -1), pooled.reshape(n, -1), glob], axis=1)
    cache = (xb.shape, argmaxes, g, single)
    return (out[0] if single else out), cache


def spp3d_backward(dout: np.ndarray, cache) -> np.ndarray:
    shape, argmaxes, g, single = cache
    if single:
        dout = dout[None]
    n, c, d, h, w = shape
    size = c * d * h * w
    dx = dout[:, :size].reshape(shape).copy()
    d_pooled = dout[:, size : size + 8 * c].reshape(n, c, 2, 2, 2)
    d_glob = dout[:, size + 8 * c :]
    rows, cols = np.meshgrid(np.arange(n), np.arange(c), indexing="ij")
    for (i, j, k), ((d0, d1), (h0, h1), (w0, w1), a) in argmaxes.items():
        ad, ah, aw = np.unravel_index(a, (d1 - d0, h1 - h0, w1 - w0))
        np.add.at(dx, (rows, cols, ad + d0, ah + h0, aw + w0), d_pooled[:, :, i, j, k])
    gd, gh, gw = np.unravel_index(g, (d, h, w))
    np.add.at(dx, (rows, cols, gd, gh, gw), d_glob)
    return dx[0] if single else dx
