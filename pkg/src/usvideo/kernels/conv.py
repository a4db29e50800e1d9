"""2D/3D cross-correlation via chunked im2col."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from usvideo.errors import ConfigurationError

# cap on the im2col buffer per chunk, in elements
_COL_BUDGET = 8_000_000


class LayerGrads(NamedTuple):
    d_input: np.ndarray
    d_params: dict[str, np.ndarray]


def _tuple(v, nd: int) -> tuple[int, ...]:
    if isinstance(v, int):
        return (v,) * nd
    v = tuple(int(a) for a in v)
    if len(v) != nd:
        raise ConfigurationError(f"expected {nd} values, got {v}")
    return v


@dataclass(frozen=True)
class ConvSpec:
    kernel: tuple[int, ...]
    stride: tuple[int, ...] = field(default=None)  # type: ignore[assignment]
    padding: tuple[int, ...] = field(default=None)  # type: ignore[assignment]
    in_channels: int = 1
    out_channels: int = 1

    def __post_init__(self):
        kernel = self.kernel if not isinstance(self.kernel, int) else (self.kernel,)
        nd = len(kernel)
        if nd not in (2, 3):
            raise ConfigurationError(f"kernel must have 2 or 3 axes, got {self.kernel}")
        object.__setattr__(self, "kernel", _tuple(kernel, nd))
        object.__setattr__(self, "stride", _tuple(1 if self.stride is None else self.stride, nd))
        object.__setattr__(self, "padding", _tuple(0 if self.padding is None else self.padding, nd))
        if min(self.kernel) < 1 or min(self.stride) < 1 or min(self.padding) < 0:
            raise ConfigurationError(f"invalid conv geometry {self}")
        if self.in_channels < 1 or self.out_channels < 1:
            raise ConfigurationError("channel counts must be positive")

    @property
    def ndim(self) -> int:
        return len(self.kernel)

    @property
    def weight_shape(self) -> tuple[int, ...]:
        return (self.out_channels, self.in_channels, *self.kernel)

    def output_shape(self, spatial) -> tuple[int, ...]:
        spatial = tuple(spatial)
        if len(spatial) != self.ndim:
            raise ConfigurationError(f"input has {len(spatial)} spatial axes, spec expects {self.ndim}")
        out = tuple((n + 2 * p - k) // s + 1 for n, k, s, p in zip(spatial, self.kernel, self.stride, self.padding))
        if min(out) < 1 or any(n + 2 * p < k for n, k, p in zip(spatial, self.kernel, self.padding)):
            raise ConfigurationError(f"kernel {self.kernel} does not fit input {spatial} with padding {self.padding}")
        return out


def _columns(xp: np.ndarray, spec: ConvSpec, out_sp: tuple[int, ...]) -> np.ndarray:
    nd = spec.ndim
    axes = tuple(range(2, 2 + nd))
    win = sliding_window_view(xp, spec.kernel, axis=axes)
    win = win[(slice(None), slice(None)) + tuple(slice(None, s * (o - 1) + 1, s) for s, o in zip(spec.stride, out_sp))]
    # (N, C, *out, *k) -> (N, *out, C, *k)
    order = (0, *range(2, 2 + nd), 1, *range(2 + nd, 2 + 2 * nd))
    cols = win.transpose(order)
    n = xp.shape[0]
    return cols.reshape(n * int(np.prod(out_sp)), -1)


def _pad(x: np.ndarray, padding: tuple[int, ...]) -> np.ndarray:
    if not any(padding):
        return x
    return np.pad(x, ((0, 0), (0, 0)) + tuple((p, p) for p in padding))


def _chunks(n: int, per_sample: int):
    step = max(1, _COL_BUDGET // max(per_sample, 1))
    for start in range(0, n, step):
        yield slice(start, min(n, start + step))


def conv_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray | None, spec: ConvSpec):
    """Batched cross-correlation. ``x`` is (N, C, *spatial); returns ``(out, cache)``."""
    nd = spec.ndim
    if x.ndim != nd + 2:
        raise ConfigurationError(f"expected input of rank {nd + 2}, got shape {x.shape}")
    if x.shape[1] != spec.in_channels:
        raise ConfigurationError(f"input has {x.shape[1]} channels, spec expects {spec.in_channels}")
    if weights.shape != spec.weight_shape:
        raise ConfigurationError(f"weights {weights.shape} do not match spec {spec.weight_shape}")
    out_sp = spec.output_shape(x.shape[2:])
    n = x.shape[0]
    xp = _pad(x, spec.padding)
    w2 = weights.reshape(spec.out_channels, -1)
    out = np.empty((n, *out_sp, spec.out_channels), dtype=np.result_type(x, weights))
    per_sample = int(np.prod(out_sp)) * w2.shape[1]
    for sl in _chunks(n, per_sample):
        cols = _columns(xp[sl], spec, out_sp)
        out[sl] = (cols @ w2.T).reshape(sl.stop - sl.start, *out_sp, spec.out_channels)
    if bias is not None:
        out += bias
    out = np.moveaxis(out, -1, 1)
    return np.ascontiguousarray(out), (x, weights, bias is not None, spec)


def conv_backward(dout: np.ndarray, cache) -> LayerGrads:
    x, weights, has_bias, spec = cache
    nd = spec.ndim
    if dout.ndim == nd + 1:
        grads = conv_backward(dout[None], cache)
        return LayerGrads(grads.d_input[0], grads.d_params)
    n = x.shape[0]
    out_sp = dout.shape[2:]
    xp = _pad(x, spec.padding)
    w2 = weights.reshape(spec.out_channels, -1)
    d_out = np.moveaxis(dout, 1, -1)  # (N, *out, O)
    dw = np.zeros_like(w2)
    dxp = np.zeros_like(xp)
    per_sample = int(np.prod(out_sp)) * w2.shape[1]
    for sl in _chunks(n, per_sample):
        m = sl.stop - sl.start
        dy = d_out[sl].reshape(-1, spec.out_channels)
        dw += dy.T @ _columns(xp[sl], spec, out_sp)
        # column gradients laid out (C, K, m, *out): each kernel offset is a contiguous block per channel
        dcols = (w2.T @ dy.T).reshape(spec.in_channels, -1, m, *out_sp)
        target = dxp[sl]
        for j, offset in enumerate(itertools.product(*(range(k) for k in spec.kernel))):
            region = (slice(None), slice(None)) + tuple(
                slice(o, o + s * (e - 1) + 1, s) for o, s, e in zip(offset, spec.stride, out_sp)
            )
            target[region] += dcols[:, j].swapaxes(0, 1)
    if any(spec.padding):
        crop = (slice(None), slice(None)) + tuple(slice(p, p + e) for p, e in zip(spec.padding, x.shape[2:]))
        dx = dxp[crop]
    else:
        dx = dxp
    grads = {"weight": dw.reshape(weights.shape)}
    if has_bias:
        grads["bias"] = dout.sum(axis=(0, *range(2, 2 + nd)))
    return LayerGrads(np.ascontiguousarray(dx), grads)


def _single_or_batch(fn_nd: int, x, weights, bias, spec: ConvSpec):
    if spec.ndim != fn_nd:
        raise ConfigurationError(f"spec has {spec.ndim} kernel axes, expected {fn_nd}")
    if x.ndim == fn_nd + 1:
        out, cache = conv_forward(x[None], weights, bias, spec)
        return out[0], cache
    return conv_forward(x, weights, bias, spec)


def conv3d(x: np.ndarray, spec: ConvSpec, weights: np.ndarray, bias: np.ndarray | None = None):
    """3D conv on (C, D, H, W) or batched (N, C, D, H, W) input."""
    return _single_or_batch(3, x, weights, bias, spec)


def conv2d(x: np.ndarray, spec: ConvSpec, weights: np.ndarray, bias: np.ndarray | None = None):
    """2D conv on (C, H, W) or batched (N, C, H, W) input."""
    return _single_or_batch(2, x, weights, bias, spec)
