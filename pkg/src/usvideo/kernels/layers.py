"""Fully connected, activations, dropout and batch normalization."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from usvideo.errors import ConfigurationError
from usvideo.kernels.conv import LayerGrads


def fully_connected(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """``y = W x + b`` for a vector or a (batch, in) matrix."""
    if weights.ndim != 2 or x.shape[-1] != weights.shape[1] or bias.shape != (weights.shape[0],):
        raise ConfigurationError(f"fully_connected: x {x.shape}, W {weights.shape}, b {bias.shape} disagree")
    return x @ weights.T + bias, (x, weights)


def fully_connected_backward(dout: np.ndarray, cache) -> LayerGrads:
    x, weights = cache
    x2 = x.reshape(-1, x.shape[-1])
    d2 = dout.reshape(-1, dout.shape[-1])
    return LayerGrads(dout @ weights, {"weight": d2.T @ x2, "bias": d2.sum(axis=0)})


def relu(x: np.ndarray):
    mask = x > 0
    return x * mask, mask


def relu_backward(dout: np.ndarray, mask: np.ndarray) -> np.ndarray:
    return dout * mask


def sigmoid(x: np.ndarray) -> np.ndarray:
    # split by sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None = None):
    """Inverted dropout; the identity in eval mode or at ``rate == 0``."""
    if not 0.0 <= rate < 1.0:
        raise ConfigurationError(f"dropout rate must be in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ConfigurationError("training-mode dropout needs an rng")
    scale = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * scale, scale


def dropout_backward(dout: np.ndarray, scale) -> np.ndarray:
    return dout if scale is None else dout * scale


@dataclass
class BatchNormState:
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1

    @classmethod
    def fresh(cls, channels: int, dtype=np.float64, momentum: float = 0.1) -> "BatchNormState":
        return cls(np.zeros(channels, dtype), np.ones(channels, dtype), momentum)


def batchnorm(
    x: np.ndarray,
    gamma: np.ndarray,
    beta: np.ndarray,
    eps: float = 1e-5,
    training: bool = True,
    state: BatchNormState | None = None,
):
    """Per-channel normalization of an (N, C, ...) tensor.

    Training mode uses batch statistics and, when ``state`` is given,
    updates its running mean and unbiased variance in place. Eval mode
    normalizes with the running statistics.
    """
    if x.ndim < 2 or gamma.shape != (x.shape[1],) or beta.shape != (x.shape[1],):
        raise ConfigurationError(f"batchnorm: x {x.shape} vs gamma {gamma.shape}")
    axes = (0, *range(2, x.ndim))
    bshape = (1, -1) + (1,) * (x.ndim - 2)
    count = x.size // x.shape[1]
    if training:
        if count < 2:
            raise ConfigurationError("training-mode batchnorm needs at least 2 values per channel")
        mean = x.mean(axis=axes)
        var = x.var(axis=axes)
        if state is not None:
            m = state.momentum
            state.running_mean[...] = (1 - m) * state.running_mean + m * mean
            state.running_var[...] = (1 - m) * state.running_var + m * var * count / (count - 1)
    else:
        if state is None:
            raise ConfigurationError("eval-mode batchnorm needs running statistics")
        mean, var = state.running_mean, state.running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mean.reshape(bshape)) * inv_std.reshape(bshape)
    out = gamma.reshape(bshape) * xhat + beta.reshape(bshape)
    return out, (xhat, inv_std, gamma, training, axes, bshape, count)


def batchnorm_backward(dout: np.ndarray, cache) -> LayerGrads:
    xhat, inv_std, gamma, training, axes, bshape, count = cache
    dgamma = (dout * xhat).sum(axis=axes)
    dbeta = dout.sum(axis=axes)
    dxhat = dout * gamma.reshape(bshape)
    if training:
        dx = (
            inv_std.reshape(bshape)
            / count
            * (count * dxhat - dxhat.sum(axis=axes).reshape(bshape) - xhat * (dxhat * xhat).sum(axis=axes).reshape(bshape))
        )
    else:
        dx = dxhat * inv_std.reshape(bshape)
    return LayerGrads(dx, {"gamma": dgamma, "beta": dbeta})
