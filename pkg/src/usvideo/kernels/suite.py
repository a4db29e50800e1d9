"""Finite-difference checks for every differentiable kernel.

Each case builds random inputs from a seed, wraps the forward pass in a
scalar ``sum(out * upstream)`` and compares the kernel's backward pass
against central differences. Max-pool and SPP inputs are well-separated
distinct values and ReLU inputs stay away from zero, so no perturbation
crosses a kink.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from usvideo.kernels.conv import ConvSpec, conv_backward, conv_forward
from usvideo.kernels.gradcheck import GradCheckReport, grad_check
from usvideo.kernels.layers import (
    BatchNormState,
    batchnorm,
    batchnorm_backward,
    dropout,
    dropout_backward,
    fully_connected,
    fully_connected_backward,
    relu,
    relu_backward,
    sigmoid,
)
from usvideo.kernels.losses import (
    bce_logit_grad,
    bce_loss,
    cosine_consistency_backward,
    cosine_consistency_loss,
    mse_backward,
    mse_loss,
)
from usvideo.kernels.lstm import LSTMParams, lstm_sequence, lstm_sequence_backward
from usvideo.kernels.pooling import maxpool3d, maxpool3d_backward, spp3d, spp3d_backward


@dataclass
class SuiteResult:
    name: str
    seed: int
    report: GradCheckReport


def _separated(rng, shape) -> np.ndarray:
    n = int(np.prod(shape))
    return (rng.permutation(n) * 0.01 + rng.uniform(-0.002, 0.002, n)).reshape(shape) - n * 0.005


def _away_from_zero(rng, shape) -> np.ndarray:
    return rng.uniform(0.1, 1.0, shape) * rng.choice([-1.0, 1.0], shape)


def _linear_case(forward, backward, params: dict[str, np.ndarray], rng):
    """Scalar ``sum(forward(params) * R)`` plus its analytic gradient."""
    out, cache = forward(params)
    upstream = rng.standard_normal(out.shape)
    analytic = backward(upstream, cache)

    def f():
        return float(np.sum(forward(params)[0] * upstream))

    return f, analytic


def _conv3d(rng):
    spec = ConvSpec((3, 3, 3), (1, 2, 2), (1, 1, 1), 2, 3)
    p = {"x": rng.standard_normal((2, 2, 4, 5, 5)), "weight": rng.standard_normal(spec.weight_shape),
         "bias": rng.standard_normal(3)}

    def bwd(d, cache):
        g = conv_backward(d, cache)
        return {"x": g.d_input, **g.d_params}

    return p, *_linear_case(lambda q: conv_forward(q["x"], q["weight"], q["bias"], spec), bwd, p, rng)


def _conv2d(rng):
    spec = ConvSpec((3, 3), (2, 2), (0, 0), 3, 2)
    p = {"x": rng.standard_normal((2, 3, 7, 7)), "weight": rng.standard_normal(spec.weight_shape),
         "bias": rng.standard_normal(2)}

    def bwd(d, cache):
        g = conv_backward(d, cache)
        return {"x": g.d_input, **g.d_params}

    return p, *_linear_case(lambda q: conv_forward(q["x"], q["weight"], q["bias"], spec), bwd, p, rng)


def _batchnorm(training: bool):
    def case(rng):
        p = {"x": rng.standard_normal((3, 2, 2, 3, 3)) * 2 + 1, "gamma": rng.uniform(0.5, 1.5, 2),
             "beta": rng.standard_normal(2)}
        state = BatchNormState(rng.standard_normal(2), rng.uniform(0.5, 2.0, 2))

        def fwd(q):
            # a copy keeps running statistics fixed across perturbations
            st = BatchNormState(state.running_mean.copy(), state.running_var.copy())
            return batchnorm(q["x"], q["gamma"], q["beta"], 1e-5, training, st)

        def bwd(d, cache):
            g = batchnorm_backward(d, cache)
            return {"x": g.d_input, **g.d_params}

        return p, *_linear_case(fwd, bwd, p, rng)

    return case


def _maxpool(rng):
    p = {"x": _separated(rng, (2, 2, 4, 4, 5))}
    return p, *_linear_case(lambda q: maxpool3d(q["x"], 2, 2), lambda d, c: {"x": maxpool3d_backward(d, c)}, p, rng)


def _spp(rng):
    p = {"x": _separated(rng, (2, 2, 2, 3, 3))}
    return p, *_linear_case(lambda q: spp3d(q["x"]), lambda d, c: {"x": spp3d_backward(d, c)}, p, rng)


def _fully_connected(rng):
    p = {"x": rng.standard_normal((3, 6)), "weight": rng.standard_normal((4, 6)), "bias": rng.standard_normal(4)}

    def bwd(d, cache):
        g = fully_connected_backward(d, cache)
        return {"x": g.d_input, **g.d_params}

    return p, *_linear_case(lambda q: fully_connected(q["x"], q["weight"], q["bias"]), bwd, p, rng)


def _relu(rng):
    p = {"x": _away_from_zero(rng, (4, 5))}
    return p, *_linear_case(lambda q: relu(q["x"]), lambda d, m: {"x": relu_backward(d, m)}, p, rng)


def _sigmoid(rng):
    p = {"x": rng.standard_normal((4, 5)) * 3}

    def fwd(q):
        s = sigmoid(q["x"])
        return s, s

    return p, *_linear_case(fwd, lambda d, s: {"x": d * s * (1 - s)}, p, rng)


def _dropout(rng):
    p = {"x": rng.standard_normal((4, 6))}
    seed = int(rng.integers(1 << 31))
    fwd = lambda q: dropout(q["x"], 0.5, True, np.random.default_rng(seed))
    return p, *_linear_case(fwd, lambda d, s: {"x": dropout_backward(d, s)}, p, rng)


def _lstm(rng):
    hid, inp = 3, 5
    p = {"inputs": rng.standard_normal((4, inp)), "w_x": rng.standard_normal((4 * hid, inp)) * 0.5,
         "w_h": rng.standard_normal((4 * hid, hid)) * 0.5, "b": rng.standard_normal(4 * hid) * 0.5,
         "h0": rng.standard_normal(hid) * 0.5, "c0": rng.standard_normal(hid) * 0.5}

    def fwd(q):
        return lstm_sequence(q["inputs"], LSTMParams(q["w_x"], q["w_h"], q["b"]), q["h0"], q["c0"])

    def bwd(d, cache):
        dx, dp, dh0, dc0 = lstm_sequence_backward(d, cache)
        return {"inputs": dx, **dp, "h0": dh0, "c0": dc0}

    return p, *_linear_case(fwd, bwd, p, rng)


def _bce(rng):
    p = {"logits": rng.standard_normal(6) * 2}
    y = rng.integers(0, 2, 6).astype(float)
    f = lambda: bce_loss(sigmoid(p["logits"]), y)
    return p, f, {"logits": bce_logit_grad(sigmoid(p["logits"]), y)}


def _mse(rng):
    p = {"pred": rng.uniform(0, 1, 7)}
    target = rng.uniform(0, 1, 7)
    return p, lambda: mse_loss(p["pred"], target), {"pred": mse_backward(p["pred"], target)}


def _cosine(rng):
    p = {"v_temp": rng.uniform(0.1, 2.0, (3, 8))}
    motion = rng.uniform(0.1, 1.0, (3, 8))
    f = lambda: cosine_consistency_loss(p["v_temp"], motion)
    return p, f, {"v_temp": cosine_consistency_backward(p["v_temp"], motion)}


KERNEL_CASES: dict[str, Callable] = {
    "conv3d": _conv3d,
    "conv2d": _conv2d,
    "batchnorm3d_train": _batchnorm(True),
    "batchnorm3d_eval": _batchnorm(False),
    "maxpool3d": _maxpool,
    "spp3d": _spp,
    "fully_connected": _fully_connected,
    "relu": _relu,
    "sigmoid": _sigmoid,
    "dropout": _dropout,
    "lstm_sequence": _lstm,
    "bce_loss": _bce,
    "mse_loss": _mse,
    "cosine_consistency_loss": _cosine,
}


def check_kernel(name: str, seed: int, h: float = 1e-5, tolerance: float = 1e-4) -> GradCheckReport:
    params, f, analytic = KERNEL_CASES[name](np.random.default_rng(seed))
    return grad_check(f, params, analytic, h=h, tolerance=tolerance)


def run_kernel_suite(seeds=range(5), h: float = 1e-5, tolerance: float = 1e-4) -> list[SuiteResult]:
    return [SuiteResult(name, s, check_kernel(name, s, h, tolerance)) for name in KERNEL_CASES for s in seeds]
