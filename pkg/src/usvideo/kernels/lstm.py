"""Single-layer unidirectional LSTM with backpropagation through time.

Gate rows are stacked in the order input, forget, cell candidate, output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from usvideo.errors import ConfigurationError
from usvideo.kernels.layers import sigmoid


@dataclass
class LSTMParams:
    w_x: np.ndarray  # (4H, I)
    w_h: np.ndarray  # (4H, H)
    b: np.ndarray  # (4H,)

    @property
    def hidden(self) -> int:
        return self.w_h.shape[1]

    def as_dict(self) -> dict[str, np.ndarray]:
        return {"w_x": self.w_x, "w_h": self.w_h, "b": self.b}


def lstm_batch(inputs: np.ndarray, params: LSTMParams, lengths=None, h0=None, c0=None):
    """Run a batch of left-aligned sequences ``inputs`` (B, F, I).

    Steps at or beyond a sequence's length leave its state untouched and
    emit zeros. Returns hidden states (B, F, H) and a cache.
    """
    b_sz, steps, in_dim = inputs.shape
    hid = params.hidden
    if params.w_x.shape != (4 * hid, in_dim) or params.b.shape != (4 * hid,):
        raise ConfigurationError(f"lstm params do not match input width {in_dim} / hidden {hid}")
    h = np.zeros((b_sz, hid), inputs.dtype) if h0 is None else np.array(h0, dtype=inputs.dtype).reshape(b_sz, hid)
    c = np.zeros((b_sz, hid), inputs.dtype) if c0 is None else np.array(c0, dtype=inputs.dtype).reshape(b_sz, hid)
    if lengths is None:
        lengths = np.full(b_sz, steps)
    lengths = np.asarray(lengths)
    out = np.zeros((b_sz, steps, hid), inputs.dtype)
    # input projections for every step at once
    zx = inputs @ params.w_x.T + params.b
    steps_cache = []
    for t in range(steps):
        m = (t < lengths)[:, None]
        z = zx[:, t] + h @ params.w_h.T
        i = sigmoid(z[:, :hid])
        f = sigmoid(z[:, hid : 2 * hid])
        g = np.tanh(z[:, 2 * hid : 3 * hid])
        o = sigmoid(z[:, 3 * hid :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps_cache.append((h, c, i, f, g, o, tc, m))
        c = np.where(m, c_new, c)
        h = np.where(m, h_new, h)
        out[:, t] = h_new * m
    return out, (inputs, params, steps_cache)


def lstm_batch_backward(dout: np.ndarray, cache):
    """Returns ``(d_inputs, d_params, d_h0, d_c0)``."""
    inputs, params, steps_cache = cache
    hid = params.hidden
    b_sz, steps, _ = inputs.shape
    dz_all = np.zeros((b_sz, steps, 4 * hid), inputs.dtype)
    d_wh = np.zeros_like(params.w_h)
    dh_next = np.zeros((b_sz, hid), inputs.dtype)
    dc_next = np.zeros((b_sz, hid), inputs.dtype)
    for t in reversed(range(steps)):
        h_prev, c_prev, i, f, g, o, tc, m = steps_cache[t]
        dh = dout[:, t] * m + dh_next
        dc = dc_next + dh * o * (1.0 - tc**2)
        dz = np.concatenate(
            [dc * g * i * (1 - i), dc * c_prev * f * (1 - f), dc * i * (1 - g**2), dh * tc * o * (1 - o)], axis=1
        )
        dz *= m
        dz_all[:, t] = dz
        d_wh += dz.T @ h_prev
        dh_next = np.where(m, dz @ params.w_h, dh_next)
        dc_next = np.where(m, dc * f, dc_next)
    flat_dz = dz_all.reshape(-1, 4 * hid)
    d_params = {
        "w_x": flat_dz.T @ inputs.reshape(-1, inputs.shape[-1]),
        "w_h": d_wh,
        "b": flat_dz.sum(axis=0),
    }
    return dz_all @ params.w_x, d_params, dh_next, dc_next


def lstm_sequence(inputs: np.ndarray, params: LSTMParams, h0=None, c0=None):
    """One sequence (F, I) -> hidden state at every step (F, H)."""
    if inputs.ndim != 2 or inputs.shape[0] < 1:
        raise ConfigurationError(f"expected (F, I) input with F >= 1, got {inputs.shape}")
    for name, s in (("h0", h0), ("c0", c0)):
        if s is not None and np.shape(s) != (params.hidden,):
            raise ConfigurationError(f"{name} must have shape ({params.hidden},), got {np.shape(s)}")
    out, cache = lstm_batch(inputs[None], params, None, h0, c0)
    return out[0], cache


def lstm_sequence_backward(dout: np.ndarray, cache):
    dx, d_params, dh0, dc0 = lstm_batch_backward(dout[None], cache)
    return dx[0], d_params, dh0[0], dc0[0]
