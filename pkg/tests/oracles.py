"""Brute-force reference implementations, deliberately loop-based."""

import itertools
import math

import numpy as np


def direct_conv(x, w, b, stride, padding):
    """Cross-correlation of a single (C, *spatial) input by explicit summation."""
    nd = x.ndim - 1
    c_in = x.shape[0]
    c_out = w.shape[0]
    kernel = w.shape[2:]
    out_sp = [(n + 2 * p - k) // s + 1 for n, k, s, p in zip(x.shape[1:], kernel, stride, padding)]
    out = np.zeros([c_out, *out_sp])
    for o in range(c_out):
        for pos in itertools.product(*(range(e) for e in out_sp)):
            total = 0.0 if b is None else b[o]
            for c in range(c_in):
                for off in itertools.product(*(range(k) for k in kernel)):
                    src = [p * s + q - pad for p, s, q, pad in zip(pos, stride, off, padding)]
                    if all(0 <= v < n for v, n in zip(src, x.shape[1:])):
                        total += w[(o, c, *off)] * x[(c, *src)]
            out[(o, *pos)] = total
    return out


def window_max(x, window, stride):
    c = x.shape[0]
    out_sp = [(n - k) // s + 1 for n, k, s in zip(x.shape[1:], window, stride)]
    out = np.zeros([c, *out_sp])
    for ch in range(c):
        for pos in itertools.product(*(range(e) for e in out_sp)):
            best = -np.inf
            for off in itertools.product(*(range(k) for k in window)):
                best = max(best, x[(ch, *[p * s + q for p, s, q in zip(pos, stride, off)])])
            out[(ch, *pos)] = best
    return out


def pyramid(x):
    c, d, h, w = x.shape
    bins = lambda e: [(math.floor(i * e / 2), math.ceil((i + 1) * e / 2)) for i in range(2)]
    level2 = []
    for ch in range(c):
        for d0, d1 in bins(d):
            for h0, h1 in bins(h):
                for w0, w1 in bins(w):
                    best = -np.inf
                    for i in range(d0, d1):
                        for j in range(h0, h1):
                            for k in range(w0, w1):
                                best = max(best, x[ch, i, j, k])
                    level2.append(best)
    glob = [max(x[ch].ravel()) for ch in range(c)]
    return np.concatenate([x.ravel(), level2, glob])


def lstm_cell(x, h, c, w_x, w_h, b):
    hid = h.shape[0]
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))
    z = [sum(w_x[r, j] * x[j] for j in range(x.shape[0])) + sum(w_h[r, j] * h[j] for j in range(hid)) + b[r]
         for r in range(4 * hid)]
    i = [sig(z[r]) for r in range(hid)]
    f = [sig(z[hid + r]) for r in range(hid)]
    g = [math.tanh(z[2 * hid + r]) for r in range(hid)]
    o = [sig(z[3 * hid + r]) for r in range(hid)]
    c_new = [f[r] * c[r] + i[r] * g[r] for r in range(hid)]
    h_new = [o[r] * math.tanh(c_new[r]) for r in range(hid)]
    return np.array(h_new), np.array(c_new)
