"""Lightweight 3D CNN with a motion-attention branch and a 3D SPP head.

Four conv3d + batch-norm + ReLU blocks, max pooling after the third and
fourth block, then SPP (or a plain flatten), fc1 + ReLU, dropout, and a
single sigmoid logit. After the first pooling a small 2D conv branch reads
every temporal slice of the feature map and emits one weight per slice in
(0, 2); the map is multiplied by these weights before conv4.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from typing import NamedTuple

import numpy as np

from usvideo.errors import ConfigurationError
from usvideo.kernels import (
    BatchNormState,
    ConvSpec,
    batchnorm,
    batchnorm_backward,
    conv_backward,
    conv_forward,
    default_dtype,
    dropout,
    dropout_backward,
    fully_connected,
    fully_connected_backward,
    glorot_uniform,
    maxpool3d,
    maxpool3d_backward,
    relu_backward,
    sigmoid,
    spp3d,
    spp3d_backward,
    spp_length,
)

Shape = tuple[int, ...]


@dataclass(frozen=True)
class ClassifierArch:
    """Geometry and feature toggles of the classifier.

    The defaults are the canonical 32-frame, 112x112 network. ``attention``
    and ``spp`` switch the motion branch and the pyramid head off for the
    ablation grid.
    """

    clip_length: int = 32
    clip_size: int = 112
    widths: tuple[int, int, int, int] = (16, 32, 64, 64)
    strides: tuple[Shape, Shape, Shape, Shape] = ((1, 1, 1), (1, 2, 2), (2, 2, 2), (2, 2, 2))
    attention_widths: tuple[int, int] = (8, 4)
    fc_hidden: int = 128
    dropout: float = 0.5
    attention: bool = True
    spp: bool = True

    def conv_spec(self, i: int) -> ConvSpec:
        c_in = 1 if i == 0 else self.widths[i - 1]
        return ConvSpec((3, 3, 3), tuple(self.strides[i]), (1, 1, 1), c_in, self.widths[i])

    def attention_specs(self) -> list[ConvSpec]:
        """conv_a and conv_b are k3 s2; conv_c spans whatever extent is left."""
        c = self.widths[2]
        wa, wb = self.attention_widths
        sa = ConvSpec((3, 3), (2, 2), (0, 0), c, wa)
        sb = ConvSpec((3, 3), (2, 2), (0, 0), wa, wb)
        _, h, w = self.trace()["pool1"][1:]
        rest = sb.output_shape(sa.output_shape((h, w)))
        return [sa, sb, ConvSpec(rest, (1, 1), (0, 0), wb, 1)]

    def trace(self) -> dict[str, Shape]:
        """Feature-map shape (C, D, H, W) after every stage, from conv arithmetic."""
        out: dict[str, Shape] = {"input": (1, self.clip_length, self.clip_size, self.clip_size)}
        sp = out["input"][1:]
        for i in range(4):
            sp = self.conv_spec(i).output_shape(sp)
            out[f"conv{i + 1}"] = (self.widths[i], *sp)
            if i in (2, 3):
                sp = tuple((n - 2) // 2 + 1 for n in sp)
                if min(sp) < 1:
                    raise ConfigurationError(f"clip {self.clip_length}x{self.clip_size} too small for {self}")
                out[f"pool{i - 1}"] = (self.widths[i], *sp)
        return out

    @property
    def temporal_windows(self) -> int:
        return self.trace()["pool1"][1]

    def attention_trace(self) -> list[Shape]:
        """Spatial extents through the branch, then its (1, T_w, 1, 1) output."""
        h, w = self.trace()["pool1"][2:]
        sizes = [(h, w)]
        for s in self.attention_specs():
            sizes.append(s.output_shape(sizes[-1]))
        return sizes

    @property
    def head_length(self) -> int:
        c, *sp = self.trace()["pool2"]
        return spp_length(c, sp) if self.spp else c * int(np.prod(sp))

    def validate(self) -> None:
        if self.clip_length % 2:
            raise ConfigurationError("clip length must be even")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigurationError("dropout rate must lie in [0, 1)")
        if self.spp and min(self.trace()["pool2"][1:]) < 2:
            raise ConfigurationError("SPP needs every pool2 extent >= 2")
        if self.attention and min(self.attention_trace()[-1]) != 1:
            raise ConfigurationError("attention branch must reduce each slice to 1x1")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierArch":
        d = dict(d)
        for k in ("widths", "attention_widths"):
            if k in d:
                d[k] = tuple(d[k])
        if "strides" in d:
            d["strides"] = tuple(tuple(s) for s in d["strides"])
        return cls(**d)


CANONICAL = ClassifierArch()
# 8-frame, 28x28 variant with the same layer pattern, small enough for full finite differences
REDUCED = ClassifierArch(
    clip_length=8,
    clip_size=28,
    widths=(2, 3, 4, 4),
    strides=((1, 1, 1), (1, 2, 2), (1, 1, 1), (1, 1, 1)),
    attention_widths=(2, 2),
    fc_hidden=6,
)
# desk-scale geometry for synthetic cross-validation: 16 frames, 28x28, same stage pattern
DESK = ClassifierArch(
    clip_length=16,
    clip_size=28,
    widths=(4, 8, 16, 16),
    strides=((1, 1, 1), (1, 2, 2), (1, 1, 1), (2, 2, 2)),
    attention_widths=(8, 4),
    fc_hidden=32,
)


def variant(arch: ClassifierArch, attention: bool, spp: bool) -> ClassifierArch:
    return replace(arch, attention=attention, spp=spp)


class ClassifierModel:
    """Parameters live in ``params``; batch-norm running statistics in ``bn_state``."""

    kind = "classifier"

    def __init__(self, arch: ClassifierArch = CANONICAL, rng: np.random.Generator | None = None):
        arch.validate()
        self.arch = arch
        rng = rng or np.random.default_rng(0)
        dt = default_dtype()
        p: dict[str, np.ndarray] = {}
        self.bn_state: dict[str, BatchNormState] = {}
        # conv layers feed batch norm, so they carry no bias
        for i in range(4):
            spec = arch.conv_spec(i)
            p[f"conv{i + 1}.weight"] = glorot_uniform(rng, spec.weight_shape)
            p[f"bn{i + 1}.gamma"] = np.ones(spec.out_channels, dt)
            p[f"bn{i + 1}.beta"] = np.zeros(spec.out_channels, dt)
            self.bn_state[f"bn{i + 1}"] = BatchNormState.fresh(spec.out_channels, dt)
        if arch.attention:
            for name, spec in zip(("att_a", "att_b", "att_c"), arch.attention_specs()):
                p[f"{name}.weight"] = glorot_uniform(rng, spec.weight_shape)
                p[f"{name}.bias"] = np.zeros(spec.out_channels, dt)
        p["fc1.weight"] = glorot_uniform(rng, (arch.fc_hidden, arch.head_length))
        p["fc1.bias"] = np.zeros(arch.fc_hidden, dt)
        p["fc2.weight"] = glorot_uniform(rng, (1, arch.fc_hidden))
        p["fc2.bias"] = np.zeros(1, dt)
        self.params = p

    def buffers(self) -> dict[str, np.ndarray]:
        out = {}
        for name, st in self.bn_state.items():
            out[f"{name}.running_mean"] = st.running_mean
            out[f"{name}.running_var"] = st.running_var
        return out

    def n_parameters(self) -> int:
        return sum(v.size for v in self.params.values())


class Gates:
    """Branch choices of every piecewise op (ReLU masks, pooling maxima) in call order.

    A fresh instance records them. Constructed from an earlier recording it
    replays them instead, which makes the forward pass a smooth function of
    the parameters near the recorded point; ``switched`` counts the units
    whose natural choice differs from the replayed one.
    """

    def __init__(self, recorded: list | None = None):
        self.recorded = recorded
        self.trace: list = []
        self.switched = 0

    def _replay(self):
        return None if self.recorded is None else self.recorded[len(self.trace)]

    def relu(self, x):
        natural = x > 0
        mask = self._replay()
        if mask is None:
            mask = natural
        else:
            self.switched += int(np.count_nonzero(natural != mask))
        self.trace.append(mask)
        return x * mask, mask

    def maxpool(self, x):
        pinned = self._replay()
        out, cache = maxpool3d(x, arg=pinned)
        if pinned is not None:
            self.switched += int(np.count_nonzero(maxpool3d(x)[0] > out))
        self.trace.append(cache[3])
        return out, cache

    def spp(self, x):
        pinned = self._replay()
        out, cache = spp3d(x, pinned=pinned)
        if pinned is not None:
            self.switched += int(np.count_nonzero(spp3d(x)[0] > out))
        self.trace.append(cache)
        return out, cache


class ForwardResult(NamedTuple):
    prob: np.ndarray  # (N,)
    v_temp: np.ndarray | None  # (N, T_w)
    cache: tuple
    shapes: dict[str, Shape]
    gates: Gates


def _check_input(arch: ClassifierArch, clips: np.ndarray) -> np.ndarray:
    want = (1, arch.clip_length, arch.clip_size, arch.clip_size)
    if clips.ndim == 4:
        clips = clips[None]
    if clips.ndim != 5 or clips.shape[1:] != want:
        raise ConfigurationError(f"classifier expects clips of shape (N, {', '.join(map(str, want))}), got {clips.shape}")
    return clips


def _block(model, i, x, training, gates):
    p = model.params
    x, cc = conv_forward(x, p[f"conv{i}.weight"], None, model.arch.conv_spec(i - 1))
    x, cb = batchnorm(x, p[f"bn{i}.gamma"], p[f"bn{i}.beta"], training=training, state=model.bn_state[f"bn{i}"])
    x, m = gates.relu(x)
    return x, (cc, cb, m)


def _block_backward(i, dx, cache, grads):
    cc, cb, m = cache
    g = batchnorm_backward(relu_backward(dx, m), cb)
    grads[f"bn{i}.gamma"] = g.d_params["gamma"]
    grads[f"bn{i}.beta"] = g.d_params["beta"]
    gc = conv_backward(g.d_input, cc)
    grads[f"conv{i}.weight"] = gc.d_params["weight"]
    return gc.d_input


def _attention(model, f, gates):
    p = model.params
    n, c, t, h, w = f.shape
    x = f.transpose(0, 2, 1, 3, 4).reshape(n * t, c, h, w)
    caches = []
    for j, (name, spec) in enumerate(zip(("att_a", "att_b", "att_c"), model.arch.attention_specs())):
        x, cc = conv_forward(x, p[f"{name}.weight"], p[f"{name}.bias"], spec)
        mask = None
        if j < 2:
            x, mask = gates.relu(x)
        caches.append((cc, mask))
    s = sigmoid(x.reshape(n, t))
    return 2.0 * s, caches


def _attention_backward(model, d_v, v, caches, f_shape, grads):
    n, c, t, h, w = f_shape
    d = (d_v * v * (1.0 - 0.5 * v)).reshape(n * t, 1, 1, 1)
    for j in (2, 1, 0):
        cc, mask = caches[j]
        if mask is not None:
            d = relu_backward(d, mask)
        g = conv_backward(d, cc)
        name = ("att_a", "att_b", "att_c")[j]
        grads[f"{name}.weight"] = g.d_params["weight"]
        grads[f"{name}.bias"] = g.d_params["bias"]
        d = g.d_input
    return d.reshape(n, t, c, h, w).transpose(0, 2, 1, 3, 4)


def forward(
    model: ClassifierModel,
    clips: np.ndarray,
    training: bool = False,
    rng: np.random.Generator | None = None,
    v_temp_override: np.ndarray | None = None,
    gates: Gates | None = None,
    update_stats: bool = True,
) -> ForwardResult:
    """Batched forward pass over (N, 1, T, S, S) clips.

    ``v_temp_override`` replaces the branch output (e.g. all ones to bypass
    attention); it has no gradient. Dropout in training mode draws from ``rng``.
    ``gates`` replays recorded ReLU/pooling choices (see :class:`Gates`).
    With ``update_stats`` off, training mode leaves the running statistics alone.
    """
    gates = gates or Gates()
    if training and not update_stats:
        saved = {k: (s.running_mean.copy(), s.running_var.copy()) for k, s in model.bn_state.items()}
        try:
            return forward(model, clips, training, rng, v_temp_override, gates)
        finally:
            for k, (mean, var) in saved.items():
                model.bn_state[k].running_mean[...] = mean
                model.bn_state[k].running_var[...] = var
    arch = model.arch
    p = model.params
    x = _check_input(arch, np.asarray(clips, dtype=default_dtype()))
    shapes: dict[str, Shape] = {"input": x.shape[1:]}
    blocks = []
    for i in (1, 2, 3):
        x, c = _block(model, i, x, training, gates)
        blocks.append(c)
        shapes[f"conv{i}"] = x.shape[1:]
    f, cp1 = gates.maxpool(x)
    shapes["pool1"] = f.shape[1:]

    v_temp, att_caches = None, None
    if v_temp_override is not None:
        v_temp = np.broadcast_to(np.asarray(v_temp_override, dtype=f.dtype), (f.shape[0], f.shape[2]))
    elif arch.attention:
        v_temp, att_caches = _attention(model, f, gates)
    x = f if v_temp is None else f * v_temp[:, None, :, None, None]
    if v_temp is not None:
        shapes["v_temp"] = (1, v_temp.shape[1], 1, 1)

    x, c4 = _block(model, 4, x, training, gates)
    blocks.append(c4)
    shapes["conv4"] = x.shape[1:]
    x, cp2 = gates.maxpool(x)
    shapes["pool2"] = x.shape[1:]
    pooled_shape = x.shape
    if arch.spp:
        x, cs = gates.spp(x)
    else:
        x, cs = x.reshape(x.shape[0], -1), None
    shapes["head"] = x.shape[1:]
    h1, cf1 = fully_connected(x, p["fc1.weight"], p["fc1.bias"])
    h1, m1 = gates.relu(h1)
    h1, drop = dropout(h1, arch.dropout, training, rng)
    logit, cf2 = fully_connected(h1, p["fc2.weight"], p["fc2.bias"])
    prob = sigmoid(logit[:, 0])
    cache = (blocks, cp1, f, v_temp, att_caches, v_temp_override is not None, cp2, pooled_shape, cs, cf1, m1, drop, cf2)
    return ForwardResult(prob, None if v_temp_override is not None else v_temp, cache, shapes, gates)


def backward(model: ClassifierModel, d_logit: np.ndarray, d_v_temp: np.ndarray | None, cache) -> dict[str, np.ndarray]:
    """Gradients of the loss given dL/dlogit (N,) and dL/dv_temp (N, T_w)."""
    blocks, cp1, f, v_temp, att_caches, overridden, cp2, pooled_shape, cs, cf1, m1, drop, cf2 = cache
    grads: dict[str, np.ndarray] = {}
    g2 = fully_connected_backward(np.asarray(d_logit)[:, None], cf2)
    grads["fc2.weight"], grads["fc2.bias"] = g2.d_params["weight"], g2.d_params["bias"]
    d = relu_backward(dropout_backward(g2.d_input, drop), m1)
    g1 = fully_connected_backward(d, cf1)
    grads["fc1.weight"], grads["fc1.bias"] = g1.d_params["weight"], g1.d_params["bias"]
    d = spp3d_backward(g1.d_input, cs) if cs is not None else g1.d_input.reshape(pooled_shape)
    d = maxpool3d_backward(d, cp2)
    d = _block_backward(4, d, blocks[3], grads)
    if v_temp is None:
        d_f = d
    else:
        d_f = d * v_temp[:, None, :, None, None]
        if not overridden:
            d_v = np.einsum("nctij,nctij->nt", d, f)
            if d_v_temp is not None:
                d_v = d_v + d_v_temp
            d_f = d_f + _attention_backward(model, d_v, v_temp, att_caches, f.shape, grads)
    d = maxpool3d_backward(d_f, cp1)
    for i in (3, 2, 1):
        d = _block_backward(i, d, blocks[i - 1], grads)
    return grads
