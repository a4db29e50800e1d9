"""Binary checkpoints for both model kinds.

Layout (all integers little-endian)::

    magic "KFGC" | version u16 | kind: u16 length + utf-8
    | meta: u32 length + utf-8 JSON | sha256(meta) 32 bytes
    | n_tensors u32 | has_optimizer u8
    [ step u64 | lr, beta1, beta2, eps, weight_decay f64 | n_moments u32 ]
    tensor records, then (with an optimizer) first- and second-moment records

A tensor record is ``name: u16 length + utf-8 | rank u8 | shape u32 x rank |
values f64``. ``meta`` holds the model geometry, so a checkpoint rebuilds
its model without any other file.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from usvideo.errors import CheckpointError
from usvideo.kernels import Adam

MAGIC = b"KFGC"
VERSION = 1
_OPT = struct.Struct("<Q5d")


@dataclass
class CheckpointData:
    kind: str
    meta: dict
    tensors: dict[str, np.ndarray]
    optimizer: dict | None = None  # hyperparameters and step_count
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)


def _meta_bytes(meta: dict) -> bytes:
    return json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()


def config_digest(meta: dict) -> bytes:
    return hashlib.sha256(_meta_bytes(meta)).digest()


def _record(name: str, array: np.ndarray) -> bytes:
    a = np.ascontiguousarray(array, dtype="<f8")
    raw = name.encode()
    return (
        struct.pack("<H", len(raw)) + raw + struct.pack("<B", a.ndim)
        + struct.pack(f"<{a.ndim}I", *a.shape) + a.tobytes()
    )


def encode(data: CheckpointData) -> bytes:
    kind = data.kind.encode()
    meta = _meta_bytes(data.meta)
    out = [MAGIC, struct.pack("<H", VERSION), struct.pack("<H", len(kind)), kind]
    out += [struct.pack("<I", len(meta)), meta, hashlib.sha256(meta).digest()]
    out += [struct.pack("<IB", len(data.tensors), data.optimizer is not None)]
    if data.optimizer is not None:
        o = data.optimizer
        out.append(_OPT.pack(o["step_count"], o["lr"], o["beta1"], o["beta2"], o["eps"], o["weight_decay"]))
        out.append(struct.pack("<I", len(data.first_moment)))
    out += [_record(k, v) for k, v in data.tensors.items()]
    if data.optimizer is not None:
        out += [_record(k, v) for k, v in data.first_moment.items()]
        out += [_record(k, data.second_moment[k]) for k in data.first_moment]
    return b"".join(out)


class _Reader:
    def __init__(self, raw: bytes, path: str):
        self.raw, self.pos, self.path = raw, 0, path

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.raw):
            raise CheckpointError(
                f"{self.path}: truncated at offset {self.pos} reading {what} ({n} bytes needed, {len(self.raw) - self.pos} left)"
            )
        chunk = self.raw[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        s = struct.Struct(fmt)
        return s.unpack(self.take(s.size, what))

    def string(self, fmt: str, what: str) -> str:
        (n,) = self.unpack(fmt, f"{what} length")
        return self.take(n, what).decode()

    def record(self) -> tuple[str, np.ndarray]:
        name = self.string("<H", "tensor name")
        (rank,) = self.unpack("<B", f"rank of {name}")
        shape = self.unpack(f"<{rank}I", f"shape of {name}")
        count = int(np.prod(shape)) if rank else 1
        values = np.frombuffer(self.take(8 * count, f"values of {name}"), dtype="<f8")
        return name, values.reshape(shape).astype(np.float64)


def decode(raw: bytes, path: str = "<bytes>") -> CheckpointData:
    r = _Reader(raw, path)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (version,) = r.unpack("<H", "version")
    if version != VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version} found, expected {VERSION}")
    kind = r.string("<H", "kind")
    meta_raw = r.take(r.unpack("<I", "meta length")[0], "meta")
    digest = r.take(32, "config digest")
    if hashlib.sha256(meta_raw).digest() != digest:
        raise CheckpointError(f"{path}: config digest does not match the stored geometry")
    n_tensors, has_opt = r.unpack("<IB", "tensor count")
    optimizer, n_moments = None, 0
    if has_opt:
        step, lr, b1, b2, eps, wd = r.unpack(_OPT.format, "optimizer header")
        optimizer = {"step_count": step, "lr": lr, "beta1": b1, "beta2": b2, "eps": eps, "weight_decay": wd}
        (n_moments,) = r.unpack("<I", "moment count")
    tensors = dict(r.record() for _ in range(n_tensors))
    first = dict(r.record() for _ in range(n_moments))
    second = dict(r.record() for _ in range(n_moments))
    if r.pos != len(raw):
        raise CheckpointError(f"{path}: {len(raw) - r.pos} trailing bytes after offset {r.pos}")
    return CheckpointData(kind, json.loads(meta_raw), tensors, optimizer, first, second)


def write_checkpoint(path, data: CheckpointData) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(encode(data))
    tmp.replace(path)
    return path


def read_checkpoint(path) -> CheckpointData:
    path = Path(path)
    if not path.is_file():
        raise CheckpointError(f"checkpoint {path} not found")
    return decode(path.read_bytes(), str(path))


def model_meta(model) -> dict:
    from usvideo.classifier.model import ClassifierModel
    from usvideo.localizer import LocalizerModel

    if isinstance(model, LocalizerModel):
        return asdict(model.dims)
    if isinstance(model, ClassifierModel):
        return model.arch.to_dict()
    raise CheckpointError(f"cannot checkpoint a {type(model).__name__}")


def save_checkpoint(model, optimizer: Adam | None, path) -> Path:
    tensors = dict(model.params)
    if hasattr(model, "buffers"):
        tensors.update(model.buffers())
    data = CheckpointData(model.kind, model_meta(model), tensors)
    if optimizer is not None:
        st = optimizer.state
        data.optimizer = {
            "step_count": st.step_count, "lr": st.lr, "beta1": st.beta1, "beta2": st.beta2,
            "eps": st.eps, "weight_decay": st.weight_decay,
        }
        data.first_moment = dict(st.first_moment)
        data.second_moment = dict(st.second_moment)
    return write_checkpoint(path, data)


def _assign(target: dict[str, np.ndarray], source: dict[str, np.ndarray], what: str, path) -> None:
    missing = sorted(set(target) - set(source))
    if missing:
        raise CheckpointError(f"{path}: {what} missing {missing}")
    for k, v in target.items():
        if source[k].shape != v.shape:
            raise CheckpointError(f"{path}: {what} {k} has shape {source[k].shape}, model expects {v.shape}")
        v[...] = source[k]


def load_checkpoint(path, kind: str | None = None):
    """Rebuild ``(model, optimizer)``; the optimizer is None if none was saved."""
    from usvideo.classifier.model import ClassifierArch, ClassifierModel
    from usvideo.localizer import LocalizerDims, LocalizerModel

    data = read_checkpoint(path)
    if kind is not None and data.kind != kind:
        raise CheckpointError(f"{path}: holds a {data.kind} model, expected {kind}")
    if data.kind == "localizer":
        model = LocalizerModel(LocalizerDims(**data.meta))
    elif data.kind == "classifier":
        model = ClassifierModel(ClassifierArch.from_dict(data.meta))
    else:
        raise CheckpointError(f"{path}: unknown model kind {data.kind!r}")
    state = dict(model.params)
    if hasattr(model, "buffers"):
        state.update(model.buffers())
    extra = sorted(set(data.tensors) - set(state))
    if extra:
        raise CheckpointError(f"{path}: unexpected tensors {extra}")
    _assign(state, data.tensors, "tensor", path)
    optimizer = None
    if data.optimizer is not None:
        o = data.optimizer
        optimizer = Adam(model.params, lr=o["lr"], betas=(o["beta1"], o["beta2"]), eps=o["eps"], weight_decay=o["weight_decay"])
        optimizer.state.step_count = int(o["step_count"])
        _assign(optimizer.state.first_moment, data.first_moment, "first moment", path)
        _assign(optimizer.state.second_moment, data.second_moment, "second moment", path)
    return model, optimizer
