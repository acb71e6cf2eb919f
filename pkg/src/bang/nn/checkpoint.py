"""Binary checkpoint: a text header followed by little-endian float32 tensors.

Layout::

    BANGCKPT 1\\n
    <header byte length>\\n
    <header: UTF-8 ``key=value`` lines>
    <tensor data>

Header keys are ``config.<field>``, ``meta.<name>`` and
``tensor.<param>=<shape>;<offset>`` where shape is ``x``-joined and offset
counts bytes from the start of the data block.  Keys are written sorted, so
loading and re-saving a file reproduces it byte for byte.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import CheckpointError
from .model import Model, ModelConfig

MAGIC = b"BANGCKPT"
VERSION = 1
_LE_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    config: ModelConfig
    tensors: dict                       # name -> float32 array
    meta: dict = field(default_factory=dict)   # str -> str
    history: list = field(default_factory=list, repr=False, compare=False)  # (step, lr, loss), not serialised

    @classmethod
    def from_model(cls, model: Model, **meta):
        tensors = {k: np.asarray(v, dtype=np.float32).copy() for k, v in model.params.items()}
        return cls(model.cfg, tensors, {k: str(v) for k, v in meta.items()})

    def to_model(self, dtype=np.float32) -> Model:
        model = Model(self.config, seed=0, dtype=dtype)
        missing = set(model.params) ^ set(self.tensors)
        if missing:
            raise CheckpointError(f"parameter set mismatch: {sorted(missing)[:5]}")
        for k, arr in self.tensors.items():
            if model.params[k].shape != arr.shape:
                raise CheckpointError(f"{k}: shape {arr.shape} vs model {model.params[k].shape}")
            model.params[k][...] = arr
        return model

    def param_count(self):
        return int(sum(a.size for a in self.tensors.values()))


def _header(ckpt: Checkpoint):
    lines = {}
    for k, v in ckpt.config.to_dict().items():
        lines[f"config.{k}"] = str(v)
    for k, v in ckpt.meta.items():
        if "\n" in v or "=" in k:
            raise CheckpointError(f"meta entry {k!r} cannot be serialised")
        lines[f"meta.{k}"] = v
    offset = 0
    for name in sorted(ckpt.tensors):
        arr = ckpt.tensors[name]
        shape = "x".join(str(d) for d in arr.shape)
        lines[f"tensor.{name}"] = f"{shape};{offset}"
        offset += arr.size * 4
    return "".join(f"{k}={lines[k]}\n" for k in sorted(lines)).encode("utf-8")


def dumps(ckpt: Checkpoint) -> bytes:
    head = _header(ckpt)
    parts = [MAGIC + f" {VERSION}\n{len(head)}\n".encode("ascii"), head]
    for name in sorted(ckpt.tensors):
        parts.append(np.ascontiguousarray(ckpt.tensors[name], dtype=_LE_F32).tobytes())
    return b"".join(parts)


def loads(blob: bytes) -> Checkpoint:
    try:
        first, rest = blob.split(b"\n", 1)
        magic, version = first.split(b" ")
        size_line, rest = rest.split(b"\n", 1)
        size = int(size_line)
    except ValueError as exc:
        raise CheckpointError("not a checkpoint file") from exc
    if magic != MAGIC:
        raise CheckpointError("bad magic")
    if int(version) != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {int(version)}")
    head, data = rest[:size], rest[size:]
    cfg, meta, tensors = {}, {}, {}
    for line in head.decode("utf-8").splitlines():
        key, _, val = line.partition("=")
        group, _, name = key.partition(".")
        if group == "config":
            cfg[name] = val
        elif group == "meta":
            meta[name] = val
        elif group == "tensor":
            shape_s, off_s = val.split(";")
            shape = tuple(int(d) for d in shape_s.split("x")) if shape_s else ()
            off = int(off_s)
            n = int(np.prod(shape, dtype=np.int64))
            if off + 4 * n > len(data):
                raise CheckpointError(f"tensor {name} runs past end of file")
            tensors[name] = np.frombuffer(data, dtype=_LE_F32, count=n, offset=off).reshape(shape).astype(np.float32)
        else:
            raise CheckpointError(f"unknown header key {key!r}")
    return Checkpoint(ModelConfig.from_dict(cfg), tensors, meta)


def save(ckpt: Checkpoint, path):
    with open(path, "wb") as fh:
        fh.write(dumps(ckpt))


def load(path) -> Checkpoint:
    with open(path, "rb") as fh:
        return loads(fh.read())
