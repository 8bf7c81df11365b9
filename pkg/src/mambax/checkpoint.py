"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"NSPCCKPT" | u32 version | u32 len | config JSON (sorted keys)
    4 tensor sections (params, buffers, adam_m, adam_v), each:
        u32 count, then per tensor: u16 name len | name | u8 ndim | u32 dims | f64 data
    u32 len | state JSON (sorted keys): step, adam_t, bands, rng_state, history

Encoding is canonical, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import json
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from .config import ExperimentConfig
from .errors import ContractError, DataError
from .pipeline.data import ImagePair
from .pipeline.model import MambaX
from .pipeline.train import Trainer

MAGIC = b"NSPCCKPT"
VERSION = 1
SECTIONS = ("params", "buffers", "adam_m", "adam_v")

Blobs = "OrderedDict[str, np.ndarray]"


@dataclass
class Checkpoint:
    config: dict[str, Any]
    params: Blobs
    buffers: Blobs = field(default_factory=OrderedDict)
    adam_m: Blobs = field(default_factory=OrderedDict)
    adam_v: Blobs = field(default_factory=OrderedDict)
    step: int = 0
    adam_t: int = 0
    bands: int = 0
    rng_state: dict[str, Any] = field(default_factory=dict)
    history: list[dict[str, float]] = field(default_factory=list)
    version: int = VERSION

    # -- encoding ----------------------------------------------------------------------
    def to_bytes(self) -> bytes:
        out = [MAGIC, struct.pack("<I", self.version), _pack_json(self.config)]
        for name in SECTIONS:
            out.append(_pack_blobs(getattr(self, name)))
        state = {
            "step": self.step,
            "adam_t": self.adam_t,
            "bands": self.bands,
            "rng_state": self.rng_state,
            "history": self.history,
        }
        out.append(_pack_json(state))
        return b"".join(out)

    @classmethod
    def from_bytes(cls, buf: bytes) -> Checkpoint:
        r = _Reader(buf)
        if r.take(len(MAGIC)) != MAGIC:
            raise DataError("not a checkpoint file (bad magic)")
        (version,) = r.unpack("<I")
        if version != VERSION:
            raise ContractError(f"checkpoint version {version} not supported (expected {VERSION})")
        config = r.json()
        sections = {name: r.blobs() for name in SECTIONS}
        state = r.json()
        if r.pos != len(buf):
            raise DataError(f"checkpoint has {len(buf) - r.pos} trailing bytes")
        return cls(config=config, version=version, **sections, **state)

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path: str | Path) -> Checkpoint:
        try:
            buf = Path(path).read_bytes()
        except OSError as exc:
            raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_bytes(buf)

    # -- model / trainer bridges ---------------------------------------------------------
    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig.from_dict(self.config)

    def build_model(self) -> MambaX:
        model = MambaX(self.experiment_config(), bands=self.bands)
        params = model.named_parameters()
        if list(params) != list(self.params):
            raise ContractError("checkpoint parameter names do not match the model built from its config")
        for name, p in params.items():
            if p.shape != self.params[name].shape:
                raise ContractError(f"parameter {name}: checkpoint shape {self.params[name].shape} vs model {p.shape}")
            p.data[...] = self.params[name]
        model.load_buffers(self.buffers)
        return model

    def restore_trainer(self, data: list[ImagePair], config: ExperimentConfig | None = None) -> Trainer:
        """Rebuild a trainer positioned at ``step``. ``config`` may raise max_steps/epochs."""
        model = self.build_model()
        trainer = Trainer(config or model.config, data, model=model)
        trainer.step = self.step
        trainer.history = [dict(h) for h in self.history]
        opt = trainer.optimizer
        opt.t = self.adam_t
        for k in opt.m:
            opt.m[k] = self.adam_m[k].copy()
            opt.v[k] = self.adam_v[k].copy()
        return trainer


def from_trainer(trainer: Trainer) -> Checkpoint:
    model, opt = trainer.model, trainer.optimizer
    return Checkpoint(
        config=model.config.to_dict(),
        params=OrderedDict((k, p.data.copy()) for k, p in model.named_parameters().items()),
        buffers=OrderedDict((k, np.array(v, dtype=np.float64)) for k, v in model.named_buffers().items()),
        adam_m=OrderedDict((k, v.copy()) for k, v in opt.m.items()),
        adam_v=OrderedDict((k, v.copy()) for k, v in opt.v.items()),
        step=trainer.step,
        adam_t=opt.t,
        bands=model.bands,
        # batches are a pure function of (seed, step); this records that stream's position
        rng_state={"seed": trainer.config.seed, "next_step": trainer.step},
        history=[dict(h) for h in trainer.history],
    )


def _pack_json(obj) -> bytes:
    raw = json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False).encode()
    return struct.pack("<I", len(raw)) + raw


def _pack_blobs(blobs) -> bytes:
    out = [struct.pack("<I", len(blobs))]
    for name, arr in blobs.items():
        arr = np.asarray(arr, dtype="<f8")  # ascontiguousarray would promote 0-d to (1,)
        key = name.encode()
        out.append(struct.pack("<H", len(key)) + key)
        out.append(struct.pack(f"<B{arr.ndim}I", arr.ndim, *arr.shape))
        out.append(arr.tobytes(order="C"))
    return b"".join(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise DataError("checkpoint truncated")
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def json(self):
        (n,) = self.unpack("<I")
        return json.loads(self.take(n))

    def blobs(self):
        (count,) = self.unpack("<I")
        out = OrderedDict()
        for _ in range(count):
            (n,) = self.unpack("<H")
            name = self.take(n).decode()
            (ndim,) = self.unpack("<B")
            shape = self.unpack(f"<{ndim}I")
            size = int(np.prod(shape, dtype=np.int64))
            out[name] = np.frombuffer(self.take(8 * size), dtype="<f8").reshape(shape).astype(np.float64)
        return out
