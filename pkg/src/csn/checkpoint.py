"""Binary checkpoint format.

Layout (all integers little-endian):

    magic        8 bytes  b"CSNCKPT1"
    config       u32 length + JSON-encoded model config (sorted keys)
    iteration    u64
    param count  u32
    per param    u16 name length, name bytes (utf-8),
                 u8 rank, rank * u32 dims,
                 raw little-endian float32 data
    adam flag    u8; if 1: u64 step counter, then per param (same order)
                 the first- and second-moment arrays as raw float32
    rng flag     u8; if 1: u32 length + JSON bit-generator state
    checksum     u32 crc32 of every preceding byte

Round trips are bit-exact, including optimizer moments and the sampler rng
state, so resumed runs replay a straight-through run exactly.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .autodiff import ParamStore
from .model import CsnModel, ModelConfig
from .training import AdamState, TrainerState

MAGIC = b"CSNCKPT1"


def _pack_array(out, arr):
    out.append(arr.astype("<f4", copy=False).tobytes())


def save_checkpoint(path, model: CsnModel, iteration: int = 0,
                    adam: AdamState | None = None, sampler_rng=None):
    out = [MAGIC]
    cfg_blob = json.dumps(model.config.to_dict(), sort_keys=True).encode()
    out.append(struct.pack("<I", len(cfg_blob)))
    out.append(cfg_blob)
    out.append(struct.pack("<Q", iteration))
    out.append(struct.pack("<I", len(model.params)))
    for name, p in model.params.items():
        nb = name.encode()
        out.append(struct.pack("<H", len(nb)))
        out.append(nb)
        out.append(struct.pack("<B", p.value.ndim))
        out.append(struct.pack(f"<{p.value.ndim}I", *p.value.shape))
        _pack_array(out, p.value)
    if adam is not None:
        out.append(struct.pack("<B", 1))
        out.append(struct.pack("<Q", adam.t))
        for name, _ in model.params.items():
            _pack_array(out, adam.m[name])
            _pack_array(out, adam.v[name])
    else:
        out.append(struct.pack("<B", 0))
    if sampler_rng is not None:
        rng_blob = json.dumps(sampler_rng.bit_generator.state, sort_keys=True).encode()
        out.append(struct.pack("<B", 1))
        out.append(struct.pack("<I", len(rng_blob)))
        out.append(rng_blob)
    else:
        out.append(struct.pack("<B", 0))
    body = b"".join(out)
    with open(path, "wb") as fh:
        fh.write(body)
        fh.write(struct.pack("<I", zlib.crc32(body)))


@dataclass
class LoadedCheckpoint:
    model: CsnModel
    iteration: int
    adam: AdamState | None
    sampler_rng: np.random.Generator | None

    def trainer_state(self, cfg) -> TrainerState:
        """Rebuild the training state; fills gaps for pre-training checkpoints.

        Adam betas are not serialized; they come from cfg, which must match
        the original run for a bit-exact resume."""
        adam = self.adam
        if adam is None:
            adam = AdamState(self.model.params, cfg.beta1, cfg.beta2, cfg.eps)
        else:
            adam.beta1, adam.beta2, adam.eps = cfg.beta1, cfg.beta2, cfg.eps
        rng = self.sampler_rng
        if rng is None:
            rng = np.random.default_rng(cfg.seed)
        return TrainerState(adam=adam, sampler_rng=rng, iteration=self.iteration)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ValueError(f"checkpoint truncated at byte offset {self.pos}")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt):
        vals = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return vals[0] if len(vals) == 1 else vals

    def array(self, shape):
        n = int(np.prod(shape, dtype=np.int64))
        raw = np.frombuffer(self.take(4 * n), dtype="<f4")
        return raw.reshape(shape).astype(np.float32)


def load_checkpoint(path) -> LoadedCheckpoint:
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < len(MAGIC) + 4:
        raise ValueError(f"{path}: not a checkpoint (too short)")
    body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(body) != crc:
        raise ValueError(f"{path}: checksum mismatch, file is corrupt")
    r = _Reader(body)
    if r.take(len(MAGIC)) != MAGIC:
        raise ValueError(f"{path}: bad magic, not a checkpoint")
    cfg = ModelConfig.from_dict(json.loads(r.take(r.unpack("<I")).decode()))
    iteration = r.unpack("<Q")
    store = ParamStore()
    shapes = []
    for _ in range(r.unpack("<I")):
        name = r.take(r.unpack("<H")).decode()
        rank = r.unpack("<B")
        shape = tuple(np.atleast_1d(r.unpack(f"<{rank}I")).tolist()) if rank else ()
        store.add(name, r.array(shape))
        shapes.append((name, shape))
    adam = None
    if r.unpack("<B"):
        adam = AdamState(store)
        adam.t = r.unpack("<Q")
        for name, shape in shapes:
            adam.m[name] = r.array(shape)
            adam.v[name] = r.array(shape)
    rng = None
    if r.unpack("<B"):
        state = json.loads(r.take(r.unpack("<I")).decode())
        rng = np.random.default_rng()
        rng.bit_generator.state = state
    return LoadedCheckpoint(CsnModel(cfg, store), iteration, adam, rng)
