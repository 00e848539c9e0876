"""Binary checkpoint format.

Layout::

    b"CTRASTE1"                      8 bytes of magic
    uint64 little-endian             length of the metadata document
    UTF-8 JSON metadata              version, config, vocab, manifest, ...
    float32 little-endian payloads   one per manifest entry, in manifest order
"""
from __future__ import annotations

import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BadMagic, TruncatedPayload, VersionMismatch

MAGIC = b"CTRASTE1"
VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    vocab: list[str]
    tensors: dict[str, np.ndarray]
    best_dev_f1: float = 0.0
    epoch: int = 0
    version: int = VERSION
    extra: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    manifest = [{"name": k, "shape": list(v.shape)} for k, v in ckpt.tensors.items()]
    meta = {
        "version": ckpt.version,
        "config": ckpt.config,
        "vocab": ckpt.vocab,
        "tensors": manifest,
        "best_dev_f1": ckpt.best_dev_f1,
        "epoch": ckpt.epoch,
        "extra": ckpt.extra,
    }
    doc = json.dumps(meta, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<Q", len(doc)), doc]
    for v in ckpt.tensors.values():
        parts.append(np.ascontiguousarray(v, dtype="<f4").tobytes())
    return b"".join(parts)


def from_bytes(buf: bytes) -> Checkpoint:
    if buf[:len(MAGIC)] != MAGIC:
        raise BadMagic(f"expected magic {MAGIC!r}, got {buf[:len(MAGIC)]!r}")
    pos = len(MAGIC)
    if len(buf) < pos + 8:
        raise TruncatedPayload("file ends inside the metadata length")
    (n,) = struct.unpack_from("<Q", buf, pos)
    pos += 8
    if len(buf) < pos + n:
        raise TruncatedPayload("file ends inside the metadata document")
    meta = json.loads(buf[pos:pos + n].decode("utf-8"))
    pos += n
    if meta.get("version") != VERSION:
        raise VersionMismatch(f"checkpoint version {meta.get('version')}, "
                              f"this build reads {VERSION}")
    expected = sum(4 * int(np.prod(t["shape"], dtype=np.int64)) for t in meta["tensors"])
    if len(buf) - pos != expected:
        raise TruncatedPayload(f"manifest needs {expected} payload bytes, "
                               f"file has {len(buf) - pos}")
    tensors = {}
    for t in meta["tensors"]:
        count = int(np.prod(t["shape"], dtype=np.int64))
        arr = np.frombuffer(buf, dtype="<f4", count=count, offset=pos)
        tensors[t["name"]] = arr.astype(np.float64).reshape(t["shape"])
        pos += 4 * count
    return Checkpoint(meta["config"], meta["vocab"], tensors, meta["best_dev_f1"],
                      meta["epoch"], meta["version"], meta.get("extra", {}))


def save_checkpoint(ckpt: Checkpoint, path):
    """Write atomically: temp file in the same directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(to_bytes(ckpt))
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_checkpoint(path) -> Checkpoint:
    return from_bytes(Path(path).read_bytes())
