"""Single-file checkpoint format.

Layout (all integers little-endian):

    magic   8 bytes  b"AV1CKPT_"
    version u32
    meta    u32 length + UTF-8 JSON (model/config metadata)
    blocks  u32 count, then per block:
              u16 name length, UTF-8 name,
              u8 ndim, u32 per dimension,
              float32 payload (row-major)
    opt     u8 present flag; if 1: f64 lr, beta1, beta2, epsilon, u64 step,
            then a moment-block section of the same shape as `blocks`
            (names prefixed "m." / "v.")

Parameter payloads are float32 on disk; load returns float64 arrays for
compute. Read-then-write reproduces a file bit-exactly.
"""
from __future__ import annotations

import json
import struct

import numpy as np

from author2vec.errors import StoreFormatError, TruncatedFileError
from author2vec.nn.optim import AdamState

MAGIC = b"AV1CKPT_"
VERSION = 1


def _write_blocks(fh, blocks):
    fh.write(struct.pack("<I", len(blocks)))
    for name, arr in blocks.items():
        encoded = name.encode("utf-8")
        fh.write(struct.pack("<H", len(encoded)))
        fh.write(encoded)
        arr32 = np.ascontiguousarray(arr, dtype="<f4")
        fh.write(struct.pack("<B", arr32.ndim))
        for dim in arr32.shape:
            fh.write(struct.pack("<I", dim))
        fh.write(arr32.tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"checkpoint truncated while reading {what}")
    return data


def _read_blocks(fh):
    (count,) = struct.unpack("<I", _read_exact(fh, 4, "block count"))
    blocks = {}
    for _ in range(count):
        (name_len,) = struct.unpack("<H", _read_exact(fh, 2, "block name length"))
        name = _read_exact(fh, name_len, "block name").decode("utf-8")
        (ndim,) = struct.unpack("<B", _read_exact(fh, 1, name))
        shape = tuple(
            struct.unpack("<I", _read_exact(fh, 4, name))[0] for _ in range(ndim)
        )
        n_items = int(np.prod(shape)) if shape else 1
        payload = _read_exact(fh, 4 * n_items, f"payload of {name}")
        blocks[name] = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(float)
    return blocks


def save_checkpoint(path, blocks, meta=None, optimizer=None):
    """Write named parameter blocks plus optional Adam state and metadata."""
    meta_bytes = json.dumps(meta or {}, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", VERSION))
        fh.write(struct.pack("<I", len(meta_bytes)))
        fh.write(meta_bytes)
        _write_blocks(fh, blocks)
        if optimizer is None:
            fh.write(struct.pack("<B", 0))
        else:
            fh.write(struct.pack("<B", 1))
            fh.write(
                struct.pack(
                    "<ddddQ",
                    optimizer.lr,
                    optimizer.beta1,
                    optimizer.beta2,
                    optimizer.epsilon,
                    optimizer.step,
                )
            )
            moments = {}
            for name, arr in optimizer.m.items():
                moments[f"m.{name}"] = arr
            for name, arr in optimizer.v.items():
                moments[f"v.{name}"] = arr
            _write_blocks(fh, moments)


def load_checkpoint(path):
    """Read a checkpoint. Returns (blocks, meta, optimizer-or-None)."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise StoreFormatError(f"bad checkpoint magic {magic!r} in {path}")
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise StoreFormatError(f"unsupported checkpoint version {version}")
        (meta_len,) = struct.unpack("<I", _read_exact(fh, 4, "metadata length"))
        meta = json.loads(_read_exact(fh, meta_len, "metadata").decode("utf-8"))
        blocks = _read_blocks(fh)
        (opt_flag,) = struct.unpack("<B", _read_exact(fh, 1, "optimizer flag"))
        optimizer = None
        if opt_flag:
            lr, b1, b2, eps, step = struct.unpack(
                "<ddddQ", _read_exact(fh, 40, "optimizer header")
            )
            optimizer = AdamState(lr=lr, beta1=b1, beta2=b2, epsilon=eps)
            optimizer.step = step
            moments = _read_blocks(fh)
            for name, arr in moments.items():
                if name.startswith("m."):
                    optimizer.m[name[2:]] = arr
                elif name.startswith("v."):
                    optimizer.v[name[2:]] = arr
                else:
                    raise StoreFormatError(f"unexpected moment block {name!r}")
    return blocks, meta, optimizer
