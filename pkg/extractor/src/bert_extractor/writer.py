"""Streaming writer for the AV1EMBED interchange format.

Wire layout (all integers little-endian): magic `AV1EMBED`, u32 version,
u32 dim, u64 author_count, then one index entry per author (u16 id length,
UTF-8 id, u64 absolute byte offset, u32 row count), then the row-major
float32 payload blocks in index order.

Author blocks stream through a spill file so the full corpus never sits in
memory; the index is assembled at close time.
"""
from __future__ import annotations

import os
import shutil
import struct
import tempfile

import numpy as np

MAGIC = b"AV1EMBED"
VERSION = 1


class EmbeddingWriter:
    """Append one author block at a time, then finalize."""

    def __init__(self, path, dim):
        self.path = path
        self.dim = int(dim)
        self._entries = []  # (author_id, payload_offset, rows)
        self._seen = set()
        self._spill = tempfile.NamedTemporaryFile(
            prefix="av1embed_", suffix=".payload", delete=False
        )
        self._payload_bytes = 0
        self._closed = False

    def add_author(self, author_id, rows):
        if self._closed:
            raise RuntimeError("writer already finalized")
        if author_id in self._seen:
            raise ValueError(f"duplicate author id {author_id!r}")
        matrix = np.ascontiguousarray(rows, dtype="<f4")
        if matrix.ndim != 2 or matrix.shape[1] != self.dim:
            raise ValueError(
                f"author {author_id!r} block has shape {matrix.shape}, expected (*, {self.dim})"
            )
        if matrix.shape[0] < 1:
            raise ValueError(f"author {author_id!r} has no rows")
        if not np.all(np.isfinite(matrix)):
            raise ValueError(f"non-finite embedding values for {author_id!r}")
        self._seen.add(author_id)
        self._entries.append((author_id, self._payload_bytes, matrix.shape[0]))
        data = matrix.tobytes()
        self._spill.write(data)
        self._payload_bytes += len(data)

    def close(self):
        if self._closed:
            return
        self._closed = True
        self._spill.flush()
        encoded = [(a.encode("utf-8"), off, rows) for a, off, rows in self._entries]
        index_size = sum(2 + len(e) + 8 + 4 for e, _, _ in encoded)
        payload_start = len(MAGIC) + 4 + 4 + 8 + index_size
        with open(self.path, "wb") as out:
            out.write(MAGIC)
            out.write(struct.pack("<IIQ", VERSION, self.dim, len(encoded)))
            for enc, off, rows in encoded:
                out.write(struct.pack("<H", len(enc)))
                out.write(enc)
                out.write(struct.pack("<QI", payload_start + off, rows))
            self._spill.seek(0)
            shutil.copyfileobj(self._spill, out)
        self._spill.close()
        os.unlink(self._spill.name)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc_type is None:
            self.close()
        else:
            self._spill.close()
            os.unlink(self._spill.name)
        return False
