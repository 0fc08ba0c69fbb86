"""Binary interchange format for per-author post-embedding matrices, plus a
deterministic stub embedder so the pipeline is testable without any
pretrained sentence encoder.

File layout (all integers little-endian):

    magic        8 bytes  b"AV1EMBED"
    version      u32
    dim          u32      embedding width (0 only for an empty file)
    author_count u64
    index        per author: u16 id length, UTF-8 id, u64 byte offset
                 (absolute, start of that author's payload), u32 row count
    payload      per author: rows * dim float32, row-major, chronological

Authors occupy contiguous payload blocks so one author streams with one
seek. Files are write-once; readers may share a path concurrently.
"""
from __future__ import annotations

import hashlib
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from author2vec.errors import (
    DataError,
    StoreFormatError,
    TruncatedFileError,
    UnknownAuthorError,
)

MAGIC = b"AV1EMBED"
VERSION = 1


@dataclass
class PostEmbeddingMatrix:
    """One author's post vectors, one row per post in chronological order."""

    author_id: str
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float32)
        if self.values.ndim != 2:
            raise DataError(f"embedding matrix for {self.author_id!r} must be 2-d")
        if self.rows < 1 or self.dim < 1:
            raise DataError(
                f"embedding matrix for {self.author_id!r} needs >=1 row and dim>0"
            )
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"non-finite embedding values for {self.author_id!r}")

    @property
    def rows(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


def write_embeddings(records, path):
    """Write records to `path`. Round-trips bit-exactly via read_embeddings."""
    dims = {r.dim for r in records}
    if len(dims) > 1:
        raise DataError(f"mixed embedding dims {sorted(dims)}")
    dim = dims.pop() if dims else 0
    seen = set()
    for r in records:
        if r.author_id in seen:
            raise DataError(f"duplicate author id {r.author_id!r}")
        seen.add(r.author_id)

    encoded_ids = [r.author_id.encode("utf-8") for r in records]
    index_size = sum(2 + len(e) + 8 + 4 for e in encoded_ids)
    offset = len(MAGIC) + 4 + 4 + 8 + index_size

    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQ", VERSION, dim, len(records)))
        for r, enc in zip(records, encoded_ids):
            fh.write(struct.pack("<H", len(enc)))
            fh.write(enc)
            fh.write(struct.pack("<QI", offset, r.rows))
            offset += r.rows * dim * 4
        for r in records:
            fh.write(np.ascontiguousarray(r.values, dtype="<f4").tobytes())


def _read_exact(fh, n, what):
    data = fh.read(n)
    if len(data) != n:
        raise TruncatedFileError(f"embedding file truncated while reading {what}")
    return data


def read_index(path):
    """Parse header and index only. Returns (dim, {author_id: (offset, rows)})."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise StoreFormatError(f"bad magic {magic!r} in {path}")
        version, dim, count = struct.unpack("<IIQ", _read_exact(fh, 16, "header"))
        if version != VERSION:
            raise StoreFormatError(f"unsupported embedding file version {version}")
        index = {}
        prev_end = None
        for _ in range(count):
            (id_len,) = struct.unpack("<H", _read_exact(fh, 2, "index id length"))
            author_id = _read_exact(fh, id_len, "index id").decode("utf-8")
            off, rows = struct.unpack("<QI", _read_exact(fh, 12, author_id))
            if prev_end is not None and off < prev_end:
                raise StoreFormatError(f"overlapping index offsets at {author_id!r}")
            prev_end = off + rows * dim * 4
            index[author_id] = (off, rows)
    return dim, index


def read_embeddings(path, authors=None):
    """Load matrices, optionally restricted to an author-id filter.

    Filtered reads seek straight to each requested block; unrelated rows are
    never read. Raises UnknownAuthorError for ids missing from the index,
    TruncatedFileError when the payload ends early, and DataError for
    non-finite values.
    """
    dim, index = read_index(path)
    if authors is None:
        wanted = list(index.keys())
    else:
        wanted = list(authors)
        missing = [a for a in wanted if a not in index]
        if missing:
            raise UnknownAuthorError(f"authors not in file index: {missing}")

    file_size = os.path.getsize(path)
    out = []
    with open(path, "rb") as fh:
        for author_id in wanted:
            off, rows = index[author_id]
            n_bytes = rows * dim * 4
            if off + n_bytes > file_size:
                raise TruncatedFileError(
                    f"payload for author {author_id!r} extends past end of file"
                )
            fh.seek(off)
            payload = fh.read(n_bytes)
            values = np.frombuffer(payload, dtype="<f4").reshape(rows, dim)
            if not np.all(np.isfinite(values)):
                raise DataError(f"non-finite embedding values for {author_id!r}")
            out.append(PostEmbeddingMatrix(author_id, values.copy()))
    return out


# --- stub embedder -----------------------------------------------------------

SIGNATURE_WEIGHT = 0.6
CONTENT_WEIGHT = 0.8


def _hash_direction(key, dim):
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(words)))
    v = rng.standard_normal(dim)
    return v / np.linalg.norm(v)


def stub_embed(post, dim, seed, trait=0.0):
    """Deterministic unit vector standing in for a real post encoder.

    Mixes an author-signature direction (weight 0.6) with content noise
    hashed from the post's token multiset (weight 0.8), then renormalizes,
    so same-author posts correlate while staying distinguishable. `trait`
    adds a signed component along a fixed per-seed axis; synthetic corpora
    use it to plant a binary attribute in embedding space (0 for real use).
    """
    if dim <= 0:
        raise ValueError("dim must be positive")
    tokens = sorted(post.text.lower().split())
    sig = _hash_direction(f"author|{seed}|{post.author_id}", dim)
    content = _hash_direction(f"content|{seed}|" + "\x1f".join(tokens), dim)
    v = SIGNATURE_WEIGHT * sig + CONTENT_WEIGHT * content
    if trait != 0.0:
        v = v + trait * _hash_direction(f"trait-axis|{seed}", dim)
    return v / np.linalg.norm(v)


def stub_embed_corpus(records, dim, seed, traits=None, threads=1):
    """Embed every post of every AuthorRecord with the stub embedder.

    `traits` maps author_id to the planted-trait strength (default 0).
    Per-author work is independent; results keep the input author order.
    """
    traits = traits or {}

    def embed_one(record):
        t = float(traits.get(record.author_id, 0.0))
        rows = [stub_embed(p, dim, seed, trait=t) for p in record.posts]
        return PostEmbeddingMatrix(record.author_id, np.asarray(rows, dtype=np.float32))

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(embed_one, records))
    return [embed_one(r) for r in records]
