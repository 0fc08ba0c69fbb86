"""Count-based and prediction-based baseline user embedders.

LSI: TF-IDF post vectors projected through a truncated SVD computed with a
randomized range-finder. LDA: collapsed Gibbs sampling with fold-in
inference for unseen documents. Word vectors: unweighted averaging over a
pretrained table. All fits are deterministic given (corpus, config, seed).
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from author2vec.errors import ConfigError, DataError, StoreFormatError

try:
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but keep a fallback
    _HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn

        return deco if not (args and callable(args[0])) else args[0]


# --- bag of words ------------------------------------------------------------


@dataclass
class BowDictionary:
    """Token -> column id with document-frequency based pruning."""

    token_to_id: dict
    doc_freqs: np.ndarray
    n_docs: int
    min_df: int
    max_df_frac: float

    @property
    def size(self):
        return len(self.token_to_id)

    def idf(self):
        return np.log(self.n_docs / self.doc_freqs)


def build_dictionary(posts, min_df=10, max_df_frac=0.30):
    """Count per-post document frequencies, drop tokens outside
    [min_df, max_df_frac * N], assign ids lexicographically."""
    if not posts:
        raise DataError("cannot build a dictionary from zero posts")
    n_docs = len(posts)
    df = {}
    for tokens in posts:
        for t in set(tokens):
            df[t] = df.get(t, 0) + 1
    kept = sorted(
        t for t, d in df.items() if d >= min_df and d / n_docs <= max_df_frac
    )
    if not kept:
        raise DataError(
            f"document-frequency filter removed every token "
            f"(min_df={min_df}, max_df_frac={max_df_frac})"
        )
    token_to_id = {t: i for i, t in enumerate(kept)}
    freqs = np.array([df[t] for t in kept], dtype=float)
    return BowDictionary(token_to_id, freqs, n_docs, min_df, max_df_frac)


def counts_vector(tokens, dictionary):
    ids = [dictionary.token_to_id[t] for t in tokens if t in dictionary.token_to_id]
    vec = np.zeros(dictionary.size)
    for i in ids:
        vec[i] += 1.0
    return vec


def tfidf_vector(post, dictionary):
    """tf = raw count, idf = ln(N / df), out-of-dictionary tokens ignored.
    Returns a 1 x vocab sparse row."""
    tf = counts_vector(post, dictionary)
    return sp.csr_matrix(tf * dictionary.idf())


def tfidf_matrix(posts, dictionary):
    rows, cols, vals = [], [], []
    idf = dictionary.idf()
    for r, tokens in enumerate(posts):
        counts = {}
        for t in tokens:
            i = dictionary.token_to_id.get(t)
            if i is not None:
                counts[i] = counts.get(i, 0) + 1
        for i, c in counts.items():
            rows.append(r)
            cols.append(i)
            vals.append(c * idf[i])
    return sp.csr_matrix((vals, (rows, cols)), shape=(len(posts), dictionary.size))


# --- truncated SVD -----------------------------------------------------------


def randomized_svd(matrix, rank, seed, oversample=10, power_iters=2):
    """Halko-style randomized range-finder with re-orthonormalized power
    iterations. Returns (U, s, Vt) truncated to `rank`."""
    m, n = matrix.shape
    if rank > min(m, n):
        raise ConfigError(f"rank {rank} exceeds min(matrix shape) {min(m, n)}")
    rng = np.random.default_rng(seed)
    ell = min(rank + oversample, min(m, n))
    omega = rng.standard_normal((n, ell))
    y = matrix @ omega
    q, _ = np.linalg.qr(y)
    for _ in range(power_iters):
        z, _ = np.linalg.qr(matrix.T @ q)
        q, _ = np.linalg.qr(matrix @ z)
    b = (matrix.T @ q).T if sp.issparse(matrix) else q.T @ matrix
    ub, s, vt = np.linalg.svd(b, full_matrices=False)
    u = q @ ub
    return u[:, :rank], s[:rank], vt[:rank, :]


@dataclass
class LsiModel:
    dictionary: BowDictionary
    idf_weights: np.ndarray = field(repr=False)
    projection: np.ndarray = field(repr=False)  # vocab x rank, right-singular dirs
    singular_values: np.ndarray = field(repr=False)

    @property
    def rank(self):
        return self.projection.shape[1]

    def project(self, tfidf_row):
        return np.asarray(tfidf_row @ self.projection).ravel()


def fit_lsi(matrix, rank, seed, dictionary=None, oversample=10, power_iters=2):
    """Truncated SVD of a (doc x term) TF-IDF matrix."""
    _, s, vt = randomized_svd(matrix, rank, seed, oversample, power_iters)
    idf = dictionary.idf() if dictionary is not None else None
    return LsiModel(
        dictionary=dictionary,
        idf_weights=idf,
        projection=vt.T.copy(),
        singular_values=s,
    )


def fit_lsi_from_posts(posts, rank, seed, min_df=10, max_df_frac=0.30, **kw):
    dictionary = build_dictionary(posts, min_df=min_df, max_df_frac=max_df_frac)
    matrix = tfidf_matrix(posts, dictionary)
    return fit_lsi(matrix, rank, seed, dictionary=dictionary, **kw)


def lsi_user_embedding(author_posts, model, mode="concat_doc"):
    """Project one author into LSI space.

    concat_doc: one TF-IDF vector over all posts concatenated, then project.
    mean_post: project each post separately and average.
    Returns (vector, warned) where warned flags an author with zero
    in-dictionary tokens (vector is all zeros then).
    """
    if model.dictionary is None:
        raise ConfigError("LSI model was fitted without a dictionary")
    if mode not in ("concat_doc", "mean_post"):
        raise ConfigError(f"unknown LSI user-embedding mode {mode!r}")
    d = model.dictionary
    if mode == "concat_doc":
        merged = [t for post in author_posts for t in post]
        counts = counts_vector(merged, d)
        if counts.sum() == 0:
            return np.zeros(model.rank), True
        return model.project(counts * d.idf()), False
    per_post = []
    for post in author_posts:
        counts = counts_vector(post, d)
        if counts.sum() > 0:
            per_post.append(model.project(counts * d.idf()))
    if not per_post:
        return np.zeros(model.rank), True
    return np.mean(per_post, axis=0), False


def lsi_post_vectors(author_posts, model):
    """Per-post LSI vectors in post order (sequence input for the LSI-based
    encoder variant). Posts with no in-dictionary tokens map to zeros."""
    out = []
    d = model.dictionary
    for post in author_posts:
        counts = counts_vector(post, d)
        out.append(model.project(counts * d.idf()) if counts.sum() > 0 else np.zeros(model.rank))
    return np.asarray(out)


# --- LDA ---------------------------------------------------------------------


@dataclass
class LdaModel:
    topic_word: np.ndarray = field(repr=False)  # K x V counts
    alpha: float = 0.1
    beta: float = 0.01
    dictionary: BowDictionary | None = None

    @property
    def n_topics(self):
        return self.topic_word.shape[0]

    @property
    def vocab_size(self):
        return self.topic_word.shape[1]

    def phi(self):
        """Smoothed topic-word distributions; each row sums to 1."""
        sums = self.topic_word.sum(axis=1, keepdims=True)
        return (self.topic_word + self.beta) / (sums + self.vocab_size * self.beta)


@njit(cache=True)
def _xorshift(state):
    # xorshift64* over an explicit uint64 so runs are reproducible
    state ^= state >> np.uint64(12)
    state ^= state << np.uint64(25)
    state ^= state >> np.uint64(27)
    return state * np.uint64(0x2545F4914F6CDD1D)


@njit(cache=True)
def _gibbs_sweeps(doc_ids, word_ids, z, n_kw, n_k, n_dk, alpha, beta, iterations, state, freeze_topics):
    K, V = n_kw.shape
    n_tokens = doc_ids.shape[0]
    p = np.empty(K)
    for _ in range(iterations):
        for i in range(n_tokens):
            d = doc_ids[i]
            w = word_ids[i]
            k_old = z[i]
            if not freeze_topics:
                n_kw[k_old, w] -= 1
                n_k[k_old] -= 1
            n_dk[d, k_old] -= 1
            total = 0.0
            for k in range(K):
                val = (n_kw[k, w] + beta) / (n_k[k] + V * beta) * (n_dk[d, k] + alpha)
                p[k] = val
                total += val
            state = _xorshift(state)
            r = (state >> np.uint64(11)) * (1.0 / 9007199254740992.0) * total
            acc = 0.0
            k_new = K - 1
            for k in range(K):
                acc += p[k]
                if r < acc:
                    k_new = k
                    break
            z[i] = k_new
            if not freeze_topics:
                n_kw[k_new, w] += 1
                n_k[k_new] += 1
            n_dk[d, k_new] += 1
    return state


def _expand_tokens(matrix):
    """Flatten a (doc x term) count matrix into parallel doc/word id streams."""
    coo = sp.coo_matrix(matrix)
    doc_ids, word_ids = [], []
    for d, w, c in zip(coo.row, coo.col, coo.data):
        reps = int(round(c))
        doc_ids.extend([d] * reps)
        word_ids.extend([w] * reps)
    return np.asarray(doc_ids, dtype=np.int64), np.asarray(word_ids, dtype=np.int64)


def fit_lda(matrix, n_topics, alpha=None, beta=0.01, iterations=500, seed=0, dictionary=None):
    """Collapsed Gibbs sampling over token-topic assignments.

    Defaults follow the common alpha = 50/K, beta = 0.01 choice. The sampler
    conserves token counts after every sweep and is deterministic given the
    seed.
    """
    if n_topics < 1 or iterations < 1:
        raise ConfigError("need n_topics >= 1 and iterations >= 1")
    m, v = matrix.shape
    doc_ids, word_ids = _expand_tokens(matrix)
    if doc_ids.size == 0:
        raise DataError("LDA training matrix has no tokens")
    alpha = 50.0 / n_topics if alpha is None else alpha
    if alpha <= 0 or beta <= 0:
        raise ConfigError("alpha and beta must be positive")

    rng = np.random.default_rng(seed)
    z = rng.integers(0, n_topics, size=doc_ids.size).astype(np.int64)
    n_kw = np.zeros((n_topics, v), dtype=np.int64)
    n_k = np.zeros(n_topics, dtype=np.int64)
    n_dk = np.zeros((m, n_topics), dtype=np.int64)
    for i in range(doc_ids.size):
        n_kw[z[i], word_ids[i]] += 1
        n_k[z[i]] += 1
        n_dk[doc_ids[i], z[i]] += 1

    state = np.uint64(rng.integers(1, 2**63 - 1))
    _gibbs_sweeps(
        doc_ids, word_ids, z, n_kw, n_k, n_dk,
        float(alpha), float(beta), int(iterations), state, False,
    )
    return LdaModel(topic_word=n_kw.astype(float), alpha=float(alpha), beta=float(beta), dictionary=dictionary), z


def lda_user_embedding(author_posts, model, sweeps=50, seed=0):
    """Fold-in inference on the author's concatenated document with the
    topic-word counts frozen. Returns (theta, warned); theta sums to 1 and
    is uniform for an author with no in-dictionary tokens."""
    if model.dictionary is None:
        raise ConfigError("LDA model was fitted without a dictionary")
    K = model.n_topics
    merged = [t for post in author_posts for t in post]
    word_ids = np.asarray(
        [model.dictionary.token_to_id[t] for t in merged if t in model.dictionary.token_to_id],
        dtype=np.int64,
    )
    if word_ids.size == 0:
        return np.full(K, 1.0 / K), True
    doc_ids = np.zeros(word_ids.size, dtype=np.int64)
    rng = np.random.default_rng(seed)
    z = rng.integers(0, K, size=word_ids.size).astype(np.int64)
    n_kw = model.topic_word.astype(np.int64).copy()
    n_k = n_kw.sum(axis=1)
    n_dk = np.zeros((1, K), dtype=np.int64)
    for i in range(z.size):
        n_dk[0, z[i]] += 1
    state = np.uint64(rng.integers(1, 2**63 - 1))
    _gibbs_sweeps(
        doc_ids, word_ids, z, n_kw, n_k, n_dk,
        model.alpha, model.beta, int(sweeps), state, True,
    )
    theta = (n_dk[0] + model.alpha) / (word_ids.size + K * model.alpha)
    return theta, False


# --- pretrained word vectors ---------------------------------------------------


@dataclass
class WordVectorTable:
    vectors: dict
    dim: int

    @property
    def vocab_size(self):
        return len(self.vectors)

    @classmethod
    def from_file(cls, path):
        """Standard text format: first line `count dim`, then token + floats."""
        with open(path, "r", encoding="utf-8") as fh:
            header = fh.readline().split()
            if len(header) != 2:
                raise DataError(f"word-vector file {path} missing `count dim` header")
            count, dim = int(header[0]), int(header[1])
            vectors = {}
            for line in fh:
                parts = line.rstrip("\n").split(" ")
                if len(parts) != dim + 1:
                    raise DataError(f"bad word-vector row for token {parts[0]!r}")
                vectors[parts[0]] = np.asarray(parts[1:], dtype=float)
        if len(vectors) != count:
            raise DataError(
                f"word-vector file {path} promises {count} rows, has {len(vectors)}"
            )
        return cls(vectors=vectors, dim=dim)


def wordvec_user_embedding(author_posts, table):
    """Unweighted mean over all token occurrences with a table entry.
    Returns (vector, warned); zero vector when nothing matched."""
    total = np.zeros(table.dim)
    n = 0
    for post in author_posts:
        for t in post:
            v = table.vectors.get(t)
            if v is not None:
                total += v
                n += 1
    if n == 0:
        return total, True
    return total / n, False


# --- model save/load -----------------------------------------------------------

LSI_MAGIC = b"AV1LSI__"
LDA_MAGIC = b"AV1LDA__"
_FORMAT_VERSION = 1


def _write_tokens(fh, tokens):
    fh.write(struct.pack("<I", len(tokens)))
    for t in tokens:
        enc = t.encode("utf-8")
        fh.write(struct.pack("<H", len(enc)))
        fh.write(enc)


def _read_tokens(fh):
    (count,) = struct.unpack("<I", fh.read(4))
    out = []
    for _ in range(count):
        (n,) = struct.unpack("<H", fh.read(2))
        out.append(fh.read(n).decode("utf-8"))
    return out


def _write_array(fh, arr):
    arr = np.ascontiguousarray(arr, dtype="<f8")
    fh.write(struct.pack("<B", arr.ndim))
    for d in arr.shape:
        fh.write(struct.pack("<Q", d))
    fh.write(arr.tobytes())


def _read_array(fh):
    (ndim,) = struct.unpack("<B", fh.read(1))
    shape = tuple(struct.unpack("<Q", fh.read(8))[0] for _ in range(ndim))
    n = int(np.prod(shape)) if shape else 1
    return np.frombuffer(fh.read(8 * n), dtype="<f8").reshape(shape).copy()


def _write_dictionary(fh, d):
    tokens = sorted(d.token_to_id, key=d.token_to_id.get)
    _write_tokens(fh, tokens)
    fh.write(struct.pack("<QdI", d.n_docs, d.max_df_frac, d.min_df))
    _write_array(fh, d.doc_freqs)


def _read_dictionary(fh):
    tokens = _read_tokens(fh)
    n_docs, max_df_frac, min_df = struct.unpack("<QdI", fh.read(20))
    doc_freqs = _read_array(fh)
    return BowDictionary(
        {t: i for i, t in enumerate(tokens)}, doc_freqs, n_docs, min_df, max_df_frac
    )


def save_lsi(model, path):
    with open(path, "wb") as fh:
        fh.write(LSI_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        _write_dictionary(fh, model.dictionary)
        _write_array(fh, model.idf_weights)
        _write_array(fh, model.projection)
        _write_array(fh, model.singular_values)


def load_lsi(path):
    with open(path, "rb") as fh:
        if fh.read(8) != LSI_MAGIC:
            raise StoreFormatError(f"bad LSI model magic in {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _FORMAT_VERSION:
            raise StoreFormatError(f"unsupported LSI model version {version}")
        dictionary = _read_dictionary(fh)
        idf = _read_array(fh)
        projection = _read_array(fh)
        singular = _read_array(fh)
    return LsiModel(dictionary, idf, projection, singular)


def save_lda(model, path):
    with open(path, "wb") as fh:
        fh.write(LDA_MAGIC)
        fh.write(struct.pack("<I", _FORMAT_VERSION))
        fh.write(struct.pack("<dd", model.alpha, model.beta))
        _write_dictionary(fh, model.dictionary)
        _write_array(fh, model.topic_word)


def load_lda(path):
    with open(path, "rb") as fh:
        if fh.read(8) != LDA_MAGIC:
            raise StoreFormatError(f"bad LDA model magic in {path}")
        (version,) = struct.unpack("<I", fh.read(4))
        if version != _FORMAT_VERSION:
            raise StoreFormatError(f"unsupported LDA model version {version}")
        alpha, beta = struct.unpack("<dd", fh.read(16))
        dictionary = _read_dictionary(fh)
        topic_word = _read_array(fh)
    return LdaModel(topic_word=topic_word, alpha=alpha, beta=beta, dictionary=dictionary)
