"""Author embedding model: bidirectional GRU over post-vector sequences into
a k-sparse code, pretrained on authorship classification with an MLP head.

Pre-training minimizes softmax cross-entropy over author identity on
randomly sampled post subsets. At inference the head is dropped and the
k-sparse code (k_infer nonzeros at most) is the author embedding.
"""
from __future__ import annotations

import copy
import math
import os
from dataclasses import dataclass, field

import numpy as np

from author2vec.errors import ConfigError, DataError, NumericError, TrainingDiverged
from author2vec.nn.checkpoint import load_checkpoint, save_checkpoint
from author2vec.nn.gru import GruCell, gru_backward_batch, gru_forward_batch
from author2vec.nn.layers import DenseLayer, KSparseLayer, softmax_xent_batch
from author2vec.nn.optim import AdamState, adam_step, clip_gradients


@dataclass
class PretrainConfig:
    posts_min: int = 10
    posts_max: int = 40
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    lr: float = 1e-3
    lr_decay: float = 1.0
    authors: int | None = None
    use_all_posts: bool = False
    heldout_posts: int = 10
    hidden_size: int = 512
    code_dim: int = 768
    k_train: int = 32
    k_infer: int = 64
    head_hidden: tuple = (256,)
    pooling: str = "final"
    clip_norm: float = 5.0
    patience: int = 5
    # each author contributes ceil(train_posts / this) samples per epoch
    posts_per_epoch_unit: int = 25

    def __post_init__(self):
        if self.posts_min < 1 or self.posts_max < self.posts_min:
            raise ConfigError("need 1 <= posts_min <= posts_max")
        if self.pooling not in ("final", "mean"):
            raise ConfigError(f"unknown pooling {self.pooling!r}")


@dataclass
class AuthorEmbedding:
    author_id: str
    vector: np.ndarray = field(repr=False)

    @property
    def nonzeros(self):
        return int(np.count_nonzero(self.vector))


class AuthorVecModel:
    """Bi-GRU encoder + k-sparse code, with an optional classification head
    (hidden ReLU stack plus a zero-initialized softmax output layer).

    The zero output-layer init keeps the training trajectory invariant under
    relabeling of author class ids.
    """

    def __init__(
        self,
        input_dim,
        hidden_size=512,
        code_dim=768,
        k_train=32,
        k_infer=64,
        head_hidden=(256,),
        n_authors=None,
        author_ids=None,
        pooling="final",
        seed=0,
    ):
        rng = np.random.default_rng(seed)
        self.input_dim = input_dim
        self.hidden_size = hidden_size
        self.pooling = pooling
        self.fwd = GruCell(input_dim, hidden_size, rng=rng)
        self.bwd = GruCell(input_dim, hidden_size, rng=rng)
        self.ksparse = KSparseLayer(2 * hidden_size, code_dim, k_train, k_infer, rng=rng)
        self.author_ids = list(author_ids) if author_ids is not None else None
        self.head = None
        if n_authors is not None:
            widths = [code_dim, *head_hidden]
            layers = [
                DenseLayer(w_in, w_out, activation="relu", rng=rng)
                for w_in, w_out in zip(widths, widths[1:])
            ]
            layers.append(DenseLayer(widths[-1], n_authors, activation="linear", zero_init=True))
            self.head = layers

    # -- parameter plumbing ---------------------------------------------------

    def params(self):
        out = {}
        for name, p in self.fwd.params().items():
            out[f"fwd.{name}"] = p
        for name, p in self.bwd.params().items():
            out[f"bwd.{name}"] = p
        for name, p in self.ksparse.params().items():
            out[f"ksparse.{name}"] = p
        if self.head is not None:
            for i, layer in enumerate(self.head):
                out[f"head.{i}.W"] = layer.W
                out[f"head.{i}.b"] = layer.b
        return out

    def snapshot(self):
        return {name: p.copy() for name, p in self.params().items()}

    def restore(self, snap):
        for name, p in self.params().items():
            np.copyto(p, snap[name])

    # -- forward / backward ---------------------------------------------------

    def encode_batch(self, x, mask, mode, ksparse_mask=None):
        """x (T, b, d), mask (T, b) -> (code (b, code_dim), cache)."""
        hs_f, h_f, cache_f = gru_forward_batch(self.fwd, x, mask=mask)
        x_rev, mask_rev = _reverse_padded(x, mask)
        hs_b, h_b, cache_b = gru_forward_batch(self.bwd, x_rev, mask=mask_rev)
        if self.pooling == "final":
            pooled = np.concatenate([h_f, h_b], axis=1)
            pool_cache = None
        else:
            lengths = mask.sum(axis=0)[:, None]
            mean_f = (hs_f * mask[:, :, None]).sum(axis=0) / lengths
            mean_b = (hs_b * mask_rev[:, :, None]).sum(axis=0) / lengths
            pooled = np.concatenate([mean_f, mean_b], axis=1)
            pool_cache = lengths
        code, ks_cache = self.ksparse.forward(pooled, mode=mode, mask_override=ksparse_mask)
        return code, (cache_f, cache_b, ks_cache, pool_cache, mask, mask_rev)

    def encode_backward(self, cache, dcode, grads):
        cache_f, cache_b, ks_cache, pool_cache, mask, mask_rev = cache
        dpooled, ks_grads = self.ksparse.backward(ks_cache, dcode)
        grads["ksparse.W"] += ks_grads["W"]
        grads["ksparse.b"] += ks_grads["b"]
        H = self.hidden_size
        d_first, d_second = dpooled[:, :H], dpooled[:, H:]
        if self.pooling == "final":
            g_f, _ = gru_backward_batch(self.fwd, cache_f, dh_last=d_first)
            g_b, _ = gru_backward_batch(self.bwd, cache_b, dh_last=d_second)
        else:
            lengths = pool_cache
            dhs_f = (mask[:, :, None] / lengths) * d_first[None, :, :]
            dhs_b = (mask_rev[:, :, None] / lengths) * d_second[None, :, :]
            g_f, _ = gru_backward_batch(self.fwd, cache_f, dhs=dhs_f)
            g_b, _ = gru_backward_batch(self.bwd, cache_b, dhs=dhs_b)
        for name, g in g_f.items():
            grads[f"fwd.{name}"] += g
        for name, g in g_b.items():
            grads[f"bwd.{name}"] += g

    def head_forward(self, code):
        if self.head is None:
            raise ConfigError("model has no classification head")
        caches = []
        h = code
        for layer in self.head:
            h, c = layer.forward(h)
            caches.append(c)
        return h, caches

    def head_backward(self, caches, dlogits, grads):
        d = dlogits
        for i in range(len(self.head) - 1, -1, -1):
            d, layer_grads = self.head[i].backward(caches[i], d)
            grads[f"head.{i}.W"] += layer_grads["W"]
            grads[f"head.{i}.b"] += layer_grads["b"]
        return d

    def zero_grads(self):
        return {name: np.zeros_like(p) for name, p in self.params().items()}


def _reverse_padded(x, mask):
    """Per-sample time reversal of an end-padded batch: step t of the output
    is original step (len_i - 1 - t) for t < len_i, padding unchanged."""
    T, b, _ = x.shape
    lengths = mask.sum(axis=0).astype(int)
    idx = np.arange(T)[:, None]
    src = lengths[None, :] - 1 - idx
    src = np.where(src >= 0, src, idx)  # padding rows map to themselves
    x_rev = x[src, np.arange(b)[None, :], :]
    return x_rev, mask


def sample_training_example(author, config, rng, class_id=0):
    """Uniform random post subset (without replacement, chronological order)
    of a size drawn from [posts_min, min(posts_max, n)]."""
    n = author.rows
    if n < config.posts_min:
        raise DataError(
            f"author {author.author_id!r} has {n} posts, need >= {config.posts_min}"
        )
    hi = min(config.posts_max, n)
    size = int(rng.integers(config.posts_min, hi + 1))
    idx = np.sort(rng.choice(n, size=size, replace=False))
    return author.values[idx].astype(float), class_id


def _make_batches(examples, batch_size, rng):
    """Bucket same-epoch examples by length so padding stays small, then
    shuffle the batch order."""
    order = sorted(range(len(examples)), key=lambda i: examples[i][0].shape[0])
    batches = [order[i : i + batch_size] for i in range(0, len(order), batch_size)]
    rng.shuffle(batches)
    return batches


def _pad_batch(seqs):
    T = max(s.shape[0] for s in seqs)
    b = len(seqs)
    d = seqs[0].shape[1]
    x = np.zeros((T, b, d))
    mask = np.zeros((T, b))
    for i, s in enumerate(seqs):
        x[: s.shape[0], i, :] = s
        mask[: s.shape[0], i] = 1.0
    return x, mask


def pretrain(records, config, checkpoint_dir=None, model=None, log_fn=None, class_ids=None):
    """Authorship-classification pre-training.

    Returns (model, log) where log is one dict per epoch. Unless
    config.use_all_posts, heldout_posts per author are reserved and top-1 /
    top-5 authorship accuracy on them is logged each epoch, with early
    stopping once held-out top-5 plateaus for `patience` epochs. A
    non-finite loss restores the last epoch-end snapshot and raises
    TrainingDiverged.

    class_ids optionally relabels authors (position -> class id); the loss
    trajectory is invariant under any such permutation because the softmax
    output layer starts at zero.
    """
    records = list(records)
    if config.authors is not None:
        records = records[: config.authors]
    if len(records) < 2:
        raise DataError("pre-training needs at least 2 authors")
    dims = {r.dim for r in records}
    if len(dims) != 1:
        raise DataError(f"mixed embedding dims in training corpus: {sorted(dims)}")
    input_dim = dims.pop()

    if class_ids is None:
        class_ids = list(range(len(records)))
    if sorted(class_ids) != list(range(len(records))):
        raise ConfigError("class_ids must be a permutation of 0..n_authors-1")

    rng = np.random.default_rng(config.seed)
    author_ids = [None] * len(records)
    for record, cid in zip(records, class_ids):
        author_ids[cid] = record.author_id

    if model is None:
        model = AuthorVecModel(
            input_dim=input_dim,
            hidden_size=config.hidden_size,
            code_dim=config.code_dim,
            k_train=config.k_train,
            k_infer=config.k_infer,
            head_hidden=tuple(config.head_hidden),
            n_authors=len(records),
            author_ids=author_ids,
            pooling=config.pooling,
            seed=config.seed,
        )
    elif model.head is None:
        raise ConfigError("model head was stripped; cannot pretrain an inference-only model")
    elif model.head[-1].out_dim != len(records):
        raise ConfigError(
            f"model head covers {model.head[-1].out_dim} authors, corpus has {len(records)}"
        )

    # held-out split: seeded random subset per author, absent with use_all_posts
    train_views, heldout_views = [], []
    for r in records:
        n = r.rows
        if config.use_all_posts or config.heldout_posts <= 0 or n - config.heldout_posts < config.posts_min:
            train_views.append(r.values.astype(float))
            heldout_views.append(None)
        else:
            held = np.sort(rng.choice(n, size=config.heldout_posts, replace=False))
            keep = np.setdiff1d(np.arange(n), held)
            train_views.append(r.values[keep].astype(float))
            heldout_views.append(r.values[held].astype(float))
    have_heldout = any(h is not None for h in heldout_views)

    class _View:
        def __init__(self, author_id, values):
            self.author_id = author_id
            self.values = values
            self.rows = values.shape[0]

    views = [_View(r.author_id, v) for r, v in zip(records, train_views)]

    opt = AdamState(lr=config.lr)
    params = model.params()
    history = []
    best_top5 = -1.0
    since_best = 0
    last_snapshot = model.snapshot()
    last_ckpt_path = None

    for epoch in range(config.epochs):
        opt.lr = config.lr * (config.lr_decay ** epoch)
        examples = []
        for cid, view in enumerate(views):
            n_samples = max(1, math.ceil(view.rows / config.posts_per_epoch_unit))
            for _ in range(n_samples):
                examples.append(sample_training_example(view, config, rng, class_id=cid))
        batches = _make_batches(examples, config.batch_size, rng)

        epoch_loss = 0.0
        n_batches = 0
        try:
            for batch_idx in batches:
                seqs = [examples[i][0] for i in batch_idx]
                targets = np.array([class_ids[examples[i][1]] for i in batch_idx])
                x, mask = _pad_batch(seqs)
                grads = model.zero_grads()
                code, cache = model.encode_batch(x, mask, mode="train")
                logits, head_caches = model.head_forward(code)
                loss, dlogits = softmax_xent_batch(logits, targets)
                dcode = model.head_backward(head_caches, dlogits, grads)
                model.encode_backward(cache, dcode, grads)
                clip_gradients(grads, config.clip_norm)
                adam_step(opt, params, grads)
                epoch_loss += loss
                n_batches += 1
        except NumericError as exc:
            model.restore(last_snapshot)
            raise TrainingDiverged(
                f"training diverged in epoch {epoch}: {exc}",
                last_good_epoch=epoch - 1,
                checkpoint_path=last_ckpt_path,
            ) from exc

        entry = {
            "epoch": epoch,
            "loss": epoch_loss / max(n_batches, 1),
            "lr": opt.lr,
            "samples": len(examples),
        }
        if have_heldout:
            top1, top5 = _heldout_accuracy(model, heldout_views, config, class_ids)
            entry["heldout_top1"] = top1
            entry["heldout_top5"] = top5
        history.append(entry)
        if log_fn is not None:
            log_fn(entry)

        last_snapshot = model.snapshot()
        if checkpoint_dir is not None:
            last_ckpt_path = os.path.join(checkpoint_dir, f"epoch_{epoch:03d}.ckpt")
            save_model(model, last_ckpt_path, optimizer=opt, extra_meta={"epoch": epoch})

        if have_heldout:
            if entry["heldout_top5"] > best_top5 + 1e-12:
                best_top5 = entry["heldout_top5"]
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    entry["early_stop"] = True
                    break

    return model, history


def _heldout_accuracy(model, heldout_views, config, class_ids, chunk=64):
    """Top-1/top-5 authorship accuracy, one sample per author from its
    held-out posts, scored through the training-mode sparse code."""
    pairs = [(class_ids[i], h) for i, h in enumerate(heldout_views) if h is not None]
    hits1 = hits5 = 0
    for start in range(0, len(pairs), chunk):
        part = pairs[start : start + chunk]
        seqs = [h[: config.posts_max] for _, h in part]
        targets = np.array([cid for cid, _ in part])
        x, mask = _pad_batch(seqs)
        code, _ = model.encode_batch(x, mask, mode="train")
        logits, _ = model.head_forward(code)
        order = np.argsort(-logits, axis=1, kind="stable")
        hits1 += int((order[:, 0] == targets).sum())
        hits5 += int((order[:, :5] == targets[:, None]).any(axis=1).sum())
    n = len(pairs)
    return hits1 / n, hits5 / n


def embed_author(model, author):
    """Encode the full chronological post sequence into the sparse author
    embedding (inference-mode k, head unused)."""
    if author.dim != model.input_dim:
        raise DataError(
            f"embedding dim {author.dim} does not match model input dim {model.input_dim}"
        )
    x = author.values.astype(float)[:, None, :]
    mask = np.ones((x.shape[0], 1))
    code, _ = model.encode_batch(x, mask, mode="infer")
    return AuthorEmbedding(author.author_id, code[0])


def embed_corpus(model, records, threads=1):
    def one(r):
        return embed_author(model, r)

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(one, records))
    return [one(r) for r in records]


def strip_head(model):
    """Drop the classification head; the embedding path is untouched, so
    embed_author output is bitwise identical before and after."""
    if model.head is None:
        raise ConfigError("model head already stripped")
    stripped = copy.deepcopy(model)
    stripped.head = None
    stripped.author_ids = None
    return stripped


def save_model(model, path, optimizer=None, extra_meta=None):
    meta = {
        "input_dim": model.input_dim,
        "hidden_size": model.hidden_size,
        "code_dim": model.ksparse.code_dim,
        "k_train": model.ksparse.k_train,
        "k_infer": model.ksparse.k_infer,
        "pooling": model.pooling,
        "head_widths": [l.out_dim for l in model.head] if model.head else None,
        "author_ids": model.author_ids,
    }
    meta.update(extra_meta or {})
    save_checkpoint(path, model.params(), meta=meta, optimizer=optimizer)


def load_model(path):
    blocks, meta, optimizer = load_checkpoint(path)
    head_widths = meta.get("head_widths")
    model = AuthorVecModel(
        input_dim=meta["input_dim"],
        hidden_size=meta["hidden_size"],
        code_dim=meta["code_dim"],
        k_train=meta["k_train"],
        k_infer=meta["k_infer"],
        head_hidden=tuple(head_widths[:-1]) if head_widths else (),
        n_authors=head_widths[-1] if head_widths else None,
        author_ids=meta.get("author_ids"),
        pooling=meta.get("pooling", "final"),
    )
    for name, p in model.params().items():
        if name not in blocks:
            raise DataError(f"checkpoint missing parameter block {name!r}")
        if blocks[name].shape != p.shape:
            raise DataError(f"checkpoint block {name!r} has shape {blocks[name].shape}")
        np.copyto(p, blocks[name])
    return model, meta, optimizer


def embeddings_to_sparse_csv(embeddings, path):
    """Write `author_id,idx:value,...` rows (sparse pairs, ascending index)."""
    with open(path, "w", encoding="utf-8") as fh:
        for emb in embeddings:
            idx = np.nonzero(emb.vector)[0]
            pairs = ",".join(f"{i}:{float(emb.vector[i])!r}" for i in idx)
            fh.write(f"{emb.author_id},{pairs}\n" if pairs else f"{emb.author_id}\n")
