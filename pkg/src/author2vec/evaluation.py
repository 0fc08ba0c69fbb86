"""Cross-validated probe evaluation of author embeddings.

Fold plans cover plain k-fold and the reversed variant that trains on a
single fold and tests on the other k-1. Probes are a hand-rolled L2
logistic regression (full-batch gradient descent with backtracking line
search) and a small MLP on the shared neural kernel. Reported metric is
support-weighted F1 with population-std aggregates over folds.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from author2vec.errors import ConfigError, DataError
from author2vec.nn.layers import DenseLayer, softmax_xent_batch
from author2vec.nn.optim import AdamState, adam_step

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1


@dataclass
class FoldPlan:
    scheme: str = "kfold"  # or "kfold_reverse"
    k: int = 10
    seed: int = 0
    stratify_on: str | None = None

    def __post_init__(self):
        if self.scheme not in ("kfold", "kfold_reverse"):
            raise ConfigError(f"unknown fold scheme {self.scheme!r}")
        if self.k < 2:
            raise ConfigError("fold count must be >= 2")


@dataclass
class ProbeSpec:
    kind: str = "logreg"  # or "mlp"
    hidden: tuple = ()
    l2: float = 1.0
    max_iters: int = 500
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("logreg", "mlp"):
            raise ConfigError(f"unknown probe kind {self.kind!r}")
        if self.kind == "mlp" and not self.hidden:
            raise ConfigError("mlp probe needs at least one hidden width")
        if self.kind == "logreg" and self.hidden:
            raise ConfigError("logreg probe takes no hidden widths")


def make_folds(authors, plan, labels=None):
    """Split author ids into k folds and return (train, test) id lists.

    kfold: each fold is the test set once. kfold_reverse: each fold is the
    TRAIN set once and the remaining k-1 folds are tested. Stratification
    keeps label proportions per fold when plan.stratify_on is set (labels
    maps author -> value then).
    """
    authors = list(authors)
    if len(authors) < plan.k:
        raise DataError(f"{len(authors)} authors cannot fill {plan.k} folds")
    rng = np.random.default_rng(plan.seed)
    fold_of = {}
    if plan.stratify_on is not None:
        if labels is None:
            raise ConfigError("stratified folds need labels")
        by_class = {}
        for a in authors:
            by_class.setdefault(labels[a], []).append(a)
        counter = 0
        for cls in sorted(by_class):
            members = by_class[cls]
            rng.shuffle(members)
            for a in members:
                fold_of[a] = counter % plan.k
                counter += 1
    else:
        shuffled = list(authors)
        rng.shuffle(shuffled)
        for i, a in enumerate(shuffled):
            fold_of[a] = i % plan.k
    folds = [[a for a in authors if fold_of[a] == i] for i in range(plan.k)]

    out = []
    for i in range(plan.k):
        inside = folds[i]
        outside = [a for j, f in enumerate(folds) if j != i for a in f]
        if plan.scheme == "kfold":
            out.append((outside, inside))
        else:
            out.append((inside, outside))
    if labels is not None and plan.stratify_on is None:
        classes = set(labels[a] for a in authors)
        for i, (train, _) in enumerate(out):
            missing = classes - set(labels[a] for a in train)
            if missing:
                log.warning("fold %d training split lacks classes %s", i, sorted(missing))
    return out


# --- probes -------------------------------------------------------------------


def _encode_labels(y):
    classes = sorted(set(y))
    if len(classes) < 2:
        raise DataError(f"probe needs two classes, got {classes}")
    index = {c: i for i, c in enumerate(classes)}
    return np.array([index[v] for v in y]), classes


class LogisticProbe:
    def __init__(self, w, b, classes):
        self.w = w
        self.b = b
        self.classes = classes

    def decision(self, X):
        return X @ self.w + self.b

    def predict(self, X):
        return [self.classes[int(s >= 0.0)] for s in self.decision(X)]

    def scores(self, X):
        """(n, 2) class scores aligned with self.classes."""
        d = self.decision(X)
        return np.stack([-d, d], axis=1)


def fit_logreg(X, y, spec):
    """L2-regularized logistic regression by full-batch gradient descent
    with Armijo backtracking, run until the gradient norm drops below 1e-6
    or spec.max_iters passes. The bias is unregularized."""
    X = np.asarray(X, dtype=float)
    y_idx, classes = _encode_labels(y)
    if len(classes) != 2:
        raise DataError(f"logistic probe is binary, got classes {classes}")
    n, d = X.shape
    sign = 2.0 * y_idx - 1.0  # -1 / +1
    w = np.zeros(d)
    b = 0.0
    lam = spec.l2 / n

    def loss_grad(w, b):
        margin = sign * (X @ w + b)
        # log(1 + exp(-m)) via the stable branch split
        loss = np.mean(np.logaddexp(0.0, -margin)) + 0.5 * lam * w @ w
        sig = _sigmoid(-margin)
        coeff = -(sig * sign) / n
        gw = X.T @ coeff + lam * w
        gb = coeff.sum()
        return loss, gw, gb

    step = 1.0
    loss, gw, gb = loss_grad(w, b)
    for _ in range(spec.max_iters):
        gnorm = np.sqrt(gw @ gw + gb * gb)
        if gnorm < 1e-6:
            break
        step = min(step * 2.0, 1e8)
        while True:
            w_new = w - step * gw
            b_new = b - step * gb
            loss_new, gw_new, gb_new = loss_grad(w_new, b_new)
            if loss_new <= loss - 1e-4 * step * gnorm * gnorm or step < 1e-16:
                break
            step *= 0.5
        w, b, loss, gw, gb = w_new, b_new, loss_new, gw_new, gb_new
    return LogisticProbe(w, b, classes)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class MlpProbe:
    def __init__(self, layers, classes):
        self.layers = layers
        self.classes = classes

    def logits(self, X):
        h = np.asarray(X, dtype=float)
        for layer in self.layers:
            h, _ = layer.forward(h)
        return h

    def predict(self, X):
        idx = np.argmax(self.logits(X), axis=1)
        return [self.classes[i] for i in idx]

    def scores(self, X):
        return self.logits(X)


def fit_mlp_probe(X, y, spec):
    """ReLU MLP trained with Adam on the neural kernel; 10% of the training
    rows (when that is at least one row per class) form a validation slice
    for early stopping."""
    X = np.asarray(X, dtype=float)
    y_idx, classes = _encode_labels(y)
    n, d = X.shape
    rng = np.random.default_rng(spec.seed)

    widths = [d, *spec.hidden]
    layers = [
        DenseLayer(w_in, w_out, activation="relu", rng=rng)
        for w_in, w_out in zip(widths, widths[1:])
    ]
    layers.append(DenseLayer(widths[-1], len(classes), activation="linear", zero_init=True))

    order = rng.permutation(n)
    n_val = int(0.1 * n)
    val_idx, train_idx = order[:n_val], order[n_val:]
    use_early_stop = n_val >= 2 and len(set(y_idx[val_idx])) == len(classes)
    if not use_early_stop:
        train_idx = order

    params = {}
    for i, layer in enumerate(layers):
        params[f"{i}.W"] = layer.W
        params[f"{i}.b"] = layer.b
    opt = AdamState(lr=1e-3)

    best_val = np.inf
    best_snapshot = None
    patience, since_best = 20, 0
    batch = 32
    l2 = spec.l2 / max(len(train_idx), 1)

    for epoch in range(spec.max_iters):
        perm = rng.permutation(len(train_idx))
        for start in range(0, len(perm), batch):
            rows = train_idx[perm[start : start + batch]]
            h = X[rows]
            caches = []
            for layer in layers:
                h, c = layer.forward(h)
                caches.append(c)
            loss, dl = softmax_xent_batch(h, y_idx[rows])
            grads = {}
            d_up = dl
            for i in range(len(layers) - 1, -1, -1):
                d_up, g = layers[i].backward(caches[i], d_up)
                grads[f"{i}.W"] = g["W"] + l2 * layers[i].W
                grads[f"{i}.b"] = g["b"]
            adam_step(opt, params, grads)
        if use_early_stop:
            h = X[val_idx]
            for layer in layers:
                h, _ = layer.forward(h)
            val_loss, _ = softmax_xent_batch(h, y_idx[val_idx])
            if val_loss < best_val - 1e-9:
                best_val = val_loss
                best_snapshot = {k: v.copy() for k, v in params.items()}
                since_best = 0
            else:
                since_best += 1
                if since_best >= patience:
                    break
    if use_early_stop and best_snapshot is not None:
        for k, v in params.items():
            np.copyto(v, best_snapshot[k])
    return MlpProbe(layers, classes)


def fit_probe(X, y, spec):
    return fit_logreg(X, y, spec) if spec.kind == "logreg" else fit_mlp_probe(X, y, spec)


# --- metrics ------------------------------------------------------------------


def weighted_f1(y_true, y_pred):
    """Support-weighted mean of per-class F1. A class with no true and no
    predicted positives contributes F1 = 0 (it then has zero weight too)."""
    if len(y_true) != len(y_pred):
        raise DataError("y_true and y_pred lengths differ")
    if len(y_true) == 0:
        raise DataError("need at least one sample")
    classes = sorted(set(y_true) | set(y_pred))
    n = len(y_true)
    score = 0.0
    for c in classes:
        tp = sum(1 for t, p in zip(y_true, y_pred) if t == c and p == c)
        fp = sum(1 for t, p in zip(y_true, y_pred) if t != c and p == c)
        fn = sum(1 for t, p in zip(y_true, y_pred) if t == c and p != c)
        support = tp + fn
        f1 = 2.0 * tp / (2.0 * tp + fp + fn) if (2 * tp + fp + fn) > 0 else 0.0
        score += (support / n) * f1
    return score


def topk_accuracy(scores, y_true, k):
    """Fraction of rows whose true class sits among the k best scores; ties
    resolve to the lowest class index."""
    scores = np.asarray(scores, dtype=float)
    y_true = np.asarray(y_true)
    n, c = scores.shape
    if k > c:
        raise DataError(f"k={k} exceeds {c} classes")
    hits = 0
    for i in range(n):
        s = scores[i]
        t = int(y_true[i])
        better = int(np.sum(s > s[t]))
        tied_lower = int(np.sum((s[:t] == s[t])))
        if better + tied_lower < k:
            hits += 1
    return hits / n


def confusion_matrix(y_true, y_pred, classes):
    index = {c: i for i, c in enumerate(classes)}
    m = np.zeros((len(classes), len(classes)), dtype=int)
    for t, p in zip(y_true, y_pred):
        m[index[t], index[p]] += 1
    return m


def normalize_confusion(matrix):
    """Row-normalize by true-class frequency; zero-support rows stay zero."""
    matrix = np.asarray(matrix, dtype=float)
    sums = matrix.sum(axis=1, keepdims=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(sums > 0, matrix / sums, 0.0)
    return out


# --- reports ------------------------------------------------------------------


@dataclass
class EvalReport:
    embedding_name: str
    probe: dict
    plan: dict
    fold_scores: list
    classes: list
    confusion: np.ndarray = field(repr=False)
    n_authors: int = 0
    attribute: str = ""

    @property
    def min(self):
        return float(np.min(self.fold_scores))

    @property
    def max(self):
        return float(np.max(self.fold_scores))

    @property
    def avg(self):
        return float(np.mean(self.fold_scores))

    @property
    def std(self):
        # population std (n denominator), documented in the schema
        return float(np.std(self.fold_scores))

    def to_dict(self):
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "embedding": self.embedding_name,
            "attribute": self.attribute,
            "probe": self.probe,
            "plan": self.plan,
            "n_authors": self.n_authors,
            "fold_f1": [float(s) for s in self.fold_scores],
            "f1_min": self.min,
            "f1_max": self.max,
            "f1_avg": self.avg,
            "f1_std": self.std,
            "std_kind": "population",
            "classes": list(self.classes),
            "confusion": self.confusion.tolist(),
            "confusion_normalized": normalize_confusion(self.confusion).tolist(),
        }

    def to_json(self, path=None):
        text = json.dumps(self.to_dict(), indent=2, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text + "\n")
        return text

    def text_table(self):
        lines = [
            f"{self.embedding_name} / {self.probe.get('kind', '?')} on {self.attribute or 'label'}",
            f"{'':<18}{'Min.':>8}{'Max.':>8}{'Avg.':>8}{'Std.':>8}",
            f"{self.plan.get('scheme', 'kfold'):<18}"
            f"{self.min:>8.3f}{self.max:>8.3f}{self.avg:>8.3f}{self.std:>8.3f}",
        ]
        return "\n".join(lines)

    def confusion_csv(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("true\\pred," + ",".join(str(c) for c in self.classes) + "\n")
            for cls, row in zip(self.classes, self.confusion):
                fh.write(str(cls) + "," + ",".join(str(int(v)) for v in row) + "\n")


def run_benchmark(embeddings, labels, plan, probe, embedding_name="embedding", attribute="label"):
    """Cross-validated probe evaluation.

    embeddings: {author_id: vector}; labels: {author_id: class}. Returns an
    EvalReport; the confusion matrix accumulates over all test predictions.
    """
    authors = sorted(labels)
    missing = [a for a in authors if a not in embeddings]
    if missing:
        raise DataError(f"missing embeddings for authors: {missing[:20]}")
    folds = make_folds(authors, plan, labels=labels)
    X = {a: np.asarray(embeddings[a], dtype=float) for a in authors}

    classes = sorted(set(labels.values()))
    fold_scores = []
    conf = np.zeros((len(classes), len(classes)), dtype=int)
    predictions = {}
    for train_ids, test_ids in folds:
        model = fit_probe(
            np.stack([X[a] for a in train_ids]), [labels[a] for a in train_ids], probe
        )
        y_pred = model.predict(np.stack([X[a] for a in test_ids]))
        y_true = [labels[a] for a in test_ids]
        fold_scores.append(weighted_f1(y_true, y_pred))
        conf += confusion_matrix(y_true, y_pred, classes)
        for a, p in zip(test_ids, y_pred):
            predictions.setdefault(a, []).append(p)

    report = EvalReport(
        embedding_name=embedding_name,
        probe={"kind": probe.kind, "hidden": list(probe.hidden), "l2": probe.l2,
               "max_iters": probe.max_iters, "seed": probe.seed},
        plan={"scheme": plan.scheme, "k": plan.k, "seed": plan.seed,
              "stratify_on": plan.stratify_on},
        fold_scores=fold_scores,
        classes=classes,
        confusion=conf,
        n_authors=len(authors),
        attribute=attribute,
    )
    return report, predictions


MBTI_AXES = ("EI", "SN", "TF", "JP")


def mbti_axis_benchmark(embeddings, mbti_labels, plan, probe, embedding_name="embedding"):
    """One binary benchmark per personality axis plus the combined 16-type
    confusion matrix built from per-axis predictions (majority vote when an
    author is tested more than once, as in the reversed scheme)."""
    from author2vec.corpus import mbti_axis_labels

    per_author_axes = {a: mbti_axis_labels(code) for a, code in mbti_labels.items()}
    reports = {}
    predicted_letters = {a: {} for a in mbti_labels}
    for axis in MBTI_AXES:
        labels = {a: per_author_axes[a][axis] for a in mbti_labels}
        report, predictions = run_benchmark(
            embeddings, labels, plan, probe,
            embedding_name=embedding_name, attribute=f"mbti_{axis}",
        )
        reports[axis] = report
        for a, preds in predictions.items():
            # majority vote, ties to the lexicographically first letter
            votes = sorted(preds)
            predicted_letters[a][axis] = max(sorted(set(votes)), key=votes.count)

    type_order = sorted(set(code.upper() for code in mbti_labels.values()) | {
        "".join(p) for p in _all_type_codes()
    })
    y_true = [mbti_labels[a].upper() for a in sorted(mbti_labels)]
    y_pred = [
        "".join(predicted_letters[a][axis] for axis in MBTI_AXES)
        for a in sorted(mbti_labels)
    ]
    conf16 = confusion_matrix(y_true, y_pred, type_order)
    return reports, conf16, type_order


def _all_type_codes():
    import itertools

    return itertools.product("EI", "SN", "TF", "JP")
