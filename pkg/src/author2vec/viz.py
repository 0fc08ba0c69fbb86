"""Exact t-SNE projection and scatter export for embedding inspection.

The O(n^2) formulation only: pairwise Gaussian affinities with per-point
bandwidths binary-searched to the target perplexity, Student-t kernel in
the plane, gradient descent with early exaggeration and a momentum switch.
Inputs wider than 50 dimensions are first reduced with the randomized SVD
from the baselines module.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from author2vec.errors import ConfigError, DataError
from author2vec.baselines import randomized_svd

PCA_TARGET_DIM = 50


@dataclass
class TsneConfig:
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    seed: int = 0
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    momentum_switch_iter: int = 250


@dataclass
class TsneResult:
    coords: np.ndarray
    kl_trace: np.ndarray
    achieved_perplexity: np.ndarray


def _squared_distances(X):
    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.fill_diagonal(d2, 0.0)
    return np.maximum(d2, 0.0)


def _conditional_p(d2_row, beta, self_idx):
    p = np.exp(-d2_row * beta)
    p[self_idx] = 0.0
    total = p.sum()
    if total <= 0.0:
        return p, -np.inf
    p /= total
    nz = p > 0
    entropy = -np.sum(p[nz] * np.log(p[nz]))
    return p, entropy


def calibrate_affinities(d2, perplexity, tol=1e-7, max_steps=200):
    """Binary-search per-point precision beta so each conditional
    distribution hits the target perplexity. Returns (P, perplexities)."""
    n = d2.shape[0]
    target = np.log(perplexity)
    P = np.zeros((n, n))
    achieved = np.zeros(n)
    for i in range(n):
        beta, lo, hi = 1.0, 0.0, np.inf
        p = entropy = None
        for _ in range(max_steps):
            p, entropy = _conditional_p(d2[i], beta, i)
            diff = entropy - target
            if abs(diff) <= tol:
                break
            if diff > 0:
                lo = beta
                beta = beta * 2.0 if not np.isfinite(hi) else 0.5 * (beta + hi)
            else:
                hi = beta
                beta = 0.5 * (beta + lo)
        P[i] = p
        achieved[i] = np.exp(entropy)
    return P, achieved


def tsne_project(vectors, config=None):
    """Project an (n, d) matrix to the plane. Deterministic given the seed;
    duplicate rows receive a tiny seeded jitter before distances are
    computed. Returns a TsneResult (coords, per-iteration KL trace, achieved
    per-point perplexities)."""
    config = config or TsneConfig()
    X = np.asarray(vectors, dtype=float)
    n = X.shape[0]
    if n < 10:
        raise DataError(f"t-SNE needs at least 10 points, got {n}")
    if config.perplexity >= (n - 1) / 3:
        raise ConfigError(
            f"perplexity {config.perplexity} too large for {n} points "
            f"(needs perplexity < (n-1)/3)"
        )
    rng = np.random.default_rng(config.seed)

    # exact duplicates break the bandwidth search; nudge them apart
    _, first_idx = np.unique(X, axis=0, return_index=True)
    if len(first_idx) < n:
        keep = np.zeros(n, dtype=bool)
        keep[first_idx] = True
        X = X + np.where(~keep[:, None], 1e-9 * rng.standard_normal(X.shape), 0.0)

    if X.shape[1] > PCA_TARGET_DIM:
        centered = X - X.mean(axis=0)
        target = min(PCA_TARGET_DIM, *centered.shape)
        _, _, vt = randomized_svd(centered, target, seed=config.seed)
        X = centered @ vt.T

    P_cond, achieved = calibrate_affinities(_squared_distances(X), config.perplexity)
    P = (P_cond + P_cond.T) / (2.0 * n)
    P = np.maximum(P, 1e-12)

    Y = 1e-4 * rng.standard_normal((n, 2))
    velocity = np.zeros_like(Y)
    gains = np.ones_like(Y)
    kl_trace = np.empty(config.iterations)

    for it in range(config.iterations):
        exaggerate = it < config.exaggeration_iters
        P_eff = P * config.early_exaggeration if exaggerate else P
        momentum = 0.5 if it < config.momentum_switch_iter else 0.8

        d2y = _squared_distances(Y)
        num = 1.0 / (1.0 + d2y)
        np.fill_diagonal(num, 0.0)
        Q = num / num.sum()
        Q = np.maximum(Q, 1e-12)

        # gradient of KL(P_eff || Q): 4 * sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i-y_j|^2)
        W = (P_eff - Q) * num
        grad = 4.0 * ((np.diag(W.sum(axis=1)) - W) @ Y)

        # per-coordinate gain adaptation, the usual companion of the
        # momentum schedule; keeps points from stalling between clusters
        agree = np.sign(grad) == np.sign(velocity)
        gains = np.where(agree, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)

        velocity = momentum * velocity - config.learning_rate * gains * grad
        Y = Y + velocity
        Y = Y - Y.mean(axis=0)

        kl_trace[it] = float(np.sum(P * np.log(P / Q)))

    return TsneResult(coords=Y, kl_trace=kl_trace, achieved_perplexity=achieved)


# --- scatter export -----------------------------------------------------------

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)
MISSING_COLOR = "#999999"


def export_scatter(author_ids, coords, labels, svg_path, csv_path):
    """Write `author_id,x,y,label` CSV (full float precision) and an SVG
    scatter with one color per label class plus a legend. Authors with an
    empty label render neutral gray."""
    coords = np.asarray(coords, dtype=float)
    if len(author_ids) != coords.shape[0] or len(labels) != coords.shape[0]:
        raise DataError("author_ids, coords and labels must align")

    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("author_id,x,y,label\n")
        for a, (x, y), lab in zip(author_ids, coords, labels):
            fh.write(f"{a},{float(x)!r},{float(y)!r},{lab}\n")

    classes = sorted(set(l for l in labels if l))
    color_of = {c: PALETTE[i % len(PALETTE)] for i, c in enumerate(classes)}

    width = height = 640
    margin = 40
    xmin, ymin = coords.min(axis=0)
    xmax, ymax = coords.max(axis=0)
    xspan = (xmax - xmin) or 1.0
    yspan = (ymax - ymin) or 1.0

    def to_px(x, y):
        px = margin + (x - xmin) / xspan * (width - 2 * margin)
        py = height - margin - (y - ymin) / yspan * (height - 2 * margin)
        return px, py

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
        f'width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for a, (x, y), lab in zip(author_ids, coords, labels):
        px, py = to_px(x, y)
        color = color_of.get(lab, MISSING_COLOR)
        parts.append(
            f'<circle cx="{px:.2f}" cy="{py:.2f}" r="3" fill="{color}" '
            f'fill-opacity="0.7"><title>{a}</title></circle>'
        )
    legend_entries = classes + ([""] if any(not l for l in labels) else [])
    for i, cls in enumerate(legend_entries):
        color = color_of.get(cls, MISSING_COLOR)
        ly = margin + 18 * i
        parts.append(f'<circle cx="{width - 150}" cy="{ly}" r="5" fill="{color}"/>')
        parts.append(
            f'<text x="{width - 138}" y="{ly + 4}" font-size="12" '
            f'font-family="sans-serif">{cls or "(unlabeled)"}</text>'
        )
    parts.append("</svg>")
    with open(svg_path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
