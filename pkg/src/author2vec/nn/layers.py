"""Dense, k-sparse and softmax cross-entropy primitives.

All math is float64 with hand-derived gradients. Inputs are either single
vectors of shape (d,) or batches of shape (b, d); every forward returns the
cache its backward needs.
"""
from __future__ import annotations

import numpy as np

from author2vec.errors import NumericError


class DenseLayer:
    """Affine map with an optional ReLU. Weights are (out, in)."""

    def __init__(self, in_dim, out_dim, activation="linear", rng=None, zero_init=False):
        if activation not in ("linear", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.activation = activation
        if zero_init:
            self.W = np.zeros((out_dim, in_dim))
        else:
            rng = rng if rng is not None else np.random.default_rng(0)
            limit = np.sqrt(6.0 / (in_dim + out_dim))
            self.W = rng.uniform(-limit, limit, size=(out_dim, in_dim))
        self.b = np.zeros(out_dim)

    @property
    def in_dim(self):
        return self.W.shape[1]

    @property
    def out_dim(self):
        return self.W.shape[0]

    def forward(self, x):
        """Returns (output, cache). x is (d,) or (b, d)."""
        z = x @ self.W.T + self.b
        if self.activation == "relu":
            out = np.maximum(z, 0.0)
        else:
            out = z
        return out, (x, z)

    def backward(self, cache, dout):
        """Returns (dx, {"W": dW, "b": db})."""
        x, z = cache
        if self.activation == "relu":
            dout = dout * (z > 0.0)
        if x.ndim == 1:
            dW = np.outer(dout, x)
            db = dout.copy()
        else:
            dW = dout.T @ x
            db = dout.sum(axis=0)
        dx = dout @ self.W
        return dx, {"W": dW, "b": db}

    def params(self):
        return {"W": self.W, "b": self.b}


class KSparseLayer:
    """Linear projection followed by a hard top-k gate on absolute value.

    Only the k largest-|value| activations survive; ties go to the lowest
    index. Gradients flow through the surviving support only.
    """

    def __init__(self, in_dim, code_dim, k_train, k_infer, rng=None):
        if not (0 < k_train <= k_infer <= code_dim):
            raise ValueError(
                f"need 0 < k_train <= k_infer <= code_dim, "
                f"got k_train={k_train}, k_infer={k_infer}, code_dim={code_dim}"
            )
        self.projection = DenseLayer(in_dim, code_dim, activation="linear", rng=rng)
        self.k_train = k_train
        self.k_infer = k_infer

    @property
    def code_dim(self):
        return self.projection.out_dim

    def k_for_mode(self, mode):
        if mode == "train":
            return self.k_train
        if mode == "infer":
            return self.k_infer
        raise ValueError(f"unknown mode {mode!r}")

    def forward(self, x, mode="train", mask_override=None):
        """Returns (sparse code, cache). Surviving entries equal the raw
        projection output exactly; everything else is zeroed. mask_override
        freezes the support (finite-difference checks perturb parameters
        without letting the gate flip)."""
        k = self.k_for_mode(mode)
        z, proj_cache = self.projection.forward(x)
        mask = top_k_mask(z, k) if mask_override is None else mask_override
        return z * mask, (proj_cache, mask)

    def backward(self, cache, dout):
        proj_cache, mask = cache
        dz = dout * mask
        dx, grads = self.projection.backward(proj_cache, dz)
        return dx, grads

    def params(self):
        return {"W": self.projection.W, "b": self.projection.b}


def top_k_mask(z, k):
    """Boolean mask of the k largest-|z| entries along the last axis.

    Stable argsort on -|z| makes ties resolve to the lowest index.
    """
    if k >= z.shape[-1]:
        return np.ones_like(z, dtype=bool)
    order = np.argsort(-np.abs(z), axis=-1, kind="stable")
    mask = np.zeros(z.shape, dtype=bool)
    np.put_along_axis(mask, order[..., :k], True, axis=-1)
    return mask


def softmax_xent(logits, target):
    """Cross-entropy of a single logit vector against an integer class id.

    Uses the log-sum-exp shift for stability. Returns (loss, dlogits) where
    dlogits = softmax(logits) - onehot(target).
    """
    logits = np.asarray(logits, dtype=float)
    if logits.ndim != 1 or logits.shape[0] < 2:
        raise ValueError("logits must be a vector over >= 2 classes")
    shifted = logits - logits.max()
    log_z = np.log(np.sum(np.exp(shifted)))
    loss = log_z - shifted[target]
    grad = np.exp(shifted - log_z)
    grad[target] -= 1.0
    return loss, grad


def softmax_xent_batch(logits, targets):
    """Mean cross-entropy over a (b, C) batch. Returns (loss, dlogits)."""
    logits = np.asarray(logits, dtype=float)
    b = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    losses = log_z - shifted[np.arange(b), targets]
    grad = np.exp(shifted - log_z[:, None])
    grad[np.arange(b), targets] -= 1.0
    grad /= b
    loss = losses.mean()
    if not np.isfinite(loss):
        raise NumericError("non-finite cross-entropy loss")
    return loss, grad
