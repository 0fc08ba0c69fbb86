"""Bias-corrected Adam over named parameter blocks, plus global-norm clipping."""
from __future__ import annotations

import numpy as np

from author2vec.errors import NumericError


class AdamState:
    """First/second moment accumulators keyed by parameter-block name."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.step = 0
        self.m = {}
        self.v = {}

    def ensure(self, params):
        for name, p in params.items():
            if name not in self.m:
                self.m[name] = np.zeros_like(p)
                self.v[name] = np.zeros_like(p)


def adam_step(state, params, grads):
    """One in-place Adam update. Returns params for convenience.

    Raises NumericError naming the first parameter block whose gradient is
    not finite.
    """
    state.ensure(params)
    for name in params:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient in parameter block {name!r}")
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    bias1 = 1.0 - b1 ** t
    bias2 = 1.0 - b2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m[name]
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= state.lr * (m / bias1) / (np.sqrt(v / bias2) + state.epsilon)
    return params


def clip_gradients(grads, max_norm):
    """Scale all blocks down together when the global L2 norm exceeds max_norm.

    The norm is computed scale-invariantly so huge-but-finite gradients do
    not overflow to inf while being squared.
    """
    peak = 0.0
    for g in grads.values():
        if g.size:
            peak = max(peak, float(np.max(np.abs(g))))
    if peak == 0.0:
        return 0.0
    total = 0.0
    for g in grads.values():
        scaled = g / peak
        total += float(np.sum(scaled * scaled))
    norm = peak * np.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm
