"""Central finite-difference checking of analytic gradients."""
from __future__ import annotations

import numpy as np


def grad_check(loss_fn, params, analytic_grads, epsilon=1e-5, tolerance=1e-4):
    """Compare analytic gradients against central differences.

    loss_fn is a zero-argument closure that recomputes the scalar loss from
    the current (mutated) parameter values, so it must be deterministic.
    Returns {"blocks": {name: max relative error}, "max_error": float,
    "passed": bool}. Relative error uses |fd - an| / max(|fd| + |an|, 1e-8)
    per coordinate.
    """
    report = {}
    for name, p in params.items():
        an = analytic_grads[name]
        fd = np.zeros_like(p)
        flat_p = p.reshape(-1)
        flat_fd = fd.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            h = epsilon * max(1.0, abs(orig))
            flat_p[i] = orig + h
            loss_plus = loss_fn()
            flat_p[i] = orig - h
            loss_minus = loss_fn()
            flat_p[i] = orig
            flat_fd[i] = (loss_plus - loss_minus) / (2.0 * h)
        denom = np.maximum(np.abs(fd) + np.abs(an), 1e-8)
        rel = np.abs(fd - an) / denom
        report[name] = float(rel.max()) if rel.size else 0.0
    max_error = max(report.values()) if report else 0.0
    return {"blocks": report, "max_error": max_error, "passed": max_error < tolerance}
