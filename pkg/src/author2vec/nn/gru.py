"""GRU cell with hand-derived backprop-through-time.

Recurrence (reset gate applied inside the candidate's recurrent term):

    z_t = sigmoid(W_z x_t + U_z h_{t-1} + b_z)
    r_t = sigmoid(W_r x_t + U_r h_{t-1} + b_r)
    hc_t = tanh(W_h x_t + U_h (r_t * h_{t-1}) + b_h)
    h_t = (1 - z_t) * h_{t-1} + z_t * hc_t

Single-sequence entry points take a (T, d) array; the batched variants used
by the trainer take (T, b, d) plus a (T, b) mask where masked steps carry
h_t = h_{t-1} and receive zero input gradient.
"""
from __future__ import annotations

import numpy as np


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class GruCell:
    """Parameter container for one GRU direction.

    Input weights W_* are (hidden, input), recurrent U_* are (hidden, hidden).
    Recurrent matrices start orthogonal, input matrices scaled-uniform,
    biases zero.
    """

    GATES = ("z", "r", "h")

    def __init__(self, input_dim, hidden_size, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.input_dim = input_dim
        self.hidden_size = hidden_size
        limit = np.sqrt(6.0 / (input_dim + hidden_size))
        for g in self.GATES:
            setattr(self, f"W_{g}", rng.uniform(-limit, limit, size=(hidden_size, input_dim)))
            setattr(self, f"U_{g}", _orthogonal(hidden_size, rng))
            setattr(self, f"b_{g}", np.zeros(hidden_size))

    def params(self):
        out = {}
        for g in self.GATES:
            out[f"W_{g}"] = getattr(self, f"W_{g}")
            out[f"U_{g}"] = getattr(self, f"U_{g}")
            out[f"b_{g}"] = getattr(self, f"b_{g}")
        return out

    def zero_grads(self):
        return {name: np.zeros_like(p) for name, p in self.params().items()}


def _orthogonal(n, rng):
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    # fix signs so the factorization is unique and q is a proper rotation basis
    return q * np.sign(np.diag(r))


def gru_forward(cell, sequence, h0=None):
    """Run the recurrence over a (T, input_dim) sequence.

    Returns (hs, h_T, cache) where hs is (T, hidden) and cache feeds
    gru_backward. Raises on an empty sequence.
    """
    sequence = np.asarray(sequence, dtype=float)
    if sequence.ndim != 2 or sequence.shape[0] == 0:
        raise ValueError("sequence must be a non-empty (T, input_dim) array")
    x = sequence[:, None, :]
    h0b = None if h0 is None else np.asarray(h0, dtype=float)[None, :]
    hs, h_t, cache = gru_forward_batch(cell, x, mask=None, h0=h0b)
    return hs[:, 0, :], h_t[0], cache


def gru_backward(cell, cache, dhs=None, dh_last=None):
    """BPTT over a cached forward pass of a single sequence.

    dhs is the upstream gradient on every hidden state (T, hidden);
    dh_last on the final state only. Returns (grads, dx) with one gradient
    per parameter block and dx of the sequence's shape.
    """
    T = cache["x"].shape[0]
    dhs_b = None
    if dhs is not None:
        dhs_b = np.asarray(dhs, dtype=float)[:, None, :]
    dlast_b = None
    if dh_last is not None:
        dlast_b = np.asarray(dh_last, dtype=float)[None, :]
    grads, dx = gru_backward_batch(cell, cache, dhs=dhs_b, dh_last=dlast_b)
    return grads, dx[:, 0, :]


def gru_forward_batch(cell, x, mask=None, h0=None):
    """Batched recurrence. x is (T, b, input_dim), mask (T, b) with 1 for
    real steps; masked steps copy the previous hidden state."""
    T, b, d = x.shape
    H = cell.hidden_size
    if d != cell.input_dim:
        raise ValueError(f"input width {d} does not match cell input_dim {cell.input_dim}")
    h = np.zeros((b, H)) if h0 is None else h0.astype(float).copy()

    hs = np.empty((T, b, H))
    zs = np.empty((T, b, H))
    rs = np.empty((T, b, H))
    hcs = np.empty((T, b, H))
    h_prevs = np.empty((T, b, H))

    for t in range(T):
        xt = x[t]
        h_prevs[t] = h
        z = _sigmoid(xt @ cell.W_z.T + h @ cell.U_z.T + cell.b_z)
        r = _sigmoid(xt @ cell.W_r.T + h @ cell.U_r.T + cell.b_r)
        hc = np.tanh(xt @ cell.W_h.T + (r * h) @ cell.U_h.T + cell.b_h)
        h_new = (1.0 - z) * h + z * hc
        if mask is not None:
            m = mask[t][:, None]
            h = m * h_new + (1.0 - m) * h
        else:
            h = h_new
        hs[t] = h
        zs[t] = z
        rs[t] = r
        hcs[t] = hc

    cache = {"x": x, "mask": mask, "h_prevs": h_prevs, "zs": zs, "rs": rs, "hcs": hcs}
    return hs, h, cache


def gru_backward_batch(cell, cache, dhs=None, dh_last=None):
    """Exact gradients for all nine parameter blocks plus the inputs."""
    x = cache["x"]
    mask = cache["mask"]
    T, b, d = x.shape
    H = cell.hidden_size

    grads = cell.zero_grads()
    dx = np.zeros_like(x)
    dh = np.zeros((b, H))
    if dh_last is not None:
        dh = dh + dh_last

    for t in range(T - 1, -1, -1):
        if dhs is not None:
            dh = dh + dhs[t]
        if mask is not None:
            m = mask[t][:, None]
            # masked steps pass dh straight through to h_{t-1}
            dh_step = dh * m
            dh_carry = dh * (1.0 - m)
        else:
            dh_step = dh
            dh_carry = 0.0

        h_prev = cache["h_prevs"][t]
        z = cache["zs"][t]
        r = cache["rs"][t]
        hc = cache["hcs"][t]
        xt = x[t]

        dz = dh_step * (hc - h_prev)
        dhc = dh_step * z
        dh_prev = dh_step * (1.0 - z)

        da_h = dhc * (1.0 - hc * hc)
        drh = da_h @ cell.U_h            # gradient on r * h_prev
        dr = drh * h_prev
        dh_prev = dh_prev + drh * r
        da_r = dr * r * (1.0 - r)
        da_z = dz * z * (1.0 - z)

        grads["W_h"] += da_h.T @ xt
        grads["U_h"] += da_h.T @ (r * h_prev)
        grads["b_h"] += da_h.sum(axis=0)
        grads["W_r"] += da_r.T @ xt
        grads["U_r"] += da_r.T @ h_prev
        grads["b_r"] += da_r.sum(axis=0)
        grads["W_z"] += da_z.T @ xt
        grads["U_z"] += da_z.T @ h_prev
        grads["b_z"] += da_z.sum(axis=0)

        dx[t] = da_z @ cell.W_z + da_r @ cell.W_r + da_h @ cell.W_h
        dh_prev = dh_prev + da_z @ cell.U_z + da_r @ cell.U_r
        dh = dh_prev + dh_carry

    return grads, dx


def bigru_encode(fwd, bwd, sequence):
    """Concatenate [forward final state || backward final state].

    The backward cell runs over the reversed sequence, so both halves see
    the full context from opposite ends.
    """
    sequence = np.asarray(sequence, dtype=float)
    if sequence.ndim != 2 or sequence.shape[0] == 0:
        raise ValueError("sequence must be a non-empty (T, input_dim) array")
    _, h_f, _ = gru_forward(fwd, sequence)
    _, h_b, _ = gru_forward(bwd, sequence[::-1])
    return np.concatenate([h_f, h_b])
