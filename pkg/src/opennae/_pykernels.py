"""Numpy implementations of the hot kernels.

These define the semantics the compiled ``_ckernels`` module must reproduce.
"""
from __future__ import annotations

import numpy as np

_BLOCK = 1024


def omu_neighbors(Z: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """For every row, the most cosine-similar row with a different label.

    Ties go to the lowest index; rows with no eligible partner get -1.
    """
    n = Z.shape[0]
    norms = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    out = np.full(n, -1, dtype=np.int64)
    for lo in range(0, n, _BLOCK):
        hi = min(lo + _BLOCK, n)
        cos = (Z[lo:hi] @ Z.T) / (norms[lo:hi, None] * norms[None, :])
        cos[labels[lo:hi, None] == labels[None, :]] = -np.inf
        best = np.argmax(cos, axis=1)
        valid = np.isfinite(cos[np.arange(hi - lo), best])
        out[lo:hi] = np.where(valid, best, -1)
    return out


def aggregate_scores(act: np.ndarray, assign: np.ndarray) -> np.ndarray:
    """``sim[p, g] = sum_n act[n, p, assign[n, g]]``, summed in learner order."""
    sim = np.zeros((act.shape[1], assign.shape[1]))
    for n in range(act.shape[0]):
        sim += act[n][:, assign[n]]
    return sim


def max_cosine_per_subject(P: np.ndarray, Z: np.ndarray, labels: np.ndarray,
                           n_subjects: int) -> np.ndarray:
    pn = np.sqrt(np.einsum("ij,ij->i", P, P))
    zn = np.sqrt(np.einsum("ij,ij->i", Z, Z))
    cos = (P @ Z.T) / (pn[:, None] * zn[None, :])
    out = np.full((P.shape[0], n_subjects), -np.inf)
    for g in range(n_subjects):
        cols = labels == g
        if cols.any():
            out[:, g] = cos[:, cols].max(axis=1)
    return out


def _batch_loss_grad(s: np.ndarray, t: np.ndarray, margin: float):
    n_cls = s.shape[1]
    g = np.empty_like(s)
    loss = 0.0
    known = t >= 0
    if known.any():
        rows = np.flatnonzero(known)
        sk = s[rows]
        sk[np.arange(rows.size), t[rows]] -= margin
        top = sk.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(sk - top).sum(axis=1))
        loss += np.mean(lse - sk[np.arange(rows.size), t[rows]])
        gk = np.exp(sk - lse[:, None])
        gk[np.arange(rows.size), t[rows]] -= 1.0
        g[rows] = gk / rows.size
    if not known.all():
        rows = np.flatnonzero(~known)
        sn = s[rows]
        top = sn.max(axis=1, keepdims=True)
        lse = top[:, 0] + np.log(np.exp(sn - top).sum(axis=1))
        loss += np.mean(lse - sn.mean(axis=1))
        g[rows] = (np.exp(sn - lse[:, None]) - 1.0 / n_cls) / rows.size
    return float(loss), g


def sgd_epoch(X, targets, order, bounds, W1, b1, W2, b2, vW1, vb1, vW2, vb2,
              lr: float, mu: float, margin: float) -> float:
    """One momentum-SGD epoch for a ``D -> H (ReLU) -> C`` net, in place.

    Batch ``k`` is ``order[bounds[k]:bounds[k + 1]]``; targets use -1 for
    negatives.  Returns the mean batch loss.
    """
    params = (W1, b1, W2, b2)
    vels = (vW1, vb1, vW2, vb2)
    total = 0.0
    n_batches = len(bounds) - 1
    for k in range(n_batches):
        rows = order[bounds[k]:bounds[k + 1]]
        if rows.size == 0:
            continue
        xb = X[rows]
        pre = xb @ W1 + b1
        hid = np.maximum(pre, 0.0)
        s = hid @ W2 + b2
        loss, gs = _batch_loss_grad(s, targets[rows], margin)
        total += loss
        dhid = (gs @ W2.T) * (pre > 0.0)
        grads = (xb.T @ dhid, dhid.sum(axis=0), hid.T @ gs, gs.sum(axis=0))
        if not all(np.isfinite(g).all() for g in grads):
            raise FloatingPointError("non-finite gradient during SGD epoch")
        for p, v, g in zip(params, vels, grads):
            v *= mu
            v -= lr * g
            p += v
    return total / n_batches if n_batches else 0.0
