"""Logit-level open-set losses with analytic gradients.

Targets are integer class indices; ``NEGATIVE`` (-1) marks a row that
belongs to no class and should receive a uniform output distribution.

The maximal-entropy loss of a batch is::

    mean_{known i} -log M_{y_i}^m(s_i)  +  mean_{negative j} -(1/C) sum_c log M_c^0(s_j)

where ``M_c^m(s) = exp(s_c - m) / (exp(s_c - m) + sum_{c' != c} exp(s_c'))``.
A term is dropped when its row set is empty.  EOS is the ``m = 0`` case and
categorical cross-entropy is EOS restricted to batches without negatives.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

NEGATIVE = -1
LOSSES = ("cel", "eos", "mel")
DEFAULT_MARGIN = 0.3


def logsumexp(x: np.ndarray, axis: int = -1) -> np.ndarray:
    top = np.max(x, axis=axis, keepdims=True)
    return np.squeeze(top, axis=axis) + np.log(np.sum(np.exp(x - top), axis=axis))


def softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    e = np.exp(x - np.max(x, axis=axis, keepdims=True))
    return e / np.sum(e, axis=axis, keepdims=True)


def _check_batch(logits, targets):
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets, dtype=np.int64)
    if logits.ndim != 2 or logits.shape[0] == 0:
        raise ValueError("loss needs a non-empty 2-D logit matrix")
    if targets.shape != (logits.shape[0],):
        raise ValueError("targets must have one entry per logit row")
    n_cls = logits.shape[1]
    if n_cls < 2:
        raise ValueError("need at least two classes")
    bad = (targets != NEGATIVE) & ((targets < 0) | (targets >= n_cls))
    if bad.any():
        raise ValueError(f"target {targets[bad][0]} out of range for {n_cls} classes")
    return logits, targets


def margin_softmax(logits_row, target: int, m: float = 0.0) -> float:
    """Probability of ``target`` after handicapping its logit by ``m``."""
    s = np.array(logits_row, dtype=np.float64)
    if s.ndim != 1 or s.size < 2:
        raise ValueError("need a logit vector with at least two classes")
    if not 0 <= target < s.size:
        raise ValueError(f"target {target} out of range for {s.size} classes")
    if m < 0:
        raise ValueError("margin must be nonnegative")
    s[target] -= m
    return float(math.exp(s[target] - logsumexp(s)))


def mel_loss(logits, targets, m: float = DEFAULT_MARGIN) -> tuple[float, np.ndarray]:
    """Maximal-entropy loss and its gradient with respect to ``logits``."""
    if m < 0:
        raise ValueError("margin must be nonnegative")
    logits, targets = _check_batch(logits, targets)
    n_cls = logits.shape[1]
    grad = np.zeros_like(logits)
    loss = 0.0

    known = targets != NEGATIVE
    n_known = int(known.sum())
    if n_known:
        rows = np.flatnonzero(known)
        y = targets[rows]
        s = logits[rows].copy()
        s[np.arange(n_known), y] -= m
        lse = logsumexp(s)
        loss += float(np.mean(lse - s[np.arange(n_known), y]))
        g = softmax(s)
        g[np.arange(n_known), y] -= 1.0
        grad[rows] = g / n_known

    n_neg = logits.shape[0] - n_known
    if n_neg:
        rows = np.flatnonzero(~known)
        s = logits[rows]
        loss += float(np.mean(logsumexp(s) - s.mean(axis=1)))
        grad[rows] = (softmax(s) - 1.0 / n_cls) / n_neg
    return loss, grad


def eos_loss(logits, targets) -> tuple[float, np.ndarray]:
    """Entropic open-set loss: :func:`mel_loss` without margin."""
    return mel_loss(logits, targets, 0.0)


def cel_loss(logits, targets) -> tuple[float, np.ndarray]:
    """Mean categorical cross-entropy; negatives are not allowed."""
    if np.any(np.asarray(targets) == NEGATIVE):
        raise ValueError("cross-entropy batch contains NEGATIVE rows")
    return mel_loss(logits, targets, 0.0)


def get_loss(name: str, m: float = DEFAULT_MARGIN) -> Callable:
    """Loss callable ``(logits, targets) -> (loss, grad)`` by name."""
    if name == "mel":
        return lambda logits, targets: mel_loss(logits, targets, m)
    if name == "eos":
        return eos_loss
    if name == "cel":
        return cel_loss
    raise ValueError(f"unknown loss {name!r}; choose from {LOSSES}")


def effective_margin(name: str, m: float) -> float:
    """Margin actually applied to known rows by loss ``name``."""
    return m if name == "mel" else 0.0
