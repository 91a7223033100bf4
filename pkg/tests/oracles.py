"""Slow, independently written reference computations used as test oracles.

Nothing here calls into the code under test except to read plain data.
"""
import math

import numpy as np


def naive_forward(weights, biases, x):
    """Per-sample, per-unit loop forward pass (ReLU hidden, linear output)."""
    out = []
    for row in x:
        a = list(row)
        for li, (w, b) in enumerate(zip(weights, biases)):
            nxt = []
            for j in range(w.shape[1]):
                z = b[j]
                for i in range(w.shape[0]):
                    z += a[i] * w[i, j]
                nxt.append(z if li == len(weights) - 1 else max(z, 0.0))
            a = nxt
        out.append(a)
    return np.array(out)


def loss_value(logits, targets, m):
    """Batch loss straight from the formula; ``logits`` may have leading axes.

    Known rows: -log(e^{s_y - m} / (e^{s_y - m} + sum_{c != y} e^{s_c})), averaged.
    Negative rows (target -1): -(1/C) sum_c log(e^{s_c} / sum e^s), averaged.
    """
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    n_cls = logits.shape[-1]
    total = np.zeros(logits.shape[:-2])
    known = np.flatnonzero(targets >= 0)
    neg = np.flatnonzero(targets < 0)
    if known.size:
        s = logits[..., known, :]
        y = targets[known]
        onehot = np.eye(n_cls)[y]
        e = np.exp(s - m * onehot)
        p_target = (e * onehot).sum(-1) / e.sum(-1)
        total = total + np.mean(-np.log(p_target), axis=-1)
    if neg.size:
        s = logits[..., neg, :]
        e = np.exp(s)
        p = e / e.sum(-1, keepdims=True)
        total = total + np.mean(-np.log(p).sum(-1) / n_cls, axis=-1)
    return total


def _stack_forward(weights, biases, x):
    """Forward pass where every parameter carries a leading perturbation axis."""
    a = np.broadcast_to(x, weights[0].shape[:1] + x.shape)
    for li, (w, b) in enumerate(zip(weights, biases)):
        z = np.einsum("kbi,kij->kbj", a, w) + b[:, None, :]
        a = z if li == len(weights) - 1 else np.maximum(z, 0.0)
    return a


def finite_difference_grads(weights, biases, x, targets, m, step=1e-5):
    """Central differences of :func:`loss_value` for every parameter entry.

    Returns gradients in (W0, b0, W1, b1, ...) order.
    """
    params = []
    for w, b in zip(weights, biases):
        params += [w, b]
    grads = []
    for pi, p in enumerate(params):
        n = p.size
        stacked = [np.repeat(q[None], 2 * n, axis=0) for q in params]
        flat = stacked[pi].reshape(2 * n, -1)
        idx = np.arange(n)
        flat[idx, idx] += step
        flat[n + idx, idx] -= step
        ws = stacked[0::2]
        bs = stacked[1::2]
        values = loss_value(_stack_forward(ws, bs, x), targets, m)
        grads.append(((values[:n] - values[n:]) / (2 * step)).reshape(p.shape))
    return grads


def relative_error(analytic, numeric, floor=1e-6):
    """Elementwise |a - n| / max(|a|, |n|, floor)."""
    a = np.asarray(analytic)
    n = np.asarray(numeric)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)


def exhaustive_neighbor(vectors, labels, i):
    """Most cosine-similar record of a different label; lowest index on ties."""
    best, best_j = -math.inf, -1
    zi = vectors[i]
    ni = math.sqrt(sum(v * v for v in zi))
    for j in range(len(vectors)):
        if labels[j] == labels[i]:
            continue
        zj = vectors[j]
        c = sum(a * b for a, b in zip(zi, zj)) / (ni * math.sqrt(sum(v * v for v in zj)))
        if c > best:
            best, best_j = c, j
    return best_j


def naive_ensemble_scores(activations, assignment):
    """Triple loop over (probe, subject, learner)."""
    n_learn, n_probe, _ = activations.shape
    n_subj = assignment.shape[1]
    out = np.zeros((n_probe, n_subj))
    for p in range(n_probe):
        for g in range(n_subj):
            total = 0.0
            for n in range(n_learn):
                total += activations[n, p, assignment[n, g]]
            out[p, g] = total
    return out


def naive_cos_scores(probes, gallery_vectors, gallery_labels, n_subjects):
    out = np.full((len(probes), n_subjects), -math.inf)
    for p, zp in enumerate(probes):
        for r, zr in enumerate(gallery_vectors):
            c = float(np.dot(zp, zr) / (np.linalg.norm(zp) * np.linalg.norm(zr)))
            out[p, gallery_labels[r]] = max(out[p, gallery_labels[r]], c)
    return out


def brute_force_rates(scores, subjects, labels, theta):
    """(FPIR, TPIR) at ``theta`` by scanning every probe."""
    n_known = n_unknown = tp = fp = 0
    for row, lab in zip(scores, labels):
        best = 0
        for g in range(1, len(row)):
            if row[g] > row[best]:
                best = g
        accepted = row[best] >= theta
        if lab == "unknown":
            n_unknown += 1
            fp += accepted
        else:
            n_known += 1
            tp += accepted and subjects[best] == lab
    return fp / n_unknown, tp / n_known
