"""Open-set ROC (O-ROC) evaluation.

For a threshold ``theta`` a probe is accepted when its maximal score is at
least ``theta``.  With ``K`` known and ``U`` unknown probes::

    TPIR(theta) = #{known: accepted and top subject correct} / K
    FPIR(theta) = #{unknown: accepted} / U

Thresholds swept are every distinct maximal score plus the ``-inf`` and
``+inf`` sentinels, so the curve starts at ``(FPIR=1, TPIR=Rank-1)`` and
ends at ``(0, 0)``.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .models import ScoreTable
from .store import UNKNOWN


class ClosedSetError(ValueError):
    """No unknown probes: only the closed-set Rank-1 rate (``rank1``) exists."""

    def __init__(self, rank1: float):
        super().__init__(f"no unknown probes; closed-set Rank-1 = {rank1:.6f}")
        self.rank1 = rank1


class UnreachableTargetError(ValueError):
    pass


@dataclass(frozen=True)
class OROCCurve:
    thresholds: np.ndarray
    fpir: np.ndarray
    tpir: np.ndarray

    def __post_init__(self):
        t, f, p = (np.asarray(a, dtype=np.float64) for a in (self.thresholds, self.fpir, self.tpir))
        if not (t.shape == f.shape == p.shape) or t.ndim != 1:
            raise ValueError("curve arrays must be 1-D and equally long")
        if np.any(np.diff(t) <= 0):
            raise ValueError("thresholds must be strictly increasing")
        if np.any(np.diff(f) > 0) or np.any(np.diff(p) > 0):
            raise ValueError("fpir and tpir must be non-increasing in the threshold")
        object.__setattr__(self, "thresholds", t)
        object.__setattr__(self, "fpir", f)
        object.__setattr__(self, "tpir", p)

    def __len__(self) -> int:
        return self.thresholds.size

    @property
    def points(self) -> list[tuple[float, float, float]]:
        return list(zip(self.thresholds.tolist(), self.fpir.tolist(), self.tpir.tolist()))


def _split(table: ScoreTable, labels: Sequence[str] | None):
    labels = table.probe_labels if labels is None else tuple(labels)
    if labels is None or len(labels) != table.scores.shape[0]:
        raise ValueError("need one label per probe row")
    idx, best = table.top()
    unknown = np.array([lab == UNKNOWN for lab in labels], dtype=bool)
    correct = np.array([not u and table.subjects[i] == lab
                        for i, lab, u in zip(idx, labels, unknown)], dtype=bool)
    return best, unknown, correct


def rank1(table: ScoreTable, labels: Sequence[str] | None = None) -> float:
    """Fraction of known probes whose top-scoring subject is correct."""
    _, unknown, correct = _split(table, labels)
    n_known = int((~unknown).sum())
    if not n_known:
        raise ValueError("no known probes")
    return correct.sum() / n_known


def compute_oroc(table: ScoreTable, labels: Sequence[str] | None = None) -> OROCCurve:
    best, unknown, correct = _split(table, labels)
    n_known = int((~unknown).sum())
    n_unknown = int(unknown.sum())
    if not n_known:
        raise ValueError("no known probes")
    if not n_unknown:
        raise ClosedSetError(correct.sum() / n_known)
    thresholds = np.concatenate([[-np.inf], np.unique(best), [np.inf]])
    # count of scores >= t is n - searchsorted(sorted, t, "left")
    hit = np.sort(best[correct])
    false = np.sort(best[unknown])
    tp = hit.size - np.searchsorted(hit, thresholds, side="left")
    fp = false.size - np.searchsorted(false, thresholds, side="left")
    return OROCCurve(thresholds, fp / n_unknown, tp / n_known)


def rates_at_threshold(table: ScoreTable, labels: Sequence[str] | None,
                       theta: float) -> tuple[float, float]:
    """``(FPIR, TPIR)`` for a single threshold."""
    best, unknown, correct = _split(table, labels)
    accepted = best >= theta
    n_unknown = int(unknown.sum())
    fpir = (accepted & unknown).sum() / n_unknown if n_unknown else float("nan")
    return float(fpir), float((accepted & correct).sum() / int((~unknown).sum()))


def tpir_at_fpir(curve: OROCCurve, fpir_target: float) -> float:
    """TPIR at the largest achieved FPIR not above the target (no interpolation).

    Among thresholds reaching that FPIR, the lowest one (highest TPIR) counts.
    """
    if not len(curve):
        raise ValueError("empty curve")
    if not 0.0 < fpir_target <= 1.0:
        raise ValueError("fpir_target must lie in (0, 1]")
    ok = curve.fpir <= fpir_target
    best = curve.fpir[ok].max()
    return float(curve.tpir[ok & (curve.fpir == best)].max())


def calibrate_threshold(table: ScoreTable, labels: Sequence[str] | None,
                        fpir_target: float) -> float:
    """Smallest candidate threshold whose FPIR does not exceed ``fpir_target``.

    Candidates are ``-inf`` and the distinct maximal scores.  Raises
    :class:`UnreachableTargetError` if only rejecting everything (``+inf``)
    meets the target.
    """
    curve = compute_oroc(table, labels)
    ok = np.flatnonzero(curve.fpir <= fpir_target)
    theta = curve.thresholds[ok[0]]
    if np.isposinf(theta):
        raise UnreachableTargetError(
            f"FPIR <= {fpir_target} needs a threshold above every probe score")
    return float(theta)


def export_curve(curve: OROCCurve, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["threshold", "fpir", "tpir"])
        for t, f, p in curve.points:
            writer.writerow([repr(t), repr(f), repr(p)])


def load_curve(path) -> OROCCurve:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != ["threshold", "fpir", "tpir"]:
        raise ValueError(f"{path}: not an O-ROC curve file")
    data = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64).reshape(-1, 3)
    return OROCCurve(data[:, 0], data[:, 1], data[:, 2])


def summarize(table: ScoreTable, labels: Sequence[str] | None = None,
              fpir_points: Sequence[float] = (1.0, 0.1, 0.01, 0.001)) -> dict[float, float]:
    """TPIR at each requested FPIR operating point."""
    curve = compute_oroc(table, labels)
    return {f: tpir_at_fpir(curve, f) for f in fpir_points}
