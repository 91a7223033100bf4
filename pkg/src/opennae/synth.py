"""Seeded synthetic galleries and open-set probe sets.

Every subject gets a random unit mean direction; its samples are that mean
plus isotropic Gaussian noise, renormalized to the unit sphere.  The last
``ceil(0.3 * samples_per_subject)`` samples of each known subject are held
out as probes; every sample of an unknown subject is a probe labeled
``"unknown"``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .store import UNKNOWN, Gallery, ProbeSet

HOLDOUT_FRACTION = 0.3


@dataclass(frozen=True)
class SynthSpec:
    dim: int
    known_subjects: int
    unknown_subjects: int
    samples_per_subject: int
    cluster_spread: float
    seed: int = 0

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError("dim must be >= 2")
        if self.known_subjects < 2:
            raise ValueError("known_subjects must be >= 2")
        if self.unknown_subjects < 0:
            raise ValueError("unknown_subjects must be >= 0")
        if self.samples_per_subject < 2:
            # one sample would leave nothing in the gallery after the hold-out
            raise ValueError("samples_per_subject must be >= 2")
        if not self.cluster_spread >= 0:
            raise ValueError("cluster_spread must be >= 0")

    @property
    def holdout(self) -> int:
        return math.ceil(HOLDOUT_FRACTION * self.samples_per_subject)


def _unit_rows(x: np.ndarray) -> np.ndarray:
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate(spec: SynthSpec) -> tuple[Gallery, ProbeSet]:
    """Draw a gallery and probe set; a pure function of ``spec``."""
    rng = np.random.default_rng(spec.seed)
    n_subj = spec.known_subjects + spec.unknown_subjects
    means = _unit_rows(rng.standard_normal((n_subj, spec.dim)))
    noise = rng.standard_normal((n_subj, spec.samples_per_subject, spec.dim))
    samples = means[:, None, :] + spec.cluster_spread * noise
    samples = samples / np.linalg.norm(samples, axis=2, keepdims=True)

    keep = spec.samples_per_subject - spec.holdout
    g_lab, g_id, g_vec = [], [], []
    p_lab, p_id, p_vec = [], [], []
    kw = len(str(n_subj - 1))
    for s in range(n_subj):
        known = s < spec.known_subjects
        name = f"S{s:0{kw}d}" if known else f"U{s - spec.known_subjects:0{kw}d}"
        for k in range(spec.samples_per_subject):
            sample_id = f"{name}_{k:03d}"
            if known and k < keep:
                g_lab.append(name)
                g_id.append(sample_id)
                g_vec.append(samples[s, k])
            else:
                p_lab.append(name if known else UNKNOWN)
                p_id.append(sample_id)
                p_vec.append(samples[s, k])
    gallery = Gallery(g_lab, g_id, np.array(g_vec))
    probes = ProbeSet(p_lab, p_id, np.array(p_vec).reshape(-1, spec.dim))
    return gallery, probes
