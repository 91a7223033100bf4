"""Synthetic negative embeddings built from a gallery.

* ``omu`` mixes every anchor with its most cosine-similar record of another
  subject: ``z = lam * z_i + (1 - lam) * z_j``.
* ``mmu`` uses the same mix with a partner of another subject drawn
  uniformly at random.
* ``sfa`` adds isotropic Gaussian noise to the anchor.

Anchors are the gallery records in row order, cycled until ``count``
negatives exist.  Random draws for negative ``k`` come from a generator
seeded with ``(seed, k)``, so results do not depend on how the work is split.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .store import UNKNOWN, Gallery, ProbeSet

METHODS = ("omu", "mmu", "sfa", "none")
DEFAULT_LAMBDA = 0.85
NAN_LAMBDA = 0.75


@dataclass(frozen=True)
class AugmentConfig:
    method: str = "omu"
    lam: float = DEFAULT_LAMBDA
    sfa_sigma: float | None = None
    count: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown augmentation {self.method!r}; choose from {METHODS}")
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"mixing coefficient must lie in (0, 1), got {self.lam}")
        if self.count is not None and self.count < 0:
            raise ValueError("count must be >= 0")
        if self.sfa_sigma is not None and not self.sfa_sigma >= 0:
            raise ValueError("sfa_sigma must be >= 0")


@dataclass(frozen=True)
class NegativeSet:
    """Generated negatives and where they came from.

    ``sources[k] = (i, j)``: anchor row ``i`` and partner row ``j`` (-1 for
    noise-based negatives).  ``degenerate[k]`` flags an exactly-zero vector,
    e.g. the midpoint of two antipodal embeddings.
    """
    vectors: np.ndarray
    sources: np.ndarray
    method: str = "none"
    degenerate: np.ndarray = field(default=None)

    def __post_init__(self):
        vec = np.asarray(self.vectors, dtype=np.float64)
        if vec.ndim != 2:
            raise ValueError("negative vectors must be a 2-D matrix")
        if not np.isfinite(vec).all():
            raise ValueError("negative vectors must be finite")
        object.__setattr__(self, "vectors", vec)
        object.__setattr__(self, "sources", np.asarray(self.sources, dtype=np.int64).reshape(-1, 2))
        if self.degenerate is None:
            object.__setattr__(self, "degenerate", ~np.any(vec != 0.0, axis=1))

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def empty(cls, dim: int) -> "NegativeSet":
        return cls(np.empty((0, dim)), np.empty((0, 2), dtype=np.int64))

    def to_probeset(self) -> ProbeSet:
        """Negatives as ``"unknown"`` records; sample ids encode provenance."""
        ids = [f"{self.method}-{k}-{i}-{j}" for k, (i, j) in enumerate(self.sources)]
        return ProbeSet([UNKNOWN] * len(self), ids, self.vectors.reshape(len(self), -1))

    @classmethod
    def from_collection(cls, coll) -> "NegativeSet":
        """Read back negatives saved with :meth:`to_probeset` (or any collection)."""
        sources, method = [], "none"
        for sample in coll.samples:
            parts = sample.split("-")
            if len(parts) == 4 and parts[0] in METHODS:
                method = parts[0]
                sources.append((int(parts[2]), int(parts[3])))
            else:
                sources.append((-1, -1))
        return cls(np.array(coll.vectors), np.array(sources).reshape(-1, 2), method)


def _anchors(gallery: Gallery, count: int | None) -> np.ndarray:
    n = len(gallery)
    count = n if count is None else count
    return np.arange(count, dtype=np.int64) % n


def omu_neighbor(gallery: Gallery, anchor: int) -> int:
    """Index of the most cosine-similar record of a different subject."""
    n = len(gallery)
    if not 0 <= anchor < n:
        raise IndexError(f"anchor {anchor} out of range for {n} records")
    z = gallery.vectors
    lab = gallery.class_index
    cos = (z @ z[anchor]) / (np.linalg.norm(z, axis=1) * np.linalg.norm(z[anchor]))
    cos[lab == lab[anchor]] = -np.inf
    return int(np.argmax(cos))


def omu_neighbors(gallery: Gallery) -> np.ndarray:
    """:func:`omu_neighbor` for every record at once."""
    return kernels.omu_neighbors(gallery.vectors, gallery.class_index)


def _mix(gallery: Gallery, i: np.ndarray, j: np.ndarray, lam: float, method: str) -> NegativeSet:
    z = gallery.vectors
    vec = lam * z[i] + (1.0 - lam) * z[j]
    return NegativeSet(vec.reshape(len(i), gallery.dim), np.stack([i, j], axis=1), method)


def omu_generate(gallery: Gallery, config: AugmentConfig) -> NegativeSet:
    if len(gallery.subjects) < 2:
        raise ValueError("mix-up needs at least two subjects")
    i = _anchors(gallery, config.count)
    j = omu_neighbors(gallery)[i]
    return _mix(gallery, i, j, config.lam, "omu")


def mmu_generate(gallery: Gallery, config: AugmentConfig) -> NegativeSet:
    if len(gallery.subjects) < 2:
        raise ValueError("mix-up needs at least two subjects")
    i = _anchors(gallery, config.count)
    lab = gallery.class_index
    others = {c: np.flatnonzero(lab != c) for c in range(len(gallery.subjects))}
    j = np.empty_like(i)
    for k, a in enumerate(i):
        pool = others[lab[a]]
        j[k] = pool[np.random.default_rng((config.seed, k)).integers(pool.size)]
    return _mix(gallery, i, j, config.lam, "mmu")


def default_sfa_sigma(gallery: Gallery) -> float:
    """One tenth of the mean per-coordinate standard deviation of the gallery."""
    return 0.1 * float(np.mean(np.std(gallery.vectors, axis=0)))


def sfa_generate(gallery: Gallery, config: AugmentConfig) -> NegativeSet:
    sigma = default_sfa_sigma(gallery) if config.sfa_sigma is None else config.sfa_sigma
    if sigma < 0:
        raise ValueError("sfa_sigma must be >= 0")
    i = _anchors(gallery, config.count)
    z = gallery.vectors
    vec = np.empty((i.size, gallery.dim))
    for k, a in enumerate(i):
        noise = np.random.default_rng((config.seed, k)).standard_normal(gallery.dim)
        vec[k] = z[a] + sigma * noise
    return NegativeSet(vec, np.stack([i, np.full_like(i, -1)], axis=1), "sfa")


def generate(gallery: Gallery, config: AugmentConfig) -> NegativeSet:
    """Dispatch on ``config.method``; ``none`` yields an empty set."""
    if config.method == "omu":
        return omu_generate(gallery, config)
    if config.method == "mmu":
        return mmu_generate(gallery, config)
    if config.method == "sfa":
        return sfa_generate(gallery, config)
    return NegativeSet.empty(gallery.dim)
