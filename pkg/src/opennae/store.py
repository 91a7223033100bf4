"""Embedding collections and their CSV representation.

A collection is a set of fixed-dimension float64 vectors, each tagged with a
subject identifier and a sample identifier.  Galleries hold enrolled subjects
only; probe sets may additionally carry the reserved ``"unknown"`` subject.

File format (UTF-8)::

    subject,sample,f0,f1,...,f{D-1}
    alice,img001,0.12,-0.5,...

The header is optional on input and always written on output.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

UNKNOWN = "unknown"


class EmbeddingFormatError(ValueError):
    """Raised for malformed embedding files or invalid collections.

    ``row`` is the 1-based data row (header excluded) when the problem can be
    pinned to one.
    """

    def __init__(self, message: str, row: int | None = None):
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)
        self.row = row


@dataclass(frozen=True)
class EmbeddingRecord:
    subject: str
    sample: str
    vector: np.ndarray


class EmbeddingSet:
    """Immutable labeled matrix of embeddings.

    Parameters
    ----------
    subjects_per_row : sequence of str
        Subject label of every row.
    samples : sequence of str
        Sample identifier of every row.
    vectors : array_like, shape (n, D)
        Embeddings; copied and stored read-only as float64.
    """

    def __init__(self, subjects_per_row: Sequence[str], samples: Sequence[str], vectors):
        vectors = np.array(vectors, dtype=np.float64, copy=True)
        if vectors.ndim != 2:
            raise EmbeddingFormatError(f"vectors must be 2-D, got shape {vectors.shape}")
        n, dim = vectors.shape
        if dim < 1:
            raise EmbeddingFormatError("embedding dimension must be positive")
        if len(subjects_per_row) != n or len(samples) != n:
            raise EmbeddingFormatError("label and vector counts differ")
        bad = ~np.isfinite(vectors).all(axis=1)
        if bad.any():
            raise EmbeddingFormatError("non-finite value", row=int(np.argmax(bad)) + 1)
        seen: set[tuple[str, str]] = set()
        for i, key in enumerate(zip(subjects_per_row, samples)):
            if key in seen:
                raise EmbeddingFormatError(f"duplicate (subject, sample) {key}", row=i + 1)
            seen.add(key)
        vectors.setflags(write=False)
        self._labels = tuple(str(s) for s in subjects_per_row)
        self._samples = tuple(str(s) for s in samples)
        self._vectors = vectors

    @property
    def dim(self) -> int:
        return self._vectors.shape[1]

    @property
    def vectors(self) -> np.ndarray:
        return self._vectors

    @property
    def labels(self) -> tuple[str, ...]:
        """Subject label of each row, in row order."""
        return self._labels

    @property
    def samples(self) -> tuple[str, ...]:
        return self._samples

    @property
    def records(self) -> list[EmbeddingRecord]:
        return list(iter(self))

    def __len__(self) -> int:
        return len(self._labels)

    def __iter__(self) -> Iterator[EmbeddingRecord]:
        for s, k, v in zip(self._labels, self._samples, self._vectors):
            yield EmbeddingRecord(s, k, v)

    def __eq__(self, other) -> bool:
        if type(self) is not type(other):
            return NotImplemented
        return (self._labels == other._labels and self._samples == other._samples
                and np.array_equal(self._vectors, other._vectors))

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n={len(self)}, dim={self.dim})"

    def with_vectors(self, vectors) -> "EmbeddingSet":
        """Copy of this collection with replaced vectors, labels kept."""
        return type(self)(self._labels, self._samples, vectors)


class Gallery(EmbeddingSet):
    """Enrolled subjects.

    ``subjects`` is the lexicographically sorted set of distinct labels, so the
    class index of a subject depends only on which subjects are present.
    """

    def __init__(self, subjects_per_row, samples, vectors):
        super().__init__(subjects_per_row, samples, vectors)
        if UNKNOWN in self._labels:
            raise EmbeddingFormatError(
                f"gallery contains reserved subject {UNKNOWN!r}",
                row=self._labels.index(UNKNOWN) + 1)
        self._subjects = tuple(sorted(set(self._labels)))
        if len(self._subjects) < 2:
            raise EmbeddingFormatError("gallery needs at least two subjects")
        index = {s: i for i, s in enumerate(self._subjects)}
        self._class_index = np.array([index[s] for s in self._labels], dtype=np.int64)
        self._class_index.setflags(write=False)

    @property
    def subjects(self) -> tuple[str, ...]:
        return self._subjects

    @property
    def class_index(self) -> np.ndarray:
        """Row-aligned integer class ids into :attr:`subjects`."""
        return self._class_index


class ProbeSet(EmbeddingSet):
    """Test samples; subjects may be enrolled ones or ``"unknown"``."""

    @property
    def is_unknown(self) -> np.ndarray:
        return np.array([s == UNKNOWN for s in self._labels], dtype=bool)


def _is_header(row: list[str]) -> bool:
    return len(row) >= 2 and row[0].strip() == "subject" and row[1].strip() == "sample"


def read_rows(path) -> tuple[list[str], list[str], np.ndarray]:
    """Parse an embedding CSV into labels, sample ids and an (n, D) matrix."""
    path = Path(path)
    subjects: list[str] = []
    samples: list[str] = []
    values: list[list[float]] = []
    dim = None
    with path.open(newline="", encoding="utf-8") as fh:
        data_row = 0
        for raw in csv.reader(fh):
            if not raw or all(not c.strip() for c in raw):
                continue
            if data_row == 0 and not subjects and _is_header(raw):
                continue
            data_row += 1
            if len(raw) < 3:
                raise EmbeddingFormatError("expected subject, sample and at least one feature",
                                           row=data_row)
            if dim is None:
                dim = len(raw) - 2
            elif len(raw) - 2 != dim:
                raise EmbeddingFormatError(
                    f"dimension mismatch: expected {dim} features, got {len(raw) - 2}",
                    row=data_row)
            try:
                vec = [float(c) for c in raw[2:]]
            except ValueError as exc:
                raise EmbeddingFormatError(f"unparsable value ({exc})", row=data_row) from None
            if not all(math.isfinite(x) for x in vec):
                raise EmbeddingFormatError("non-finite value", row=data_row)
            subjects.append(raw[0].strip())
            samples.append(raw[1].strip())
            values.append(vec)
    if not values:
        raise EmbeddingFormatError(f"{path}: no embedding rows")
    return subjects, samples, np.array(values, dtype=np.float64)


def load_embeddings(path, expected_dim: int | None = None, kind: str | None = None,
                    normalize: bool = False) -> Gallery | ProbeSet:
    """Load a gallery or probe set from CSV.

    Parameters
    ----------
    path : path-like
    expected_dim : int, optional
        Required feature dimension; inferred from the first row when omitted.
    kind : {"gallery", "probes"}, optional
        Force the collection type.  By default a file containing any
        ``"unknown"`` row (or a single subject) is a probe set, otherwise a
        gallery.
    normalize : bool
        L2-normalize every vector after loading.
    """
    subjects, samples, vectors = read_rows(path)
    if expected_dim is not None and vectors.shape[1] != expected_dim:
        raise EmbeddingFormatError(
            f"dimension mismatch: expected {expected_dim} features, got {vectors.shape[1]}",
            row=1)
    seen: set[tuple[str, str]] = set()
    for i, key in enumerate(zip(subjects, samples)):
        if key in seen:
            raise EmbeddingFormatError(f"duplicate (subject, sample) {key}", row=i + 1)
        seen.add(key)
    if kind is None:
        kind = "probes" if UNKNOWN in subjects or len(set(subjects)) < 2 else "gallery"
    if kind == "gallery":
        coll = Gallery(subjects, samples, vectors)
    elif kind == "probes":
        coll = ProbeSet(subjects, samples, vectors)
    else:
        raise ValueError(f"unknown collection kind {kind!r}")
    return l2_normalize(coll) if normalize else coll


def save_embeddings(collection: EmbeddingSet, path) -> None:
    """Write ``collection`` as CSV; floats use ``repr`` so reloading is exact."""
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["subject", "sample"] + [f"f{i}" for i in range(collection.dim)])
        for s, k, v in zip(collection.labels, collection.samples, collection.vectors):
            writer.writerow([s, k] + [repr(float(x)) for x in v])


def l2_normalize(collection: EmbeddingSet) -> EmbeddingSet:
    """Scale every vector to unit Euclidean norm; labels are untouched."""
    v = collection.vectors
    # pre-scale by the largest entry so squaring cannot underflow or overflow
    scale = np.max(np.abs(v), axis=1)
    zero = scale == 0.0
    if zero.any():
        i = int(np.argmax(zero))
        raise EmbeddingFormatError(
            f"zero-norm vector for ({collection.labels[i]!r}, {collection.samples[i]!r})",
            row=i + 1)
    v = v / scale[:, None]
    return collection.with_vectors(v / np.linalg.norm(v, axis=1)[:, None])
