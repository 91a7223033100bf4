"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when importable; set
``OPENNAE_PURE_PYTHON=1`` to force the numpy fallback.  ``BACKEND`` names
the active implementation.
"""
from __future__ import annotations

import os

import numpy as np

from . import _pykernels

try:
    if os.environ.get("OPENNAE_PURE_PYTHON"):
        raise ImportError("compiled kernels disabled by OPENNAE_PURE_PYTHON")
    from . import _ckernels as _impl
    BACKEND = "cython"
except ImportError:
    _impl = _pykernels
    BACKEND = "python"


def available_backends() -> dict:
    """Mapping of backend name to kernel module, compiled one first if present."""
    out = {}
    try:
        from . import _ckernels
        out["cython"] = _ckernels
    except ImportError:
        pass
    out["python"] = _pykernels
    return out


def _f64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.float64)


def _i64(a) -> np.ndarray:
    return np.ascontiguousarray(a, dtype=np.int64)


def omu_neighbors(Z, labels, impl=None) -> np.ndarray:
    return (impl or _impl).omu_neighbors(_f64(Z), _i64(labels))


def aggregate_scores(act, assign, impl=None) -> np.ndarray:
    return (impl or _impl).aggregate_scores(_f64(act), _i64(assign))


def max_cosine_per_subject(P, Z, labels, n_subjects: int, impl=None) -> np.ndarray:
    return (impl or _impl).max_cosine_per_subject(_f64(P), _f64(Z), _i64(labels), int(n_subjects))


def sgd_epoch(X, targets, order, bounds, params, velocity, lr, mu, margin, impl=None) -> float:
    """Run one epoch in place on contiguous float64 ``params``/``velocity`` tuples."""
    return (impl or _impl).sgd_epoch(_f64(X), _i64(targets), _i64(order), _i64(bounds),
                                     *params, *velocity, float(lr), float(mu), float(margin))
