import os
import subprocess
import sys

import numpy as np
import pytest

from oracles import exhaustive_neighbor
from opennae import kernels
from opennae.nn import TrainConfig, epoch_batches, init_net

BACKENDS = kernels.available_backends()
needs_both = pytest.mark.skipif(len(BACKENDS) < 2, reason="compiled extension not built")


def test_python_backend_always_available():
    assert "python" in BACKENDS
    assert kernels.BACKEND in BACKENDS


def test_env_var_forces_fallback():
    env = dict(os.environ, OPENNAE_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import opennae; print(opennae.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_both
def test_omu_neighbors_agree_with_ties():
    rng = np.random.default_rng(0)
    # duplicated rows create exact cosine ties; lowest index must win in both
    base = rng.normal(size=(10, 5))
    Z = np.vstack([base, base, 2.0 * base])
    labels = np.arange(30) % 7
    c = kernels.omu_neighbors(Z, labels, impl=BACKENDS["cython"])
    p = kernels.omu_neighbors(Z, labels, impl=BACKENDS["python"])
    assert np.array_equal(c, p)
    for i in range(0, 30, 3):
        assert c[i] == exhaustive_neighbor(Z, labels, i)


def test_omu_neighbors_single_label():
    for impl in BACKENDS.values():
        assert np.all(kernels.omu_neighbors(np.eye(3), [0, 0, 0], impl=impl) == -1)


@needs_both
def test_scoring_kernels_agree():
    rng = np.random.default_rng(1)
    act = rng.normal(size=(9, 20, 2))
    assign = rng.integers(0, 2, size=(9, 14))
    a = [kernels.aggregate_scores(act, assign, impl=m) for m in BACKENDS.values()]
    assert np.abs(a[0] - a[1]).max() <= 1e-12
    P, Z = rng.normal(size=(20, 6)), rng.normal(size=(30, 6))
    labels = np.arange(30) % 5
    b = [kernels.max_cosine_per_subject(P, Z, labels, 5, impl=m) for m in BACKENDS.values()]
    assert np.abs(b[0] - b[1]).max() <= 1e-12


@needs_both
@pytest.mark.parametrize("margin", [0.0, 0.3])
def test_sgd_epoch_agrees(margin):
    rng = np.random.default_rng(2)
    x = rng.normal(size=(150, 12))
    t = np.concatenate([rng.integers(0, 2, size=100), -np.ones(50, dtype=np.int64)])
    order, bounds = epoch_batches(rng, 100, 50, TrainConfig(batch_size=32))
    results = []
    for impl in BACKENDS.values():
        params = init_net([12, 160, 2], 5).params()
        vel = [np.zeros_like(q) for q in params]
        losses = [kernels.sgd_epoch(x, t, order, bounds, params, vel, 0.01, 0.9, margin, impl=impl)
                  for _ in range(3)]
        results.append((losses, params))
    np.testing.assert_allclose(results[0][0], results[1][0], rtol=1e-12)
    for p, q in zip(results[0][1], results[1][1]):
        np.testing.assert_allclose(p, q, rtol=1e-10, atol=1e-12)
