import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import loss_value
from opennae.losses import (NEGATIVE, cel_loss, eos_loss, get_loss, margin_softmax,
                            mel_loss)


def test_margin_softmax_values():
    assert margin_softmax([0.0, 0.0], 0, 0.0) == pytest.approx(0.5, abs=1e-15)
    expected = math.exp(-0.3) / (math.exp(-0.3) + 1.0)
    assert margin_softmax([0.0, 0.0], 0, 0.3) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.42556, abs=5e-6)
    expected = math.exp(1.7) / (math.exp(1.7) + 1.0)
    assert margin_softmax([2.0, 0.0], 0, 0.3) == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.84553, abs=5e-6)


def test_margin_softmax_errors():
    with pytest.raises(ValueError):
        margin_softmax([0.0, 1.0], 2, 0.1)
    with pytest.raises(ValueError):
        margin_softmax([0.0], 0, 0.1)
    with pytest.raises(ValueError):
        margin_softmax([0.0, 1.0], 0, -0.1)


def test_mel_examples():
    loss, _ = mel_loss([[0.0, 0.0]], [0], m=0.0)
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    loss, grad = mel_loss([[0.0, 0.0]], [NEGATIVE], m=0.3)
    assert loss == pytest.approx(math.log(2), abs=1e-15)
    np.testing.assert_allclose(grad, 0.0, atol=1e-16)
    loss, _ = mel_loss([[1.0, 0.0]], [NEGATIVE], m=0.3)
    sig = 1 / (1 + math.exp(-1))
    expected = -0.5 * (math.log(sig) + math.log(1 - sig))
    assert loss == pytest.approx(expected, rel=1e-14)
    assert expected == pytest.approx(0.81326, abs=5e-6)


def test_mel_mixed_batch_is_sum_of_means():
    logits = np.array([[1.0, -1.0, 0.5], [0.2, 0.3, 0.1], [2.0, 0.0, -2.0], [0.0, 1.0, 0.0]])
    targets = np.array([0, NEGATIVE, 2, NEGATIVE])
    loss, _ = mel_loss(logits, targets, 0.3)
    known, _ = mel_loss(logits[[0, 2]], targets[[0, 2]], 0.3)
    neg, _ = mel_loss(logits[[1, 3]], targets[[1, 3]], 0.3)
    assert loss == pytest.approx(known + neg, rel=1e-15)
    assert loss == pytest.approx(float(loss_value(logits, targets, 0.3)), rel=1e-13)


def test_eos_and_cel():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(10, 4))
    targets = rng.integers(-1, 4, size=10)
    l1, g1 = eos_loss(logits, targets)
    l2, g2 = mel_loss(logits, targets, 0.0)
    assert l1 == l2 and np.array_equal(g1, g2)
    assert eos_loss([[0.0, 0.0]], [1])[0] == pytest.approx(math.log(2), abs=1e-15)
    assert cel_loss([[0.0, 0.0]], [0])[0] == pytest.approx(math.log(2), abs=1e-15)
    assert cel_loss([[10.0, 0.0]], [0])[0] == pytest.approx(math.log1p(math.exp(-10)), rel=1e-12)
    assert math.log1p(math.exp(-10)) == pytest.approx(4.54e-5, rel=1e-3)
    with pytest.raises(ValueError, match="NEGATIVE"):
        cel_loss([[0.0, 0.0], [1.0, 0.0]], [0, NEGATIVE])


def test_errors():
    with pytest.raises(ValueError):
        mel_loss(np.empty((0, 2)), [], 0.3)
    with pytest.raises(ValueError):
        mel_loss([[0.0, 1.0]], [2], 0.3)
    with pytest.raises(ValueError):
        get_loss("cfl")


def test_stable_for_large_logits():
    loss, grad = mel_loss([[1000.0, -1000.0], [800.0, 0.0]], [1, NEGATIVE], 0.3)
    assert math.isfinite(loss) and np.isfinite(grad).all()
    assert loss == pytest.approx(2000.3 + 400.0, rel=1e-12)


@pytest.mark.parametrize("m", [0.0, 0.3, 1.0])
def test_gradient_matches_finite_differences(m):
    rng = np.random.default_rng(int(m * 10))
    logits = rng.normal(size=(7, 3))
    targets = np.array([0, 1, 2, NEGATIVE, 0, NEGATIVE, 1])
    _, grad = mel_loss(logits, targets, m)
    h = 1e-6
    num = np.zeros_like(logits)
    for idx in np.ndindex(*logits.shape):
        up, down = logits.copy(), logits.copy()
        up[idx] += h
        down[idx] -= h
        num[idx] = (loss_value(up, targets, m) - loss_value(down, targets, m)) / (2 * h)
    np.testing.assert_allclose(grad, num, rtol=1e-6, atol=1e-9)


rows = arrays(np.float64, st.integers(2, 8), elements=st.floats(-20, 20))


@settings(max_examples=200, deadline=None)
@given(rows)
def test_negative_row_entropy_bound(row):
    loss, _ = mel_loss(row[None, :], [NEGATIVE], 0.3)
    assert loss >= math.log(row.size) - 1e-12
    if np.ptp(row) == 0:
        assert abs(loss - math.log(row.size)) <= 1e-9


@settings(max_examples=200, deadline=None)
@given(rows, st.floats(0.0, 3.0), st.floats(0.01, 3.0))
def test_margin_softmax_decreasing(row, m, dm):
    p0 = margin_softmax(row, 0, m)
    p1 = margin_softmax(row, 0, m + dm)
    # strict decrease unless the probability has saturated in float64
    assert p1 < p0 or p0 < 1e-300 or p1 == 1.0


@settings(max_examples=100, deadline=None)
@given(rows, st.floats(0.0, 3.0))
def test_margin_never_decreases_known_loss(row, m):
    with_m, _ = mel_loss(row[None, :], [0], m)
    without, _ = mel_loss(row[None, :], [0], 0.0)
    assert with_m >= without


def test_softmax_at_zero_margin():
    rng = np.random.default_rng(9)
    for _ in range(20):
        row = rng.normal(size=5)
        e = np.exp(row)
        assert margin_softmax(row, 3, 0.0) == pytest.approx(e[3] / e.sum(), rel=1e-13)


def test_descent_equalizes_negative_logits():
    s = np.array([[3.0, -1.0, 0.5]])
    for _ in range(5000):
        _, g = mel_loss(s, [NEGATIVE], 0.3)
        s -= 1.0 * g
    assert np.ptp(s) < 1e-3
