import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import brute_force_rates
from opennae.metrics import (ClosedSetError, OROCCurve, UnreachableTargetError,
                             calibrate_threshold, compute_oroc, export_curve, load_curve, rank1,
                             rates_at_threshold, summarize, tpir_at_fpir)
from opennae.models import ScoreTable

SUBJ = ("a", "b")


def hand_table():
    # two known probes: one correct at 0.9, one wrong at 0.7; two unknown at 0.5 and 0.2
    scores = np.array([[0.9, 0.1], [0.7, 0.3], [0.5, 0.1], [0.0, 0.2]])
    return ScoreTable(scores, SUBJ), ["a", "b", "unknown", "unknown"]


def test_hand_example():
    t, labels = hand_table()
    assert rates_at_threshold(t, labels, 0.6) == (0.0, 0.5)
    curve = compute_oroc(t, labels)
    assert curve.thresholds[0] == -math.inf and curve.thresholds[-1] == math.inf
    assert (curve.fpir[0], curve.tpir[0]) == (1.0, 0.5)
    assert (curve.fpir[-1], curve.tpir[-1]) == (0.0, 0.0)
    assert rank1(t, labels) == 0.5
    np.testing.assert_array_equal(curve.thresholds[1:-1], [0.2, 0.5, 0.7, 0.9])


def test_sentinel_endpoints_equal_rank1():
    rng = np.random.default_rng(0)
    t = ScoreTable(rng.normal(size=(30, 4)), ("a", "b", "c", "d"))
    labels = list(rng.choice(["a", "b", "c", "d", "unknown"], size=30))
    labels[0], labels[1] = "unknown", "a"
    curve = compute_oroc(t, labels)
    assert curve.tpir[0] == rank1(t, labels)
    assert curve.fpir[0] == 1.0


score_tables = st.integers(0, 10_000).flatmap(lambda seed: st.tuples(
    st.just(seed), st.integers(2, 40), st.integers(2, 5), st.sampled_from([None, 3])))


def _random_case(seed, n, c, rounding):
    rng = np.random.default_rng(seed)
    scores = rng.normal(size=(n, c))
    if rounding is not None:
        scores = np.round(scores, 0)  # heavy ties
    subj = tuple(f"s{i}" for i in range(c))
    labels = list(rng.choice(list(subj) + ["unknown"], size=n))
    labels[0], labels[1] = "unknown", subj[0]
    return ScoreTable(scores, subj), labels


@settings(max_examples=60, deadline=None)
@given(score_tables)
def test_matches_brute_force(case):
    t, labels = _random_case(*case)
    curve = compute_oroc(t, labels)
    for theta, f, p in curve.points:
        assert (f, p) == brute_force_rates(t.scores, t.subjects, labels, theta)
    assert np.all(np.diff(curve.fpir) <= 0) and np.all(np.diff(curve.tpir) <= 0)


@settings(max_examples=30, deadline=None)
@given(score_tables)
def test_invariant_under_monotone_transform(case):
    t, labels = _random_case(*case)
    a = compute_oroc(t, labels)
    b = compute_oroc(ScoreTable(np.exp(3.0 * t.scores) + 2.0, t.subjects), labels)
    np.testing.assert_array_equal(a.fpir, b.fpir)
    np.testing.assert_array_equal(a.tpir, b.tpir)


def test_tpir_at_fpir_step_convention():
    curve = OROCCurve([-np.inf, 0.1, 0.4, 0.8, np.inf],
                      [1.0, 0.5, 0.5, 0.05, 0.0], [0.9, 0.8, 0.6, 0.3, 0.0])
    assert tpir_at_fpir(curve, 1.0) == 0.9
    assert tpir_at_fpir(curve, 0.6) == 0.8   # FPIR 0.5 reached twice: keep the higher TPIR
    assert tpir_at_fpir(curve, 0.1) == 0.3   # no interpolation between 0.5 and 0.05
    assert tpir_at_fpir(curve, 0.01) == 0.0
    with pytest.raises(ValueError):
        tpir_at_fpir(curve, 0.0)


def test_calibrate_threshold():
    t, labels = hand_table()
    assert calibrate_threshold(t, labels, 0.5) == 0.5
    assert calibrate_threshold(t, labels, 1.0) == -math.inf
    assert calibrate_threshold(t, labels, 0.0) == 0.7
    # unknown probe scores highest: only +inf reaches FPIR 0
    t2 = ScoreTable(np.array([[0.3, 0.1], [0.9, 0.0]]), SUBJ)
    with pytest.raises(UnreachableTargetError):
        calibrate_threshold(t2, ["a", "unknown"], 0.0)


def test_calibrated_threshold_meets_target():
    rng = np.random.default_rng(5)
    t = ScoreTable(rng.normal(size=(200, 6)), tuple("abcdef"))
    labels = list(rng.choice(list("abcdef") + ["unknown"] * 3, size=200))
    for target in (0.5, 0.1, 0.02):
        theta = calibrate_threshold(t, labels, target)
        fpir, _ = rates_at_threshold(t, labels, theta)
        assert fpir <= target
        below = np.max(t.scores, axis=1)
        lower = below[below < theta]
        if lower.size:
            assert rates_at_threshold(t, labels, lower.max())[0] > target


def test_export_round_trip(tmp_path):
    curve = OROCCurve([-np.inf, 0.3, np.inf], [1.0, 1 / 3, 0.0], [0.7, 0.1, 0.0])
    path = tmp_path / "curve.csv"
    export_curve(curve, path)
    lines = path.read_text().splitlines()
    assert len(lines) == 4 and lines[0] == "threshold,fpir,tpir"
    back = load_curve(path)
    assert back.points == curve.points
    (tmp_path / "bad.csv").write_text("x,y\n")
    with pytest.raises(ValueError):
        load_curve(tmp_path / "bad.csv")


def test_closed_set_and_errors():
    t = ScoreTable(np.array([[0.9, 0.1], [0.2, 0.8], [0.6, 0.4]]), SUBJ)
    with pytest.raises(ClosedSetError) as info:
        compute_oroc(t, ["a", "b", "b"])
    assert info.value.rank1 == pytest.approx(2 / 3)
    with pytest.raises(ValueError):
        compute_oroc(t, ["a", "b"])
    with pytest.raises(ValueError):
        compute_oroc(t, ["unknown"] * 3)


def test_curve_validation():
    with pytest.raises(ValueError):
        OROCCurve([0.0, 0.0], [1.0, 0.5], [1.0, 0.5])
    with pytest.raises(ValueError):
        OROCCurve([0.0, 1.0], [0.5, 1.0], [1.0, 0.5])


def test_summarize():
    t, labels = hand_table()
    assert summarize(t, labels, (1.0, 0.5, 0.1)) == {1.0: 0.5, 0.5: 0.5, 0.1: 0.5}
