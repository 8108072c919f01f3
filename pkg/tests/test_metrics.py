"""Metric suite: square losses, calibration, AUC-PR, coverage."""

import math
import random

from hypothesis import given, settings, strategies as st

from kbtrust.metrics import (BUCKETS, auc_pr, build_report, coverage,
                             square_loss, wdev)


# ---------------------------------------------------------------------------
# square loss

def test_square_loss_examples():
    assert square_loss({"a": 1.0, "b": 0.0}, {"a": 1, "b": 0}) == 0.0
    assert math.isclose(square_loss({"a": 0.6}, {"a": 1}), 0.16)
    assert math.isclose(square_loss({"a": 0.5, "b": 0.5}, {"a": 1, "b": 0}),
                        0.25)


def test_square_loss_real_valued_truth():
    assert math.isclose(square_loss({"w": 0.9}, {"w": 0.7}), 0.04)


def test_square_loss_restricted_to_shared_keys():
    assert math.isclose(square_loss({"a": 0.5, "zzz": 0.1}, {"a": 0, "b": 1}),
                        0.25)
    assert square_loss({"a": 0.5}, {"b": 1}) is None
    assert square_loss({}, {}) is None


def test_square_loss_permutation_invariant():
    pred = {"a": 0.2, "b": 0.9, "c": 0.4}
    truth = {"a": 0, "b": 1, "c": 1}
    rev_pred = dict(reversed(list(pred.items())))
    assert square_loss(pred, truth) == square_loss(rev_pred, truth)


# ---------------------------------------------------------------------------
# calibration

def test_bucket_edges():
    assert len(BUCKETS) == 29
    assert BUCKETS[0] == (0.0, 0.01)
    assert BUCKETS[4] == (0.04, 0.05)
    assert BUCKETS[5] == (0.05, 0.1)
    assert BUCKETS[22] == (0.9, 0.95)
    assert BUCKETS[23] == (0.95, 0.96)
    assert BUCKETS[27] == (0.99, 1.0)
    assert BUCKETS[28] == (1.0, 1.0)
    # contiguous cover of [0, 1]
    for (_, hi), (lo, _) in zip(BUCKETS, BUCKETS[1:]):
        assert hi == lo


def test_wdev_examples():
    value, rows = wdev({"a": 1.0, "b": 1.0}, {"a": 1, "b": 1})
    assert value == 0.0
    assert rows == [(1.0, 1.0, 1.0, 1.0, 2)]

    value, _ = wdev({"a": 0.5, "b": 0.5}, {"a": 1, "b": 0})
    assert math.isclose(value, 0.0, abs_tol=1e-12)

    value, rows = wdev({"a": 0.95, "b": 0.95}, {"a": 0, "b": 0})
    assert math.isclose(value, 0.95 ** 2)
    assert rows == [(0.95, 0.96, 0.95, 0.0, 2)]


def test_wdev_counts_sum_to_evaluated():
    rng = random.Random(0)
    pred = {i: rng.random() for i in range(500)}
    truth = {i: rng.randint(0, 1) for i in range(500)}
    value, rows = wdev(pred, truth)
    assert sum(count for *_, count in rows) == 500
    assert value >= 0.0


def test_wdev_calibrated_predictor_is_small():
    rng = random.Random(1)
    pred, truth = {}, {}
    for i in range(20_000):
        p = rng.choice([0.1, 0.3, 0.7, 0.9])
        pred[i] = p
        truth[i] = 1 if rng.random() < p else 0
    value, _ = wdev(pred, truth)
    assert value < 1e-3


def test_wdev_empty_intersection():
    value, rows = wdev({"a": 0.5}, {"b": 1})
    assert value is None and rows == []


# ---------------------------------------------------------------------------
# AUC-PR

def test_auc_perfect_ranking():
    pred = {"p1": 0.9, "p2": 0.8, "n1": 0.2, "n2": 0.1}
    truth = {"p1": 1, "p2": 1, "n1": 0, "n2": 0}
    area, points = auc_pr(pred, truth)
    assert math.isclose(area, 1.0)
    assert points[-1] == (1.0, 0.5)


def test_auc_constant_predictions_equal_positive_rate():
    pred = {i: 0.5 for i in range(8)}
    truth = {i: (1 if i < 2 else 0) for i in range(8)}
    area, points = auc_pr(pred, truth)
    assert math.isclose(area, 0.25)
    assert points == [(1.0, 0.25)]


def test_auc_no_positives_absent():
    assert auc_pr({"a": 0.9}, {"a": 0}) == (None, [])


def _oracle_auc(pred, truth):
    """Exhaustive threshold sweep with explicit trapezoidal integration."""
    scored = sorted(((pred[k], str(k), truth[k]) for k in truth),
                    key=lambda row: (-row[0], row[1]))
    thresholds = sorted({s for s, _, _ in scored}, reverse=True)
    positives = sum(t for _, _, t in scored)
    points = []
    for thr in thresholds:
        taken = [row for row in scored if row[0] >= thr]
        tp = sum(t for _, _, t in taken)
        points.append((tp / positives, tp / len(taken)))
    area = 0.0
    prev_r, prev_p = 0.0, points[0][1]
    for r, p in points:
        area += (r - prev_r) * (p + prev_p) / 2.0
        prev_r, prev_p = r, p
    return area


def test_auc_matches_threshold_sweep_oracle():
    rng = random.Random(20240819)
    for _ in range(300):
        size = rng.randint(2, 30)
        pred = {i: rng.choice([rng.random(), 0.5, 0.9]) for i in range(size)}
        truth = {i: rng.randint(0, 1) for i in range(size)}
        if sum(truth.values()) == 0:
            truth[0] = 1
        area, _ = auc_pr(pred, truth)
        assert abs(area - _oracle_auc(pred, truth)) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(min_value=0, max_value=1000),
                          st.integers(min_value=0, max_value=1)),
                min_size=1, max_size=30))
def test_auc_invariant_under_monotone_transform(rows):
    # scores on a coarse grid keep the affine map strictly monotone in
    # floating point, so the ranking (and the curve) is unchanged
    pred = {i: p / 1000.0 for i, (p, _) in enumerate(rows)}
    truth = {i: t for i, (_, t) in enumerate(rows)}
    if sum(truth.values()) == 0:
        truth[0] = 1
    squeezed = {k: 0.25 + p / 2.0 for k, p in pred.items()}
    a1, _ = auc_pr(pred, truth)
    a2, _ = auc_pr(squeezed, truth)
    assert math.isclose(a1, a2, abs_tol=1e-12)


def test_auc_reversed_single_positive():
    pred = {"n0": 0.9, "n1": 0.8, "n2": 0.7, "p": 0.1}
    truth = {"n0": 0, "n1": 0, "n2": 0, "p": 1}
    area, _ = auc_pr(pred, truth)
    assert abs(area - _oracle_auc(pred, truth)) <= 1e-9


# ---------------------------------------------------------------------------
# coverage and report assembly

def test_coverage_examples():
    assert coverage({"a", "b"}, {"a", "b"}) == 1.0
    assert coverage({"a", "b", "c"}, {"a", "b", "c", "d"}) == 0.75
    assert coverage(set(), set()) is None


def test_build_report_none_handling():
    report = build_report()
    assert all(value is None for _, value in report.as_items())
    report = build_report(value_pred={"a": 0.9}, value_truth={"a": 1},
                          evaluated_keys={"a"}, all_keys={"a", "b"})
    assert math.isclose(report.sqv, 0.01)
    assert report.sqc is None and report.sqa is None
    assert report.cov == 0.5
    assert report.auc_pr is not None


def test_build_report_ignores_non_binary_truth_for_curves():
    report = build_report(value_pred={"a": 0.9, "b": 0.4},
                          value_truth={"a": 1, "b": 0.5})
    # the 0.5 target contributes to the loss but not to calibration/PR
    assert report.sqv is not None
    assert sum(count for *_, count in report.calibration_buckets) == 1
