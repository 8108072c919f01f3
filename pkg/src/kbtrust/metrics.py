"""Evaluation suite: square losses, calibration (WDev), AUC-PR, coverage.

All functions are pure and evaluate only keys present in the truth map.
Metrics that are undefined on their input (empty intersection, no
positives) come back as None and are reported as absent.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def _frange_buckets():
    """Fixed calibration buckets, finer at the extremes where most mass sits:
    [0,.01)..[.04,.05), [.05,.1)..[.9,.95), [.95,.96)..[.99,1), [1,1]."""
    cuts = [round(i * 0.01, 2) for i in range(5)]
    cuts += [round(0.05 + i * 0.05, 2) for i in range(18)]
    cuts += [round(0.95 + i * 0.01, 2) for i in range(6)]
    edges = list(zip(cuts, cuts[1:]))
    edges.append((1.0, 1.0))
    return edges


BUCKETS = _frange_buckets()


@dataclass
class EvalReport:
    sqv: float | None = None
    sqc: float | None = None
    sqa: float | None = None
    wdev: float | None = None
    auc_pr: float | None = None
    cov: float | None = None
    calibration_buckets: list = field(default_factory=list)
    pr_points: list = field(default_factory=list)

    def as_items(self):
        for name in ("sqv", "sqc", "sqa", "wdev", "auc_pr", "cov"):
            yield name, getattr(self, name)


def square_loss(predicted, truth):
    """Mean squared error of predictions against truth indicators.

    Truth may be binary or real-valued (source-accuracy case).  Evaluation
    is restricted to keys present in both maps; returns None when that
    intersection is empty.
    """
    total = 0.0
    count = 0
    for key, target in truth.items():
        if key not in predicted:
            continue
        total += (predicted[key] - target) ** 2
        count += 1
    if count == 0:
        return None
    return total / count


def wdev(predicted, truth):
    """Count-weighted squared gap between bucketed predictions and the
    empirical accuracy in each bucket.  Returns (wdev, buckets) with one
    (lo, hi, mean_predicted, empirical_accuracy, count) row per non-empty
    bucket."""
    assigned = [[] for _ in BUCKETS]
    for key, target in sorted(truth.items(), key=lambda kv: str(kv[0])):
        if key not in predicted:
            continue
        p = predicted[key]
        assigned[_bucket_of(p)].append((p, target))
    rows = []
    total = 0.0
    count = 0
    for (lo, hi), entries in zip(BUCKETS, assigned):
        if not entries:
            continue
        mean_p = sum(p for p, _ in entries) / len(entries)
        accuracy = sum(t for _, t in entries) / len(entries)
        rows.append((lo, hi, mean_p, accuracy, len(entries)))
        total += len(entries) * (mean_p - accuracy) ** 2
        count += len(entries)
    if count == 0:
        return None, rows
    return total / count, rows


def _bucket_of(p):
    if p >= 1.0:
        return len(BUCKETS) - 1
    for i, (lo, hi) in enumerate(BUCKETS[:-1]):
        if lo <= p < hi:
            return i
    return 0 if p < 0 else len(BUCKETS) - 2


def auc_pr(predicted, truth):
    """Area under the precision-recall curve by trapezoidal integration.

    Keys are swept in descending predicted order (ties broken by stable
    key order) with one threshold per distinct score; the curve is
    anchored at recall 0 with the first point's precision.  Returns
    (area, points); None when the truth has no positives.
    """
    scored = [(predicted[k], str(k), truth[k])
              for k in truth if k in predicted]
    positives = sum(t for _, _, t in scored)
    if positives == 0:
        return None, []
    scored.sort(key=lambda row: (-row[0], row[1]))
    points = []
    tp = 0
    seen = 0
    i = 0
    while i < len(scored):
        score = scored[i][0]
        while i < len(scored) and scored[i][0] == score:
            seen += 1
            tp += scored[i][2]
            i += 1
        points.append((tp / positives, tp / seen))
    area = 0.0
    prev_recall, prev_precision = 0.0, points[0][1]
    for recall, precision in points:
        area += (recall - prev_recall) * (precision + prev_precision) / 2.0
        prev_recall, prev_precision = recall, precision
    return area, points


def coverage(evaluated_keys, all_keys):
    """Fraction of the triple universe that received a probability."""
    all_keys = set(all_keys)
    if not all_keys:
        return None
    evaluated = set(evaluated_keys) & all_keys
    return len(evaluated) / len(all_keys)


def build_report(value_pred=None, value_truth=None, c_pred=None, c_truth=None,
                 a_pred=None, a_truth=None, evaluated_keys=None,
                 all_keys=None) -> EvalReport:
    """Assemble the full report from whichever prediction maps exist."""
    report = EvalReport()
    if value_pred is not None and value_truth:
        report.sqv = square_loss(value_pred, value_truth)
        binary = {k: v for k, v in value_truth.items() if v in (0, 1)}
        report.wdev, report.calibration_buckets = wdev(value_pred, binary)
        report.auc_pr, report.pr_points = auc_pr(value_pred, binary)
    if c_pred is not None and c_truth:
        report.sqc = square_loss(c_pred, c_truth)
    if a_pred is not None and a_truth:
        report.sqa = square_loss(a_pred, a_truth)
    if all_keys is not None:
        report.cov = coverage(evaluated_keys or (), all_keys)
    return report
