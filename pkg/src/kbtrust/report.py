"""Report emission: flat key-value metrics file, CSV curve data, and
rendered calibration / precision-recall figures."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .metrics import EvalReport  # noqa: E402


def write_report(out_dir, report: EvalReport, render_figures: bool = True):
    """Write report.txt, calibration.csv, pr.csv and, unless disabled,
    calibration.png and pr.png into out_dir.  Returns the written paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = out_dir / "report.txt"
    with open(report_path, "w", encoding="utf-8") as fh:
        for name, value in report.as_items():
            if value is None:
                fh.write(f"{name}\tabsent\n")
            else:
                fh.write(f"{name}\t{value:.6f}\n")
    written.append(report_path)

    cal_path = out_dir / "calibration.csv"
    with open(cal_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lo", "hi", "predicted_mean", "empirical_accuracy",
                         "count"])
        for lo, hi, mean_p, acc, count in report.calibration_buckets:
            writer.writerow([f"{lo:.2f}", f"{hi:.2f}", f"{mean_p:.6f}",
                             f"{acc:.6f}", count])
    written.append(cal_path)

    pr_path = out_dir / "pr.csv"
    with open(pr_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["recall", "precision"])
        for recall, precision in report.pr_points:
            writer.writerow([f"{recall:.6f}", f"{precision:.6f}"])
    written.append(pr_path)

    if render_figures:
        written += render_report_figures(out_dir, report)
    return written


def render_report_figures(out_dir, report: EvalReport):
    out_dir = Path(out_dir)
    written = []

    if report.calibration_buckets:
        fig, ax = plt.subplots(figsize=(5, 4))
        xs = [row[2] for row in report.calibration_buckets]
        ys = [row[3] for row in report.calibration_buckets]
        sizes = [row[4] for row in report.calibration_buckets]
        ax.plot([0, 1], [0, 1], color="0.7", linestyle="--", linewidth=1)
        ax.scatter(xs, ys, s=[10 + 2 * min(n, 50) for n in sizes],
                   color="tab:blue", zorder=3)
        ax.set_xlabel("mean predicted probability")
        ax.set_ylabel("empirical accuracy")
        ax.set_xlim(-0.02, 1.02)
        ax.set_ylim(-0.02, 1.02)
        ax.set_title("Calibration")
        fig.tight_layout()
        path = out_dir / "calibration.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)

    if report.pr_points:
        fig, ax = plt.subplots(figsize=(5, 4))
        xs = [r for r, _ in report.pr_points]
        ys = [p for _, p in report.pr_points]
        ax.plot([0.0] + xs, [ys[0]] + ys, color="tab:red")
        ax.set_xlabel("recall")
        ax.set_ylabel("precision")
        ax.set_xlim(0, 1.02)
        ax.set_ylim(0, 1.02)
        label = "" if report.auc_pr is None else f" (AUC={report.auc_pr:.3f})"
        ax.set_title("Precision-recall" + label)
        fig.tight_layout()
        path = out_dir / "pr.png"
        fig.savefig(path, dpi=120)
        plt.close(fig)
        written.append(path)
    return written
