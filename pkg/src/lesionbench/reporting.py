"""Aggregation of per-sample records into summary tables, histograms, and
cross-run comparisons.

Variance is the population variance (divide by N); the choice is recorded in
the summary payload. Rounding happens only at presentation time, so emitted
JSON keeps full precision and regenerated tables are byte-stable.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .dataset import CANONICAL_CLASS_ORDER, TABLE_CLASS_ORDER, LesionClass
from .metrics import METRIC_NAMES, MetricRecord
from .util import read_json, write_json_stable

VARIANCE_KIND = "population"


@dataclass(frozen=True)
class MetricStats:
    mean: float
    variance: float

    def formatted(self) -> str:
        """Presentation cell in mean(variance) form, two decimals each."""
        return f"{self.mean:.2f}({self.variance:.2f})"


@dataclass(frozen=True)
class RunSummary:
    run_label: str
    n_samples: int
    overall: dict[str, float]  # metric name -> mean
    per_class: dict[LesionClass, dict[str, MetricStats]]

    def to_payload(self) -> dict:
        return {
            "run_label": self.run_label,
            "n_samples": self.n_samples,
            "variance_kind": VARIANCE_KIND,
            "tool_version": __version__,
            "overall": {m: self.overall[m] for m in METRIC_NAMES},
            "per_class": {
                cls.value: {
                    m: {"mean": st.mean, "variance": st.variance}
                    for m, st in stats.items()
                }
                for cls, stats in self.per_class.items()
            },
        }

    @classmethod
    def from_payload(cls, payload: dict) -> "RunSummary":
        return cls(
            run_label=payload["run_label"],
            n_samples=int(payload["n_samples"]),
            overall={m: float(payload["overall"][m]) for m in METRIC_NAMES},
            per_class={
                LesionClass(token): {
                    m: MetricStats(float(v["mean"]), float(v["variance"]))
                    for m, v in stats.items()
                }
                for token, stats in payload["per_class"].items()
            },
        )


@dataclass(frozen=True)
class Histogram:
    metric_name: str
    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]

    @property
    def n_samples(self) -> int:
        return sum(self.counts)


@dataclass(frozen=True)
class ComparisonEntry:
    old: float
    new: float
    pct_improvement: float | None
    error: str | None = None


@dataclass(frozen=True)
class ComparisonReport:
    baseline_label: str
    new_label: str
    metrics: dict[str, ComparisonEntry]

    def to_payload(self) -> dict:
        return {
            "baseline_label": self.baseline_label,
            "new_label": self.new_label,
            "tool_version": __version__,
            "metrics": {
                name: {
                    "old": e.old,
                    "new": e.new,
                    "pct_improvement": e.pct_improvement,
                    "error": e.error,
                }
                for name, e in self.metrics.items()
            },
        }


def summarize(records: list[MetricRecord], label: str) -> RunSummary:
    """Overall means plus per-class mean/variance, order-independent."""
    if not records:
        raise ValueError("cannot summarize an empty record list")
    ordered = sorted(records, key=lambda r: r.image_id)

    overall = {
        m: sum(r.score(m) for r in ordered) / len(ordered) for m in METRIC_NAMES
    }
    per_class: dict[LesionClass, dict[str, MetricStats]] = {}
    for cls in CANONICAL_CLASS_ORDER:
        members = [r for r in ordered if r.lesion_class is cls]
        if not members:
            continue
        per_class[cls] = {
            m: _mean_variance([r.score(m) for r in members]) for m in METRIC_NAMES
        }
    return RunSummary(
        run_label=label, n_samples=len(ordered), overall=overall, per_class=per_class
    )


def _mean_variance(values: list[float]) -> MetricStats:
    n = len(values)
    mean = sum(values) / n
    variance = sum((v - mean) ** 2 for v in values) / n
    return MetricStats(mean=mean, variance=variance)


def histogram(records: list[MetricRecord], metric: str, bins: int = 20) -> Histogram:
    """Uniform bins over [0, 1]; every bin is right-inclusive, so an exact
    edge value lands in the lower bin and 1.0 lands in the last."""
    if not records:
        raise ValueError("cannot histogram an empty record list")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    counts = [0] * bins
    for r in records:
        value = r.score(metric)
        if not 0.0 <= value <= 1.0:
            raise ValueError(f"{r.image_id}: score {value} outside [0, 1]")
        idx = max(0, math.ceil(value * bins) - 1)
        counts[min(idx, bins - 1)] += 1
    edges = tuple(i / bins for i in range(bins + 1))
    return Histogram(metric_name=metric, bin_edges=edges, counts=tuple(counts))


def compare(baseline: RunSummary, new: RunSummary) -> ComparisonReport:
    """Relative change of each overall mean: (new - old) / old * 100."""
    metrics = {}
    for m in METRIC_NAMES:
        old = baseline.overall[m]
        new_val = new.overall[m]
        if old == 0.0:
            metrics[m] = ComparisonEntry(
                old=old, new=new_val, pct_improvement=None,
                error="baseline mean is zero; improvement undefined",
            )
        else:
            metrics[m] = ComparisonEntry(
                old=old, new=new_val, pct_improvement=(new_val - old) / old * 100.0
            )
    return ComparisonReport(
        baseline_label=baseline.run_label, new_label=new.run_label, metrics=metrics
    )


def emit_reports(
    summary: RunSummary,
    histograms: list[Histogram],
    out_dir: Path,
    comparison: ComparisonReport | None = None,
    class_order: str = "canonical",
) -> dict[str, Path]:
    """Write summary.json, per_class.csv, hist_<metric>.csv, comparison.json."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    paths["summary"] = write_json_stable(summary.to_payload(), out_dir / "summary.json")

    order = CANONICAL_CLASS_ORDER if class_order == "canonical" else TABLE_CLASS_ORDER
    per_class_path = out_dir / "per_class.csv"
    with per_class_path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["lesion_class", "dice", "iou", "pixel_accuracy"])
        for cls in order:
            if cls not in summary.per_class:
                continue
            stats = summary.per_class[cls]
            writer.writerow([cls.value] + [stats[m].formatted() for m in METRIC_NAMES])
    paths["per_class"] = per_class_path

    for hist in histograms:
        hist_path = out_dir / f"hist_{hist.metric_name}.csv"
        with hist_path.open("w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["bin_left", "bin_right", "count"])
            for i, count in enumerate(hist.counts):
                writer.writerow([repr(hist.bin_edges[i]), repr(hist.bin_edges[i + 1]), count])
        paths[f"hist_{hist.metric_name}"] = hist_path

    if comparison is not None:
        paths["comparison"] = write_json_stable(
            comparison.to_payload(), out_dir / "comparison.json"
        )
    return paths


def load_summary(path: Path) -> RunSummary:
    return RunSummary.from_payload(read_json(path))
