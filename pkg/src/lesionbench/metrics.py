"""Overlap metrics on binary mask pairs via exact confusion counts.

All three scores come from one integer confusion pass; division happens once
at the end in double precision, so equal counts always give bitwise-equal
scores.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from .dataset import LesionClass
from .errors import MaskShapeError
from .masks import BinaryMask


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn


@dataclass(frozen=True)
class MetricRecord:
    """Per-sample scores; `degenerate` marks the both-masks-empty convention."""

    image_id: str
    lesion_class: LesionClass
    dice: float
    iou: float
    pixel_accuracy: float
    degenerate: bool = False

    def score(self, metric: str) -> float:
        if metric not in ("dice", "iou", "pixel_accuracy"):
            raise ValueError(f"unknown metric: {metric!r}")
        return float(getattr(self, metric))


METRIC_NAMES = ("dice", "iou", "pixel_accuracy")


def confusion_counts(pred: BinaryMask, gt: BinaryMask) -> ConfusionCounts:
    """Exact per-pixel counts; masks must have identical dimensions."""
    if pred.data.shape != gt.data.shape:
        raise MaskShapeError(
            f"dimension mismatch: pred {pred.data.shape} vs gt {gt.data.shape}"
        )
    p = pred.data.astype(bool)
    g = gt.data.astype(bool)
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    tn = int(np.count_nonzero(~p & ~g))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=tn)


def pixel_accuracy(c: ConfusionCounts) -> float:
    """Correctly classified pixels over all pixels."""
    if c.total == 0:
        raise ValueError("pixel accuracy undefined on zero pixels")
    return (c.tp + c.tn) / c.total


def iou(c: ConfusionCounts) -> float:
    """Intersection over union; both-empty pairs score 1.0 by convention."""
    denom = c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return c.tp / denom


def dice(c: ConfusionCounts) -> float:
    """2*intersection over the summed mask sizes; both-empty pairs score 1.0."""
    denom = 2 * c.tp + c.fp + c.fn
    if denom == 0:
        return 1.0
    return 2 * c.tp / denom


def evaluate_pair(
    pred: BinaryMask,
    gt: BinaryMask,
    image_id: str,
    lesion_class: LesionClass,
) -> MetricRecord:
    """All three scores from a single confusion pass."""
    c = confusion_counts(pred, gt)
    return MetricRecord(
        image_id=image_id,
        lesion_class=lesion_class,
        dice=dice(c),
        iou=iou(c),
        pixel_accuracy=pixel_accuracy(c),
        degenerate=(c.tp + c.fp + c.fn == 0),
    )


def write_records_csv(records: Iterable[MetricRecord], path: Path) -> Path:
    """Stream records to CSV, id-sorted, scores at full double precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(records, key=lambda r: r.image_id)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["image_id", "lesion_class", "dice", "iou", "pixel_accuracy"])
        for r in ordered:
            writer.writerow(
                [r.image_id, r.lesion_class.value, repr(r.dice), repr(r.iou), repr(r.pixel_accuracy)]
            )
    return path


def read_records_csv(path: Path) -> list[MetricRecord]:
    records = []
    with Path(path).open(newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            records.append(
                MetricRecord(
                    image_id=row["image_id"],
                    lesion_class=LesionClass(row["lesion_class"]),
                    dice=float(row["dice"]),
                    iou=float(row["iou"]),
                    pixel_accuracy=float(row["pixel_accuracy"]),
                )
            )
    return records
