"""Shared fixtures: synthetic dataset trees and acceptance-result reporting."""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from lesionbench.dataset import CANONICAL_CLASS_ORDER

# ---------------------------------------------------------------------------
# synthetic dataset fixtures


def make_blob_mask(width: int, height: int, rng: np.random.Generator) -> np.ndarray:
    """Random filled ellipse, guaranteed non-empty. Returns uint8 {0,1}."""
    cx = rng.uniform(0.3, 0.7) * width
    cy = rng.uniform(0.3, 0.7) * height
    rx = rng.uniform(0.12, 0.3) * width
    ry = rng.uniform(0.12, 0.3) * height
    ys, xs = np.mgrid[0:height, 0:width]
    mask = (((xs - cx) / rx) ** 2 + ((ys - cy) / ry) ** 2 <= 1.0).astype(np.uint8)
    if mask.sum() == 0:
        mask[int(cy) % height, int(cx) % width] = 1
    return mask


def build_dataset_tree(
    root: Path,
    n: int = 6,
    width: int = 48,
    height: int = 40,
    seed: int = 7,
    empty_mask_ids: tuple[str, ...] = (),
) -> list[str]:
    """Write images/, masks/, and metadata.csv in the expected layout."""
    rng = np.random.default_rng(seed)
    (root / "images").mkdir(parents=True, exist_ok=True)
    (root / "masks").mkdir(parents=True, exist_ok=True)
    ids = []
    rows = []
    for i in range(n):
        image_id = f"IMG_{i:04d}"
        ids.append(image_id)
        if image_id in empty_mask_ids:
            mask = np.zeros((height, width), dtype=np.uint8)
        else:
            mask = make_blob_mask(width, height, rng)
        noise = rng.integers(0, 90, size=(height, width, 3), dtype=np.uint8)
        image = noise + (mask[:, :, None] * np.uint8(120))
        Image.fromarray(image, mode="RGB").save(root / "images" / f"{image_id}.png")
        Image.fromarray(mask * np.uint8(255), mode="L").save(
            root / "masks" / f"{image_id}_segmentation.png"
        )
        cls = CANONICAL_CLASS_ORDER[i % len(CANONICAL_CLASS_ORDER)]
        rows.append({"image_id": image_id, "dx": cls.value.lower(), "extra": "x"})
    with (root / "metadata.csv").open("w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=["image_id", "dx", "extra"])
        writer.writeheader()
        writer.writerows(rows)
    return ids


@pytest.fixture
def dataset_tree(tmp_path: Path) -> Path:
    build_dataset_tree(tmp_path / "data")
    return tmp_path / "data"


# ---------------------------------------------------------------------------
# acceptance criterion reporting: one line per criterion after the run

_ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    if "test_acceptance" not in report.nodeid:
        return
    name = report.nodeid.split("::")[-1]
    _ACCEPTANCE_RESULTS[name] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name in sorted(_ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"{_ACCEPTANCE_RESULTS[name]}  {name}")
