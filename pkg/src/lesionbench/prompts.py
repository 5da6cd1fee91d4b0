"""Simulated prompts from ground-truth masks.

Each image gets exactly one prompt set: a random foreground point plus a
bounding box built from the foreground's tight bbox, expanded by a fixed
margin, randomly shifted, randomly scaled, and finally clamped to the image.

The perturbation order (margin -> shift -> scale -> clamp) is part of the
contract: reordering changes the output distribution. Randomness comes from a
per-image stream keyed by (master_seed, image_id), so results never depend on
processing order or worker count.
"""
from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .dataset import Sample
from .errors import DegenerateBoxError, EmptyMaskError
from .masks import BinaryMask
from .util import round_half_away, stable_seed

DEFAULT_MARGIN_PX = 20
DEFAULT_MAX_SHIFT_PX = 30
DEFAULT_MAX_SCALE_FRAC = 0.10


@dataclass(frozen=True)
class Point:
    """Pixel position, x = column, y = row."""

    x: int
    y: int


@dataclass(frozen=True)
class Box:
    """Axis-aligned box with inclusive integer pixel coordinates."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self) -> None:
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise DegenerateBoxError(
                f"box corners out of order: ({self.x_min},{self.y_min})..({self.x_max},{self.y_max})"
            )

    @property
    def width(self) -> int:
        return self.x_max - self.x_min + 1

    @property
    def height(self) -> int:
        return self.y_max - self.y_min + 1

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    def contains(self, point: Point) -> bool:
        return self.x_min <= point.x <= self.x_max and self.y_min <= point.y <= self.y_max

    def as_list(self) -> list[int]:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class PerturbationConfig:
    """Knobs for the box perturbation pipeline; zeros make it the identity."""

    margin_px: int = DEFAULT_MARGIN_PX
    max_shift_px: int = DEFAULT_MAX_SHIFT_PX
    max_scale_frac: float = DEFAULT_MAX_SCALE_FRAC
    # One-sided scaling draws the factor from [1, 1+frac] instead of the
    # symmetric [1-frac, 1+frac].
    scale_one_sided: bool = False

    def __post_init__(self) -> None:
        if self.margin_px < 0 or self.max_shift_px < 0 or self.max_scale_frac < 0:
            raise ValueError("perturbation amounts must be >= 0")
        if self.max_scale_frac >= 1.0:
            raise ValueError("max_scale_frac must be < 1")


@dataclass(frozen=True)
class PerturbTrace:
    """Intermediate pipeline values, for invariant checks and debugging."""

    margin_box: Box
    shift: tuple[int, int]
    scale_factor: float
    pre_clamp_box: Box


@dataclass(frozen=True)
class PromptSet:
    """The single point + box prompt pair generated for one image."""

    image_id: str
    point: Point
    box: Box
    seed_used: int
    point_label: int = 1


def tight_bbox(mask: BinaryMask) -> Box:
    """Smallest box containing every foreground pixel."""
    rows, cols = np.nonzero(mask.data)
    if rows.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    return Box(
        x_min=int(cols.min()),
        y_min=int(rows.min()),
        x_max=int(cols.max()),
        y_max=int(rows.max()),
    )


def sample_point(mask: BinaryMask, rng: np.random.Generator) -> Point:
    """Pick one foreground pixel uniformly at random."""
    flat = np.flatnonzero(mask.data)
    if flat.size == 0:
        raise EmptyMaskError("mask has no foreground pixels")
    idx = int(rng.integers(flat.size))
    row, col = divmod(int(flat[idx]), mask.width)
    return Point(x=col, y=row)


def perturb_box_traced(
    box: Box,
    cfg: PerturbationConfig,
    rng: np.random.Generator,
    image_w: int,
    image_h: int,
) -> tuple[Box, PerturbTrace]:
    """Run the margin/shift/scale/clamp pipeline, returning the trace too.

    Draw order is fixed (shift x, shift y, scale factor) even when a step is
    disabled, so streams stay aligned across configs.
    """
    expanded = Box(
        x_min=box.x_min - cfg.margin_px,
        y_min=box.y_min - cfg.margin_px,
        x_max=box.x_max + cfg.margin_px,
        y_max=box.y_max + cfg.margin_px,
    )

    dx = int(rng.integers(-cfg.max_shift_px, cfg.max_shift_px + 1))
    dy = int(rng.integers(-cfg.max_shift_px, cfg.max_shift_px + 1))
    shifted = Box(
        x_min=expanded.x_min + dx,
        y_min=expanded.y_min + dy,
        x_max=expanded.x_max + dx,
        y_max=expanded.y_max + dy,
    )

    low = 1.0 if cfg.scale_one_sided else 1.0 - cfg.max_scale_frac
    factor = float(rng.uniform(low, 1.0 + cfg.max_scale_frac))
    scaled = _scale_about_center(shifted, factor)

    if scaled.x_max < 0 or scaled.x_min > image_w - 1 or scaled.y_max < 0 or scaled.y_min > image_h - 1:
        raise DegenerateBoxError(
            f"box {scaled.as_list()} lies outside the {image_w}x{image_h} image"
        )
    clamped = Box(
        x_min=max(0, min(scaled.x_min, image_w - 1)),
        y_min=max(0, min(scaled.y_min, image_h - 1)),
        x_max=max(0, min(scaled.x_max, image_w - 1)),
        y_max=max(0, min(scaled.y_max, image_h - 1)),
    )
    trace = PerturbTrace(
        margin_box=expanded, shift=(dx, dy), scale_factor=factor, pre_clamp_box=scaled
    )
    return clamped, trace


def perturb_box(
    box: Box,
    cfg: PerturbationConfig,
    rng: np.random.Generator,
    image_w: int,
    image_h: int,
) -> Box:
    out, _ = perturb_box_traced(box, cfg, rng, image_w, image_h)
    return out


def _scale_about_center(box: Box, factor: float) -> Box:
    """Scale width and height by one shared factor, keeping the center fixed.

    New sizes round half-away-from-zero and never drop below 1 pixel.
    """
    cx, cy = box.center
    new_w = max(1, round_half_away(box.width * factor))
    new_h = max(1, round_half_away(box.height * factor))
    x_min = round_half_away(cx - (new_w - 1) / 2.0)
    y_min = round_half_away(cy - (new_h - 1) / 2.0)
    return Box(x_min=x_min, y_min=y_min, x_max=x_min + new_w - 1, y_max=y_min + new_h - 1)


def generate_prompts(
    mask: BinaryMask,
    image_id: str,
    cfg: PerturbationConfig,
    master_seed: int,
) -> PromptSet:
    """One deterministic prompt set per image.

    Pure function of (mask, image_id, cfg, master_seed): the RNG stream is
    derived from a stable hash of the master seed and image id, then consumed
    as point draw first, box perturbation second.
    """
    if mask.is_empty:
        raise EmptyMaskError(f"{image_id}: mask has no foreground pixels")
    seed = stable_seed(master_seed, image_id)
    rng = np.random.default_rng(seed)
    point = sample_point(mask, rng)
    box = perturb_box(tight_bbox(mask), cfg, rng, mask.width, mask.height)
    return PromptSet(image_id=image_id, point=point, box=box, seed_used=seed)


def generate_prompts_for_sample(
    sample: Sample, cfg: PerturbationConfig, master_seed: int
) -> PromptSet:
    return generate_prompts(sample.load_mask(), sample.image_id, cfg, master_seed)


def generate_prompts_bulk(
    samples: Sequence[Sample],
    cfg: PerturbationConfig,
    master_seed: int,
    jobs: int = 1,
) -> list[PromptSet]:
    """Generate prompts for many samples, sorted by image_id.

    Safe to parallelize: every sample draws from its own keyed stream.
    """
    if jobs <= 1:
        prompts = [generate_prompts_for_sample(s, cfg, master_seed) for s in samples]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            prompts = list(
                pool.map(lambda s: generate_prompts_for_sample(s, cfg, master_seed), samples)
            )
    return sorted(prompts, key=lambda p: p.image_id)


def prompt_to_record(prompt: PromptSet) -> dict:
    return {
        "image_id": prompt.image_id,
        "point": [prompt.point.x, prompt.point.y],
        "point_label": prompt.point_label,
        "box": prompt.box.as_list(),
        "seed": prompt.seed_used,
    }


def prompt_from_record(record: dict) -> PromptSet:
    x, y = record["point"]
    box = record["box"]
    return PromptSet(
        image_id=record["image_id"],
        point=Point(x=int(x), y=int(y)),
        box=Box(x_min=int(box[0]), y_min=int(box[1]), x_max=int(box[2]), y_max=int(box[3])),
        seed_used=int(record["seed"]),
        point_label=int(record.get("point_label", 1)),
    )


def write_prompts_jsonl(prompts: Iterable[PromptSet], path: Path) -> Path:
    """One JSON record per line, ordered by image_id."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(prompts, key=lambda p: p.image_id)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for prompt in ordered:
            f.write(json.dumps(prompt_to_record(prompt), sort_keys=True) + "\n")
    return path


def read_prompts_jsonl(path: Path) -> list[PromptSet]:
    prompts = []
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if line:
                prompts.append(prompt_from_record(json.loads(line)))
    return prompts
