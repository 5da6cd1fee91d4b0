"""Reference soft Dice + cross-entropy objective with analytic gradients.

Definitions over a probability map p and binary target g with N pixels:

    dice_loss(p, g) = 1 - (2*sum(p*g) + s) / (sum(p) + sum(g) + s)
    ce_loss(p, g)   = -(1/N) * sum(g*ln(p) + (1-g)*ln(1-p))
    combined        = dice_loss + ce_loss          (no weights)

The smoothing constant s (default 1.0) keeps the empty-target case finite.
Cross-entropy is a per-pixel mean so the two terms stay on commensurate
scales. Probabilities are clamped to [EPSILON, 1-EPSILON]; pixels that were
clamped report zero gradient (the clamp has zero slope past its boundary).
All reductions are plain float64 sums with a fixed shape, so results are
bit-reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MaskShapeError
from .masks import BinaryMask

EPSILON = 1e-7
DEFAULT_SMOOTH = 1.0


@dataclass(frozen=True, eq=False)
class ProbMask:
    """Per-pixel foreground probabilities, clamped away from 0 and 1."""

    data: np.ndarray  # shape (height, width), float64 in [EPSILON, 1-EPSILON]
    clamped: np.ndarray  # bool, True where the raw input was outside the clamp range

    @classmethod
    def from_array(cls, raw: np.ndarray) -> "ProbMask":
        arr = np.asarray(raw, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MaskShapeError(f"probability map must be 2D, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise ValueError("probability map contains non-finite values")
        clamped_where = (arr < EPSILON) | (arr > 1.0 - EPSILON)
        data = np.clip(arr, EPSILON, 1.0 - EPSILON)
        data.setflags(write=False)
        clamped_where.setflags(write=False)
        return cls(data=data, clamped=clamped_where)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])


@dataclass(frozen=True, eq=False)
class LossReport:
    dice_loss: float
    ce_loss: float
    combined: float
    gradient: np.ndarray  # d(combined)/dp per pixel, same shape as the input


def _check_shapes(p: ProbMask, g: BinaryMask) -> None:
    if p.data.shape != g.data.shape:
        raise MaskShapeError(
            f"dimension mismatch: probabilities {p.data.shape} vs target {g.data.shape}"
        )


def soft_dice_loss(p: ProbMask, g: BinaryMask, smooth: float = DEFAULT_SMOOTH) -> float:
    _check_shapes(p, g)
    gf = g.data.astype(np.float64)
    intersection = float(np.sum(p.data * gf))
    sums = float(np.sum(p.data) + np.sum(gf))
    return 1.0 - (2.0 * intersection + smooth) / (sums + smooth)


def cross_entropy_loss(p: ProbMask, g: BinaryMask) -> float:
    _check_shapes(p, g)
    gf = g.data.astype(np.float64)
    per_pixel = gf * np.log(p.data) + (1.0 - gf) * np.log(1.0 - p.data)
    return float(-np.mean(per_pixel))


def combined_loss_with_grad(
    p: ProbMask, g: BinaryMask, smooth: float = DEFAULT_SMOOTH
) -> LossReport:
    """Combined loss plus its analytic per-pixel gradient.

    Dice term, by the quotient rule with A = sum(p*g) and B = sum(p) + sum(g):
        d/dp_i [1 - (2A+s)/(B+s)] = -(2*g_i*(B+s) - (2A+s)) / (B+s)^2
    Cross-entropy term:
        d/dp_i = (1/N) * (-g_i/p_i + (1-g_i)/(1-p_i))
    """
    _check_shapes(p, g)
    dice_val = soft_dice_loss(p, g, smooth)
    ce_val = cross_entropy_loss(p, g)

    gf = g.data.astype(np.float64)
    intersection = float(np.sum(p.data * gf))
    sums = float(np.sum(p.data) + np.sum(gf))
    dice_grad = -(2.0 * gf * (sums + smooth) - (2.0 * intersection + smooth)) / (
        (sums + smooth) ** 2
    )
    n = p.data.size
    ce_grad = (-gf / p.data + (1.0 - gf) / (1.0 - p.data)) / n

    gradient = dice_grad + ce_grad
    gradient[p.clamped] = 0.0
    gradient.setflags(write=False)
    return LossReport(
        dice_loss=dice_val,
        ce_loss=ce_val,
        combined=dice_val + ce_val,
        gradient=gradient,
    )


@dataclass(frozen=True)
class GradientCheckResult:
    instances: int
    max_rel_error: float
    worst_instance: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance


def finite_difference_gradient(
    raw_p: np.ndarray, g: BinaryMask, smooth: float = DEFAULT_SMOOTH, h: float = 1e-6
) -> np.ndarray:
    """Central-difference gradient of the combined loss, one pixel at a time."""
    flat = np.asarray(raw_p, dtype=np.float64).ravel().copy()
    grad = np.zeros_like(flat)
    shape = np.asarray(raw_p).shape
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = _combined(flat.reshape(shape), g, smooth)
        flat[i] = orig - h
        down = _combined(flat.reshape(shape), g, smooth)
        flat[i] = orig
        grad[i] = (up - down) / (2.0 * h)
    return grad.reshape(shape)


def _combined(raw_p: np.ndarray, g: BinaryMask, smooth: float) -> float:
    p = ProbMask.from_array(raw_p)
    return soft_dice_loss(p, g, smooth) + cross_entropy_loss(p, g)


def run_gradient_check(
    instances: int = 100,
    max_side: int = 12,
    h: float = 1e-6,
    tolerance: float = 1e-4,
    seed: int = 20240,
) -> GradientCheckResult:
    """Compare analytic gradients against central differences on random cases.

    Probabilities are drawn from [0.05, 0.95]; at the clamp boundaries the
    finite-difference quotient of the clamped objective is itself ~0, which is
    exactly what the analytic convention reports, so interior draws keep the
    comparison sharp.
    """
    rng = np.random.default_rng(seed)
    max_rel = 0.0
    worst = -1
    for k in range(instances):
        height = int(rng.integers(1, max_side + 1))
        width = int(rng.integers(1, max_side + 1))
        raw = rng.uniform(0.05, 0.95, size=(height, width))
        target = BinaryMask(rng.integers(0, 2, size=(height, width)).astype(np.uint8))

        report = combined_loss_with_grad(ProbMask.from_array(raw), target)
        fd = finite_difference_gradient(raw, target, h=h)
        denom = np.maximum(np.abs(fd), 1e-8)
        rel = float(np.max(np.abs(report.gradient - fd) / denom))
        if rel > max_rel:
            max_rel = rel
            worst = k
    return GradientCheckResult(
        instances=instances, max_rel_error=max_rel, worst_instance=worst, tolerance=tolerance
    )


def export_loss_vectors(seed: int = 7, cases: int = 8) -> dict:
    """Fixed loss/gradient test vectors for checking other implementations.

    Includes closed-form anchor cases plus seeded random instances; every
    value is produced by this module's own evaluation path.
    """
    rng = np.random.default_rng(seed)
    vectors = []

    anchor_p = np.full((4, 4), 0.5)
    anchor_g = np.zeros((4, 4), dtype=np.uint8)
    anchor_g[:2, :] = 1
    vectors.append(_vector_entry("uniform_half", anchor_p, anchor_g, DEFAULT_SMOOTH))

    for k in range(cases):
        height = int(rng.integers(2, 7))
        width = int(rng.integers(2, 7))
        raw = rng.uniform(0.02, 0.98, size=(height, width))
        target = rng.integers(0, 2, size=(height, width)).astype(np.uint8)
        vectors.append(_vector_entry(f"random_{k}", raw, target, DEFAULT_SMOOTH))
    return {"epsilon": EPSILON, "smooth": DEFAULT_SMOOTH, "cases": vectors}


def _vector_entry(name: str, raw_p: np.ndarray, g_arr: np.ndarray, smooth: float) -> dict:
    g = BinaryMask(g_arr)
    report = combined_loss_with_grad(ProbMask.from_array(raw_p), g, smooth)
    return {
        "name": name,
        "height": int(raw_p.shape[0]),
        "width": int(raw_p.shape[1]),
        "p": [float(v) for v in np.asarray(raw_p, dtype=np.float64).ravel()],
        "g": [int(v) for v in g_arr.ravel()],
        "dice_loss": report.dice_loss,
        "ce_loss": report.ce_loss,
        "combined": report.combined,
        "gradient": [float(v) for v in report.gradient.ravel()],
    }
