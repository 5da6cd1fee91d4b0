"""Binary masks: the core 2D foreground/background grid plus PNG round-trips."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MaskShapeError

# Masks on disk are nominally 0/255 grayscale; the midpoint threshold is robust
# to compression noise.
DEFAULT_THRESHOLD = 127

# PIL modes that decode to a single 8-bit channel.
_SINGLE_CHANNEL_MODES = {"L", "1"}


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Row-major 2D grid of {0,1} values; 1 marks foreground."""

    data: np.ndarray  # shape (height, width), dtype uint8

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim != 2:
            raise MaskShapeError(f"mask must be 2D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MaskShapeError(f"mask dimensions must be >= 1, got {arr.shape}")
        if arr.dtype != np.uint8:
            arr = arr.astype(np.uint8)
        if not np.isin(arr, (0, 1)).all():
            raise MaskShapeError("mask values must be 0 or 1")
        arr = np.ascontiguousarray(arr)
        arr.setflags(write=False)
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def foreground_count(self) -> int:
        return int(self.data.sum())

    @property
    def is_empty(self) -> bool:
        return self.foreground_count == 0

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BinaryMask):
            return NotImplemented
        return self.data.shape == other.data.shape and bool(
            np.array_equal(self.data, other.data)
        )


def binarize_mask(raw: np.ndarray, threshold: int = DEFAULT_THRESHOLD) -> BinaryMask:
    """Threshold an 8-bit grayscale image: output is 1 iff pixel > threshold."""
    arr = np.asarray(raw)
    if arr.ndim != 2:
        raise MaskShapeError(
            f"binarize_mask needs a single-channel image, got shape {arr.shape}"
        )
    return BinaryMask((arr > threshold).astype(np.uint8))


def load_mask_png(path: Path, threshold: int = DEFAULT_THRESHOLD) -> BinaryMask:
    """Read a single-channel 8-bit PNG from disk and binarize it."""
    with Image.open(path) as img:
        if img.mode not in _SINGLE_CHANNEL_MODES:
            raise MaskShapeError(
                f"{path}: expected single-channel 8-bit mask, got mode {img.mode!r}"
            )
        arr = np.asarray(img.convert("L"), dtype=np.uint8)
    return binarize_mask(arr, threshold)


def save_mask_png(mask: BinaryMask, path: Path) -> Path:
    """Write a mask as an 8-bit grayscale PNG (0 = background, 255 = foreground)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(mask.data * np.uint8(255), mode="L").save(path, format="PNG")
    return path


def image_size(path: Path) -> tuple[int, int]:
    """(width, height) of an image file without decoding pixel data."""
    with Image.open(path) as img:
        return img.size
