"""Dataset ingest: manifest loading, validation, and the train/val split.

On-disk layout convention:
    <root>/images/<image_id>.(jpg|png)
    <root>/masks/<image_id>_segmentation.png
    metadata CSV with at least `image_id` and `dx` columns (extras ignored).
"""
from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ManifestError
from .masks import BinaryMask, image_size, load_mask_png
from .util import read_json, round_half_away, write_json_stable

_IMAGE_EXTENSIONS = (".jpg", ".png")


class LesionClass(Enum):
    MEL = "MEL"
    NV = "NV"
    BCC = "BCC"
    AKIEC = "AKIEC"
    BKL = "BKL"
    DF = "DF"
    VASC = "VASC"

    @classmethod
    def from_token(cls, token: str) -> "LesionClass":
        """Parse a metadata `dx` token, case-insensitively."""
        try:
            return cls(token.strip().upper())
        except ValueError:
            raise ValueError(f"unknown lesion class token: {token!r}") from None


# Fixed display order for per-class report files.
CANONICAL_CLASS_ORDER = (
    LesionClass.MEL,
    LesionClass.NV,
    LesionClass.BCC,
    LesionClass.AKIEC,
    LesionClass.BKL,
    LesionClass.DF,
    LesionClass.VASC,
)

# Alternate order available for the comparison view.
TABLE_CLASS_ORDER = (
    LesionClass.MEL,
    LesionClass.VASC,
    LesionClass.NV,
    LesionClass.BKL,
    LesionClass.BCC,
    LesionClass.AKIEC,
    LesionClass.DF,
)


@dataclass(frozen=True)
class Sample:
    """One image/mask pair. Mask pixels are loaded lazily via load_mask()."""

    image_id: str
    image_path: Path
    mask_path: Path
    lesion_class: LesionClass
    width: int
    height: int
    empty_mask: bool = False

    def load_mask(self) -> BinaryMask:
        mask = load_mask_png(self.mask_path)
        if (mask.width, mask.height) != (self.width, self.height):
            raise ManifestError(
                f"{self.image_id}: mask file changed on disk, expected "
                f"{self.width}x{self.height}, got {mask.width}x{mask.height}"
            )
        return mask


@dataclass(frozen=True)
class ValidationIssue:
    image_id: str
    problem: str

    def __str__(self) -> str:
        return f"{self.image_id}: {self.problem}"


@dataclass(frozen=True)
class DatasetManifest:
    """Ordered, duplicate-free collection of samples under one dataset root."""

    entries: tuple[Sample, ...]
    source_root: Path

    def __post_init__(self) -> None:
        ids = [s.image_id for s in self.entries]
        if ids != sorted(ids):
            raise ManifestError("manifest entries must be sorted by image_id")
        if len(set(ids)) != len(ids):
            raise ManifestError("manifest entries must have unique image_ids")

    def __len__(self) -> int:
        return len(self.entries)

    def image_ids(self) -> list[str]:
        return [s.image_id for s in self.entries]

    def by_id(self, image_id: str) -> Sample:
        for s in self.entries:
            if s.image_id == image_id:
                return s
        raise KeyError(image_id)

    def subset(self, ids: list[str]) -> "DatasetManifest":
        wanted = set(ids)
        return DatasetManifest(
            entries=tuple(s for s in self.entries if s.image_id in wanted),
            source_root=self.source_root,
        )

    def to_payload(self) -> dict:
        root = self.source_root
        return {
            "source_root": str(root),
            "tool_version": __version__,
            "entries": [
                {
                    "image_id": s.image_id,
                    "image_path": _relativize(s.image_path, root),
                    "mask_path": _relativize(s.mask_path, root),
                    "lesion_class": s.lesion_class.value,
                    "width": s.width,
                    "height": s.height,
                    "empty_mask": s.empty_mask,
                }
                for s in self.entries
            ],
        }

    def save(self, path: Path) -> Path:
        return write_json_stable(self.to_payload(), path)

    @classmethod
    def load(cls, path: Path) -> "DatasetManifest":
        payload = read_json(path)
        root = Path(payload["source_root"])
        entries = tuple(
            Sample(
                image_id=e["image_id"],
                image_path=_resolve(e["image_path"], root),
                mask_path=_resolve(e["mask_path"], root),
                lesion_class=LesionClass(e["lesion_class"]),
                width=int(e["width"]),
                height=int(e["height"]),
                empty_mask=bool(e["empty_mask"]),
            )
            for e in payload["entries"]
        )
        return cls(entries=entries, source_root=root)


def _relativize(path: Path, root: Path) -> str:
    try:
        return path.relative_to(root).as_posix()
    except ValueError:
        return str(path)


def _resolve(stored: str, root: Path) -> Path:
    p = Path(stored)
    return p if p.is_absolute() else root / p


def load_manifest(
    root: Path, metadata_csv: Path
) -> tuple[DatasetManifest, list[ValidationIssue]]:
    """Build a manifest from the metadata CSV, validating files as we go.

    Rows with problems (missing files, unknown class token, duplicate id,
    image/mask size mismatch) are dropped from the manifest and reported as
    issues. Zero-foreground masks are kept but flagged on the sample.
    """
    root = Path(root)
    metadata_csv = Path(metadata_csv)
    if not metadata_csv.is_file():
        raise ManifestError(f"metadata CSV not found: {metadata_csv}")

    with metadata_csv.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(f)
        header = reader.fieldnames or []
        for required in ("image_id", "dx"):
            if required not in header:
                raise ManifestError(
                    f"metadata CSV must have an {required!r} column, got {header}"
                )
        rows = list(reader)

    entries: list[Sample] = []
    issues: list[ValidationIssue] = []
    seen: set[str] = set()
    for row in rows:
        image_id = (row.get("image_id") or "").strip()
        if not image_id:
            issues.append(ValidationIssue("<blank>", "row has empty image_id"))
            continue
        if image_id in seen:
            issues.append(ValidationIssue(image_id, "duplicate image_id"))
            continue
        seen.add(image_id)

        try:
            lesion_class = LesionClass.from_token(row.get("dx") or "")
        except ValueError as exc:
            issues.append(ValidationIssue(image_id, str(exc)))
            continue

        image_path = _find_image(root, image_id)
        if image_path is None:
            issues.append(ValidationIssue(image_id, "image file not found under images/"))
            continue
        mask_path = root / "masks" / f"{image_id}_segmentation.png"
        if not mask_path.is_file():
            issues.append(ValidationIssue(image_id, f"mask file not found: {mask_path.name}"))
            continue

        width, height = image_size(image_path)
        try:
            mask = load_mask_png(mask_path)
        except Exception as exc:
            issues.append(ValidationIssue(image_id, f"unreadable mask: {exc}"))
            continue
        if (mask.width, mask.height) != (width, height):
            issues.append(
                ValidationIssue(
                    image_id,
                    f"mask is {mask.width}x{mask.height} but image is {width}x{height}",
                )
            )
            continue

        entries.append(
            Sample(
                image_id=image_id,
                image_path=image_path,
                mask_path=mask_path,
                lesion_class=lesion_class,
                width=width,
                height=height,
                empty_mask=mask.is_empty,
            )
        )

    entries.sort(key=lambda s: s.image_id)
    return DatasetManifest(entries=tuple(entries), source_root=root), issues


def _find_image(root: Path, image_id: str) -> Path | None:
    for ext in _IMAGE_EXTENSIONS:
        candidate = root / "images" / f"{image_id}{ext}"
        if candidate.is_file():
            return candidate
    return None


@dataclass(frozen=True)
class SplitSpec:
    """Deterministic partition of manifest ids into train and val."""

    train_fraction: float
    seed: int
    train_ids: tuple[str, ...]
    val_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        overlap = set(self.train_ids) & set(self.val_ids)
        if overlap:
            raise ManifestError(f"split sides overlap: {sorted(overlap)[:5]}")

    def side(self, name: str) -> tuple[str, ...]:
        if name == "train":
            return self.train_ids
        if name == "val":
            return self.val_ids
        raise ValueError(f"unknown split side: {name!r}")

    def to_payload(self) -> dict:
        return {
            "train_fraction": self.train_fraction,
            "seed": self.seed,
            "tool_version": __version__,
            "train_ids": list(self.train_ids),
            "val_ids": list(self.val_ids),
        }

    def save(self, path: Path) -> Path:
        return write_json_stable(self.to_payload(), path)

    @classmethod
    def load(cls, path: Path) -> "SplitSpec":
        payload = read_json(path)
        return cls(
            train_fraction=float(payload["train_fraction"]),
            seed=int(payload["seed"]),
            train_ids=tuple(payload["train_ids"]),
            val_ids=tuple(payload["val_ids"]),
        )


def split_dataset(
    manifest: DatasetManifest,
    train_fraction: float,
    seed: int,
    stratify_by_class: bool = False,
) -> SplitSpec:
    """Shuffle ids with a seeded generator and take the first round(fraction*N) as train.

    Unstratified uniform shuffling by default; per-class stratification is opt-in.
    Ties in round() go away from zero. Stored id lists are sorted for stable diffs.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ValueError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if len(manifest) == 0:
        raise ManifestError("cannot split an empty manifest")

    rng = np.random.default_rng(seed)
    train: list[str] = []
    val: list[str] = []
    if stratify_by_class:
        for cls in CANONICAL_CLASS_ORDER:
            ids = [s.image_id for s in manifest.entries if s.lesion_class is cls]
            if not ids:
                continue
            t, v = _shuffle_take(ids, train_fraction, rng)
            train.extend(t)
            val.extend(v)
    else:
        train, val = _shuffle_take(manifest.image_ids(), train_fraction, rng)

    if not val:
        warnings.warn(
            f"validation side is empty (N={len(manifest)}, fraction={train_fraction})",
            stacklevel=2,
        )
    if not train:
        warnings.warn(
            f"train side is empty (N={len(manifest)}, fraction={train_fraction})",
            stacklevel=2,
        )
    return SplitSpec(
        train_fraction=train_fraction,
        seed=seed,
        train_ids=tuple(sorted(train)),
        val_ids=tuple(sorted(val)),
    )


def _shuffle_take(
    ids: list[str], fraction: float, rng: np.random.Generator
) -> tuple[list[str], list[str]]:
    shuffled = list(ids)
    rng.shuffle(shuffled)
    n_train = round_half_away(fraction * len(shuffled))
    return shuffled[:n_train], shuffled[n_train:]
