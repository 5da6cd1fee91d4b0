"""Small shared helpers: stable seeding, rounding, stable JSON output."""
from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path
from typing import Any

import numpy as np


def round_half_away(x: float) -> int:
    """Round to the nearest integer, ties away from zero."""
    if x >= 0:
        return math.floor(x + 0.5)
    return math.ceil(x - 0.5)


def stable_seed(master_seed: int, key: str) -> int:
    """Derive a per-key seed from a master seed, stable across runs and platforms."""
    digest = hashlib.sha256(f"{master_seed}\x1f{key}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stable_stream(master_seed: int, key: str) -> np.random.Generator:
    """Independent RNG stream keyed by (master_seed, key)."""
    return np.random.default_rng(stable_seed(master_seed, key))


def write_json_stable(payload: Any, path: Path) -> Path:
    """Write JSON with sorted keys and a trailing newline so reruns are byte-identical."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = json.dumps(payload, sort_keys=True, indent=2) + "\n"
    path.write_text(text, encoding="utf-8")
    return path


def read_json(path: Path) -> Any:
    return json.loads(Path(path).read_text(encoding="utf-8"))
