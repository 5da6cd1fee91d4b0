"""File/subprocess protocol for driving external promptable predictors.

Wire contract:
  * tasks file — JSON Lines, one record per image, ordered by image_id:
        {"image_id": str, "image_path": str,
         "prompt": {"point": [x, y], "point_label": 1,
                    "box": [x0, y0, x1, y1]}}          # key absent = no prompt
  * results — one directory per image under the output root:
        <out>/<image_id>/scores.json    {"scores": [s0, s1, ...]}
        <out>/<image_id>/cand_<k>.png   8-bit grayscale, 0=background 255=foreground
  * subprocess predictors are invoked as `<command> --tasks <file> --out <dir>`
    and must exit 0; stderr is captured into the run log.

Built-in predictors (oracle / degraded / constant) cover offline testing
without any model.
"""
from __future__ import annotations

import json
import shlex
import subprocess
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import PredictorError
from .masks import BinaryMask, load_mask_png, save_mask_png
from .prompts import PromptSet, prompt_from_record, prompt_to_record
from .util import read_json

DEFAULT_TIMEOUT_S = 300.0
BUILTIN_NAMES = ("oracle", "degraded", "constant")


@dataclass(frozen=True)
class TaskRecord:
    image_id: str
    image_path: Path
    prompt: PromptSet | None = None


@dataclass(frozen=True)
class PredictionCandidateSet:
    """Ordered candidate masks with scores, as returned by a predictor."""

    image_id: str
    candidates: tuple[tuple[BinaryMask, float], ...]
    degenerate: bool = False

    def __post_init__(self) -> None:
        if not self.candidates:
            raise PredictorError(f"{self.image_id}: candidate set is empty")
        shapes = {m.data.shape for m, _ in self.candidates}
        if len(shapes) != 1:
            raise PredictorError(f"{self.image_id}: candidate masks disagree on shape")
        for _, score in self.candidates:
            if not np.isfinite(score):
                raise PredictorError(f"{self.image_id}: non-finite candidate score")

    @property
    def scores(self) -> list[float]:
        return [s for _, s in self.candidates]


@dataclass(frozen=True)
class PredictorSpec:
    """Where predictions come from: a builtin, a subprocess, or a directory.

    Text forms accepted by parse():
        builtin:oracle | builtin:degraded:<radius> | builtin:constant:<0|1>
        subprocess:<shell command>
        directory:<path to precomputed results>
    """

    kind: str  # "builtin" | "subprocess" | "directory"
    source: str
    timeout: float = DEFAULT_TIMEOUT_S

    @classmethod
    def parse(cls, text: str, timeout: float = DEFAULT_TIMEOUT_S) -> "PredictorSpec":
        kind, _, source = text.partition(":")
        if kind not in ("builtin", "subprocess", "directory") or not source:
            raise ValueError(
                f"bad predictor spec {text!r}; expected kind:source with kind in "
                "builtin|subprocess|directory"
            )
        if kind == "builtin":
            _parse_builtin(source)  # validate eagerly
        return cls(kind=kind, source=source, timeout=timeout)


@dataclass(frozen=True)
class TaskFailure:
    image_id: str
    problem: str

    def __str__(self) -> str:
        return f"{self.image_id}: {self.problem}"


@dataclass
class CollectedRun:
    candidates: dict[str, PredictionCandidateSet] = field(default_factory=dict)
    failures: list[TaskFailure] = field(default_factory=list)
    predictor_log: str = ""

    @property
    def ok(self) -> bool:
        return not self.failures


def write_task_manifest(tasks: Sequence[TaskRecord], out: Path) -> Path:
    """Serialize tasks as JSONL ordered by image_id; no-prompt rows omit the key."""
    if not tasks:
        raise ValueError("task list is empty")
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(tasks, key=lambda t: t.image_id)
    with out.open("w", encoding="utf-8", newline="\n") as f:
        for task in ordered:
            record: dict = {"image_id": task.image_id, "image_path": str(task.image_path)}
            if task.prompt is not None:
                p = prompt_to_record(task.prompt)
                record["prompt"] = {
                    "point": p["point"],
                    "point_label": p["point_label"],
                    "box": p["box"],
                }
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return out


def read_task_manifest(path: Path) -> list[TaskRecord]:
    tasks = []
    with Path(path).open(encoding="utf-8") as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            record = json.loads(line)
            prompt = None
            if "prompt" in record:
                prompt = prompt_from_record(
                    {**record["prompt"], "image_id": record["image_id"], "seed": 0}
                )
            tasks.append(
                TaskRecord(
                    image_id=record["image_id"],
                    image_path=Path(record["image_path"]),
                    prompt=prompt,
                )
            )
    return tasks


def select_best_mask(candidate_set: PredictionCandidateSet) -> BinaryMask:
    """Candidate with the maximal score; ties go to the lowest index."""
    best_idx = 0
    best_score = candidate_set.candidates[0][1]
    for idx, (_, score) in enumerate(candidate_set.candidates):
        if score > best_score:
            best_idx = idx
            best_score = score
    return candidate_set.candidates[best_idx][0]


def dilate4(mask: BinaryMask, iterations: int) -> BinaryMask:
    """Morphological dilation with the 4-connected cross, `iterations` times."""
    out = mask.data.astype(bool)
    for _ in range(iterations):
        padded = np.pad(out, 1)
        out = (
            padded[1:-1, 1:-1]
            | padded[:-2, 1:-1]
            | padded[2:, 1:-1]
            | padded[1:-1, :-2]
            | padded[1:-1, 2:]
        )
    return BinaryMask(out.astype(np.uint8))


def erode4(mask: BinaryMask, iterations: int) -> BinaryMask:
    """Morphological erosion with the 4-connected cross; outside the image
    counts as background, so border foreground erodes away."""
    out = mask.data.astype(bool)
    for _ in range(iterations):
        padded = np.pad(out, 1, constant_values=False)
        out = (
            padded[1:-1, 1:-1]
            & padded[:-2, 1:-1]
            & padded[2:, 1:-1]
            & padded[1:-1, :-2]
            & padded[1:-1, 2:]
        )
    return BinaryMask(out.astype(np.uint8))


def _parse_builtin(source: str) -> tuple[str, int]:
    parts = source.split(":")
    name = parts[0]
    if name == "oracle":
        if len(parts) != 1:
            raise ValueError(f"oracle takes no argument, got {source!r}")
        return name, 0
    if name == "degraded":
        if len(parts) != 2:
            raise ValueError(f"degraded needs a radius, e.g. degraded:2, got {source!r}")
        radius = int(parts[1])
        if radius < 0:
            raise ValueError("degraded radius must be >= 0")
        return name, radius
    if name == "constant":
        if len(parts) != 2 or parts[1] not in ("0", "1"):
            raise ValueError(f"constant needs a value 0 or 1, got {source!r}")
        return name, int(parts[1])
    raise ValueError(f"unknown builtin predictor {name!r}; known: {BUILTIN_NAMES}")


def builtin_predictor(source: str, image_id: str, gt_mask: BinaryMask) -> PredictionCandidateSet:
    """Test-double predictors driven by the ground-truth mask.

    oracle        -> the GT mask, score 1.0
    degraded:<r>  -> GT dilated by r (score 0.6) plus GT eroded by r (score 0.4);
                     a candidate that erodes to empty is dropped, and if none
                     survive the set falls back to constant 0, flagged degenerate
    constant:<v>  -> uniform mask of value v, score 0.5
    """
    name, arg = _parse_builtin(source)
    if name == "oracle":
        return PredictionCandidateSet(image_id=image_id, candidates=((gt_mask, 1.0),))
    if name == "constant":
        uniform = BinaryMask(np.full_like(gt_mask.data, arg))
        return PredictionCandidateSet(image_id=image_id, candidates=((uniform, 0.5),))

    candidates: list[tuple[BinaryMask, float]] = []
    dilated = dilate4(gt_mask, arg)
    if not dilated.is_empty:
        candidates.append((dilated, 0.6))
    eroded = erode4(gt_mask, arg)
    if not eroded.is_empty:
        candidates.append((eroded, 0.4))
    degenerate = False
    if not candidates:
        candidates = [(BinaryMask(np.zeros_like(gt_mask.data)), 0.5)]
        degenerate = True
    return PredictionCandidateSet(
        image_id=image_id, candidates=tuple(candidates), degenerate=degenerate
    )


def write_candidate_set(candidate_set: PredictionCandidateSet, out_dir: Path) -> Path:
    """Write one result directory in the wire layout."""
    target = Path(out_dir) / candidate_set.image_id
    target.mkdir(parents=True, exist_ok=True)
    scores = []
    for k, (mask, score) in enumerate(candidate_set.candidates):
        save_mask_png(mask, target / f"cand_{k}.png")
        scores.append(score)
    (target / "scores.json").write_text(
        json.dumps({"scores": scores}) + "\n", encoding="utf-8"
    )
    return target


def read_candidate_set(image_id: str, out_dir: Path) -> PredictionCandidateSet:
    """Parse one result directory; raises PredictorError on layout violations."""
    target = Path(out_dir) / image_id
    scores_path = target / "scores.json"
    if not scores_path.is_file():
        raise PredictorError(f"{image_id}: missing {scores_path}")
    try:
        scores = read_json(scores_path)["scores"]
    except (json.JSONDecodeError, KeyError) as exc:
        raise PredictorError(f"{image_id}: bad scores.json: {exc}") from exc
    if not isinstance(scores, list) or not scores:
        raise PredictorError(f"{image_id}: scores.json must hold a non-empty list")
    candidates = []
    for k, score in enumerate(scores):
        png = target / f"cand_{k}.png"
        if not png.is_file():
            raise PredictorError(f"{image_id}: missing candidate file {png.name}")
        candidates.append((load_mask_png(png), float(score)))
    return PredictionCandidateSet(image_id=image_id, candidates=tuple(candidates))


def validate_result_layout(out_dir: Path, image_ids: Iterable[str]) -> list[TaskFailure]:
    """Check that every expected result directory parses cleanly."""
    failures = []
    for image_id in sorted(image_ids):
        try:
            read_candidate_set(image_id, out_dir)
        except Exception as exc:
            failures.append(TaskFailure(image_id=image_id, problem=str(exc)))
    return failures


def default_mask_resolver(task: TaskRecord) -> Path:
    """Map an image path to its mask via the dataset layout convention."""
    root = task.image_path.parent.parent
    return root / "masks" / f"{task.image_id}_segmentation.png"


def collect_predictions(
    spec: PredictorSpec,
    tasks_path: Path,
    out_dir: Path,
    mask_resolver: Callable[[TaskRecord], Path] = default_mask_resolver,
) -> CollectedRun:
    """Run the predictor over the tasks file and read back every result.

    Builtins synthesize results into out_dir first, so all three kinds are
    read through the same wire-format parser. Missing or malformed outputs
    become per-task failures; a crashed subprocess aborts the whole run.
    """
    tasks = read_task_manifest(tasks_path)
    if not tasks:
        raise PredictorError(f"no tasks found in {tasks_path}")
    out_dir = Path(out_dir)
    run = CollectedRun()

    if spec.kind == "builtin":
        out_dir.mkdir(parents=True, exist_ok=True)
        for task in tasks:
            try:
                gt = load_mask_png(mask_resolver(task))
                write_candidate_set(builtin_predictor(spec.source, task.image_id, gt), out_dir)
            except Exception as exc:
                run.failures.append(TaskFailure(task.image_id, f"builtin failed: {exc}"))
        result_dir = out_dir
    elif spec.kind == "subprocess":
        out_dir.mkdir(parents=True, exist_ok=True)
        command = shlex.split(spec.source) + ["--tasks", str(tasks_path), "--out", str(out_dir)]
        try:
            proc = subprocess.run(
                command, capture_output=True, text=True, timeout=spec.timeout
            )
        except subprocess.TimeoutExpired as exc:
            raise PredictorError(
                f"predictor timed out after {spec.timeout}s: {' '.join(command)}"
            ) from exc
        except OSError as exc:
            raise PredictorError(f"could not launch predictor: {exc}") from exc
        run.predictor_log = proc.stderr
        if proc.returncode != 0:
            raise PredictorError(
                f"predictor exited {proc.returncode}: {' '.join(command)}\n"
                f"stderr:\n{proc.stderr.strip()}"
            )
        result_dir = out_dir
    elif spec.kind == "directory":
        result_dir = Path(spec.source)
    else:
        raise PredictorError(f"unknown predictor kind {spec.kind!r}")

    failed_ids = {f.image_id for f in run.failures}
    for task in tasks:
        if task.image_id in failed_ids:
            continue
        try:
            run.candidates[task.image_id] = read_candidate_set(task.image_id, result_dir)
        except Exception as exc:
            run.failures.append(TaskFailure(task.image_id, str(exc)))
    return run
