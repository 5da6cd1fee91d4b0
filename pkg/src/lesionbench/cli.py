"""Command-line surface: one executable, composable subcommands.

Conventions shared by every subcommand:
  * machine log lines go to stderr as JSON objects, human summaries to stdout
  * exit 0 on success, 1 on validation/run failure, 2 on usage errors
  * a TOML config file can pre-fill any option; explicit flags win
  * run directories receive a resolved run_config.toml that reproduces the run
"""
from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import click

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from . import __version__
from .dataset import DatasetManifest, SplitSpec, load_manifest, split_dataset
from .errors import LesionBenchError
from .losses import (
    ProbMask,
    cross_entropy_loss,
    export_loss_vectors,
    run_gradient_check,
    soft_dice_loss,
)
from .masks import BinaryMask, load_mask_png
from .metrics import evaluate_pair, read_records_csv, write_records_csv
from .predictor import (
    PredictorSpec,
    TaskRecord,
    builtin_predictor,
    collect_predictions,
    default_mask_resolver,
    read_task_manifest,
    select_best_mask,
    validate_result_layout,
    write_candidate_set,
    write_task_manifest,
)
from .prompts import (
    PerturbationConfig,
    generate_prompts_bulk,
    read_prompts_jsonl,
    write_prompts_jsonl,
)
from .reporting import compare as compare_summaries
from .reporting import emit_reports, histogram, load_summary, summarize
from .util import write_json_stable

import numpy as np


def _log(**fields) -> None:
    print(json.dumps(fields, sort_keys=True), file=sys.stderr)


def _fail(message: str) -> None:
    _log(event="error", message=message)
    click.echo(f"error: {message}")
    sys.exit(1)


def _apply_config(ctx: click.Context, _param, value):
    """Install a TOML file's values as defaults; explicit flags still win."""
    if value is None:
        return None
    with open(value, "rb") as f:
        loaded = tomllib.load(f)
    section = loaded.get(ctx.command.name or "", loaded)
    defaults = dict(ctx.default_map or {})
    defaults.update(section)
    ctx.default_map = defaults
    return value


def _config_option():
    return click.option(
        "--config",
        type=click.Path(exists=True, dir_okay=False),
        callback=_apply_config,
        expose_value=False,
        is_eager=True,
        help="TOML file with option defaults for this subcommand (flags win). "
             "Keys match option names with underscores.",
    )


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    return json.dumps(str(value))


def _write_run_config(section: str, params: dict, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"# resolved configuration written by lesionbench {__version__}", f"[{section}]"]
    for key, value in sorted(params.items()):
        if value is None:
            continue
        lines.append(f"{key} = {_toml_scalar(value)}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@click.group()
@click.version_option(__version__, prog_name="lesionbench")
def main() -> None:
    """Prompt-driven segmentation evaluation harness."""


@main.command()
@_config_option()
@click.option("--root", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--metadata", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def ingest(root, metadata, out) -> None:
    """Build and validate a dataset manifest from the on-disk layout."""
    try:
        manifest, issues = load_manifest(Path(root), Path(metadata))
    except LesionBenchError as exc:
        _fail(str(exc))
    manifest.save(Path(out))
    _log(event="ingest", entries=len(manifest), issues=len(issues), out=str(out))
    for issue in issues:
        _log(event="validation_issue", image_id=issue.image_id, problem=issue.problem)
        click.echo(f"invalid: {issue}")
    flagged = [s.image_id for s in manifest.entries if s.empty_mask]
    for image_id in flagged:
        _log(event="empty_mask_flagged", image_id=image_id)
    click.echo(f"manifest: {len(manifest)} entries -> {out}")
    if issues:
        sys.exit(1)


@main.command()
@_config_option()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--fraction", default=0.8, show_default=True, type=float)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--stratify", is_flag=True, help="Stratify the shuffle by lesion class.")
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def split(manifest, fraction, seed, stratify, out) -> None:
    """Deterministically split a manifest into train and val id lists."""
    if not 0.0 < fraction < 1.0:
        raise click.BadParameter("--fraction must be strictly between 0 and 1")
    ds = DatasetManifest.load(Path(manifest))
    try:
        spec = split_dataset(ds, fraction, seed, stratify_by_class=stratify)
    except (LesionBenchError, ValueError) as exc:
        _fail(str(exc))
    spec.save(Path(out))
    _log(event="split", train=len(spec.train_ids), val=len(spec.val_ids), seed=seed)
    click.echo(f"split: {len(spec.train_ids)} train / {len(spec.val_ids)} val -> {out}")


@main.command(name="gen-prompts")
@_config_option()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--margin", default=20, show_default=True, type=int)
@click.option("--max-shift", default=30, show_default=True, type=int)
@click.option("--max-scale", default=0.10, show_default=True, type=float)
@click.option("--scale-one-sided", is_flag=True,
              help="Draw the scale factor from [1, 1+max-scale] instead of symmetric.")
@click.option("--no-perturb", is_flag=True,
              help="Emit margin-expanded tight boxes with no shift or scale.")
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def gen_prompts(manifest, seed, margin, max_shift, max_scale, scale_one_sided,
                no_perturb, jobs, out) -> None:
    """Generate one point+box prompt per image from the ground-truth masks."""
    ds = DatasetManifest.load(Path(manifest))
    if no_perturb:
        cfg = PerturbationConfig(margin_px=margin, max_shift_px=0, max_scale_frac=0.0)
    else:
        cfg = PerturbationConfig(
            margin_px=margin,
            max_shift_px=max_shift,
            max_scale_frac=max_scale,
            scale_one_sided=scale_one_sided,
        )
    usable = [s for s in ds.entries if not s.empty_mask]
    skipped = [s.image_id for s in ds.entries if s.empty_mask]
    for image_id in skipped:
        _log(event="skip_empty_mask", image_id=image_id)
    try:
        prompts = generate_prompts_bulk(usable, cfg, seed, jobs=jobs)
    except LesionBenchError as exc:
        _fail(str(exc))
    write_prompts_jsonl(prompts, Path(out))
    _log(event="gen_prompts", prompts=len(prompts), skipped=len(skipped), seed=seed)
    suffix = f" ({len(skipped)} empty-mask skipped)" if skipped else ""
    click.echo(f"prompts: {len(prompts)} -> {out}{suffix}")


@main.command(name="eval")
@_config_option()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--split-file", type=click.Path(exists=True, dir_okay=False),
              help="SplitSpec JSON; evaluate only one side of it.")
@click.option("--split", default="val", show_default=True,
              type=click.Choice(["train", "val"]))
@click.option("--prompts", type=click.Path(exists=True, dir_okay=False))
@click.option("--no-prompt", is_flag=True, help="Run the promptless arm.")
@click.option("--predictor", required=True,
              help="builtin:oracle | builtin:degraded:<r> | builtin:constant:<v> | "
                   "subprocess:<command> | directory:<path>")
@click.option("--timeout", default=300.0, show_default=True, type=float)
@click.option("--jobs", default=0, show_default="logical cores", type=int)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def eval_cmd(manifest, split_file, split, prompts, no_prompt,
             predictor, timeout, jobs, out) -> None:
    """Drive a predictor over the dataset and score every prediction."""
    prompts_path = prompts
    if (prompts_path is None) and not no_prompt:
        raise click.UsageError("pass --prompts <file> or --no-prompt")
    if prompts_path is not None and no_prompt:
        raise click.UsageError("--prompts and --no-prompt are mutually exclusive")
    try:
        spec = PredictorSpec.parse(predictor, timeout=timeout)
    except ValueError as exc:
        raise click.BadParameter(str(exc))

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    ds = DatasetManifest.load(Path(manifest))
    samples = list(ds.entries)
    if split_file:
        split_spec = SplitSpec.load(Path(split_file))
        wanted = set(split_spec.side(split))
        samples = [s for s in samples if s.image_id in wanted]
    if not samples:
        _fail("no samples selected for evaluation")

    prompt_by_id = {}
    if prompts_path:
        for p in read_prompts_jsonl(Path(prompts_path)):
            prompt_by_id[p.image_id] = p
        missing = [s.image_id for s in samples if s.image_id not in prompt_by_id]
        if missing:
            _fail(f"prompts file lacks entries for: {', '.join(missing[:5])}")
        for s in samples:
            p = prompt_by_id[s.image_id]
            if not (0 <= p.point.x < s.width and 0 <= p.point.y < s.height):
                _fail(f"{s.image_id}: prompt point {p.point} outside {s.width}x{s.height}")

    tasks = [
        TaskRecord(
            image_id=s.image_id,
            image_path=s.image_path,
            prompt=prompt_by_id.get(s.image_id),
        )
        for s in samples
    ]
    tasks_path = write_task_manifest(tasks, out_dir / "tasks.jsonl")
    _log(event="tasks_written", n=len(tasks), path=str(tasks_path))

    try:
        run = collect_predictions(spec, tasks_path, out_dir / "raw")
    except LesionBenchError as exc:
        (out_dir / "run.log").write_text(str(exc) + "\n", encoding="utf-8")
        _fail(str(exc))

    n_jobs = jobs if jobs > 0 else (os.cpu_count() or 1)
    by_id = {s.image_id: s for s in samples}

    def score_one(image_id: str):
        sample = by_id[image_id]
        chosen = select_best_mask(run.candidates[image_id])
        return evaluate_pair(chosen, sample.load_mask(), image_id, sample.lesion_class)

    scored_ids = sorted(run.candidates.keys())
    if n_jobs <= 1:
        records = [score_one(i) for i in scored_ids]
    else:
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            records = list(pool.map(score_one, scored_ids))
    records.sort(key=lambda r: r.image_id)

    records_path = write_records_csv(records, out_dir / "records.csv")
    log_lines = []
    if run.predictor_log:
        log_lines.append(run.predictor_log.rstrip("\n"))
    for failure in run.failures:
        _log(event="task_failure", image_id=failure.image_id, problem=failure.problem)
        log_lines.append(f"FAILED {failure}")
    (out_dir / "run.log").write_text(
        "\n".join(log_lines) + ("\n" if log_lines else ""), encoding="utf-8"
    )
    _write_run_config(
        "eval",
        {
            "manifest": manifest,
            "split_file": split_file,
            "split": split,
            "prompts": prompts_path,
            "no_prompt": no_prompt,
            "predictor": predictor,
            "timeout": timeout,
            "jobs": jobs,
        },
        out_dir / "run_config.toml",
    )
    _log(event="eval_done", records=len(records), failures=len(run.failures))
    click.echo(f"eval: {len(records)} records -> {records_path}")
    if run.failures:
        click.echo(f"eval: {len(run.failures)} task(s) failed; see run.log")
        sys.exit(1)


@main.command()
@_config_option()
@click.option("--records", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--label", default="run", show_default=True)
@click.option("--hist-bins", default=20, show_default=True, type=int)
@click.option("--class-order", default="canonical", show_default=True,
              type=click.Choice(["canonical", "table"]))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def report(records, label, hist_bins, class_order, out) -> None:
    """Aggregate a records CSV into summary, per-class table, and histograms."""
    rows = read_records_csv(Path(records))
    if not rows:
        _fail(f"no records in {records}")
    summary = summarize(rows, label)
    hists = [histogram(rows, m, bins=hist_bins) for m in ("dice", "iou", "pixel_accuracy")]
    paths = emit_reports(summary, hists, Path(out), class_order=class_order)
    _write_run_config(
        "report",
        {"records": records, "label": label, "hist_bins": hist_bins, "class_order": class_order},
        Path(out) / "run_config.toml",
    )
    _log(event="report", n_samples=summary.n_samples, out=str(out))
    for m in ("dice", "iou", "pixel_accuracy"):
        click.echo(f"mean {m}: {summary.overall[m]:.4f}")
    click.echo(f"report files: {', '.join(sorted(p.name for p in paths.values()))}")


@main.command()
@_config_option()
@click.option("--baseline", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--new", "new_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", type=click.Path(dir_okay=False))
def compare(baseline, new_path, out) -> None:
    """Percentage improvement of one run's overall means over another's."""
    report_obj = compare_summaries(load_summary(Path(baseline)), load_summary(Path(new_path)))
    for metric, entry in report_obj.metrics.items():
        if entry.error:
            click.echo(f"{metric}: {entry.old} -> {entry.new} ({entry.error})")
        else:
            click.echo(
                f"{metric}: {entry.old:.4f} -> {entry.new:.4f} "
                f"({entry.pct_improvement:+.2f}%)"
            )
    if out:
        write_json_stable(report_obj.to_payload(), Path(out))
        _log(event="compare", out=str(out))


@main.command()
@_config_option()
@click.option("--instances", default=100, show_default=True, type=int)
@click.option("--max-side", default=12, show_default=True, type=int)
@click.option("--tolerance", default=1e-4, show_default=True, type=float)
@click.option("--seed", default=20240, show_default=True, type=int)
@click.option("--export-vectors", type=click.Path(dir_okay=False),
              help="Also write loss/gradient test vectors for other implementations.")
def losscheck(instances, max_side, tolerance, seed, export_vectors) -> None:
    """Verify analytic loss gradients against central finite differences."""
    anchors_ok = _losscheck_anchors()
    result = run_gradient_check(
        instances=instances, max_side=max_side, tolerance=tolerance, seed=seed
    )
    _log(
        event="losscheck",
        max_rel_error=result.max_rel_error,
        instances=result.instances,
        anchors_ok=anchors_ok,
    )
    click.echo(
        f"gradient check: max relative error {result.max_rel_error:.3e} "
        f"over {result.instances} instances (tolerance {tolerance:g})"
    )
    click.echo(f"closed-form anchors: {'ok' if anchors_ok else 'FAILED'}")
    if export_vectors:
        write_json_stable(export_loss_vectors(), Path(export_vectors))
        click.echo(f"vectors -> {export_vectors}")
    if not (result.passed and anchors_ok):
        sys.exit(1)


def _losscheck_anchors() -> bool:
    """ln(2) cross-entropy at p=0.5, and soft dice 0.5 on the half-ones case."""
    p = ProbMask.from_array(np.full((4, 4), 0.5))
    g_arr = np.zeros((4, 4), dtype=np.uint8)
    g_arr[:2, :] = 1
    g = BinaryMask(g_arr)
    ce_ok = abs(cross_entropy_loss(p, g) - math.log(2.0)) < 1e-9
    dice_ok = abs(soft_dice_loss(p, g, smooth=0.0) - 0.5) < 1e-12
    return ce_ok and dice_ok


@main.command(name="predict-builtin", hidden=True)
@click.option("--name", required=True, help="oracle | degraded:<r> | constant:<v>")
@click.option("--tasks", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(file_okay=False))
def predict_builtin(name, tasks, out) -> None:
    """Subprocess shim exposing the builtin predictors over the wire protocol."""
    task_list = read_task_manifest(Path(tasks))
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for task in task_list:
        gt = load_mask_png(default_mask_resolver(task))
        write_candidate_set(builtin_predictor(name, task.image_id, gt), out_dir)
    _log(event="predict_builtin", n=len(task_list), name=name)


@main.command(name="validate-results")
@click.option("--results", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--tasks", required=True, type=click.Path(exists=True, dir_okay=False))
def validate_results(results, tasks) -> None:
    """Check a results directory against the wire layout for every task."""
    task_list = read_task_manifest(Path(tasks))
    failures = validate_result_layout(Path(results), [t.image_id for t in task_list])
    for failure in failures:
        _log(event="layout_violation", image_id=failure.image_id, problem=failure.problem)
        click.echo(f"invalid: {failure}")
    click.echo(f"validated {len(task_list)} result dir(s), {len(failures)} problem(s)")
    if failures:
        sys.exit(1)


if __name__ == "__main__":
    main()
