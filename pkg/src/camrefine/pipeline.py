"""Batch orchestration: attribution, refinement chain, metrics, sweeps,
variant grouping and stage timing.

Samples are processed independently (optionally by a thread pool) and
always reported in manifest order, so identical inputs and configuration
produce byte-identical artifacts regardless of worker count.  A malformed
sample yields one error record without stopping the batch.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import io as cio
from .akd import akd
from .attribution import (
    FeasibilityReport,
    base_cam,
    baseline_fixed_threshold,
    check_step_feasibility,
    extract_image_span,
)
from .cba import cba
from .config import PipelineConfig, set_param
from .core import (
    ActivationMap,
    CamRefineError,
    FeatureStack,
    GradientStack,
    GroundTruthMaskSet,
    NoVariants,
    SampleMetadata,
    ShapeMismatch,
    normalize_minmax,
)
from .dacg import BRANCHES, DacgBranchLog, dacg
from .metrics import MetricReport, evaluate_sample, f3_score
from .render import (
    save_metrics_figure,
    save_sweep_figure,
    save_timing_figure,
    save_variant_figure,
)
from .sicd import sicd

METRIC_NAMES = ("obj_iou", "contrast", "concentration", "f3")
STAGES = ("attribution", "akd", "dacg", "cba", "sicd", "metrics")
VARIANT_ORDER = ("concise", "original", "verbose", "repeated")


@dataclass
class SampleOutcome:
    sample_id: str
    error: Optional[str] = None
    cam_raw: Optional[ActivationMap] = None
    cam_refined: Optional[ActivationMap] = None
    report: Optional[MetricReport] = None
    branch_log: Optional[DacgBranchLog] = None
    feasibility: Optional[FeasibilityReport] = None
    variant_label: Optional[str] = None
    timings: dict[str, float] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.error is None


def refine_map(
    m: ActivationMap,
    config: PipelineConfig,
    tokens=(),
    per_token_maps=(),
    step_count: Optional[int] = None,
    timings: Optional[dict] = None,
) -> tuple[ActivationMap, Optional[DacgBranchLog]]:
    """Run the configured refinement chain on one normalized map."""
    branch_log = None
    for name in config.modules:
        t0 = time.perf_counter()
        if name == "akd":
            m = akd(m, config.akd, step_count=step_count)
        elif name == "dacg":
            m, branch_log = dacg(m, config.dacg)
        elif name == "cba":
            m = cba(m, config.cba)
        elif name == "sicd":
            m = sicd(m, tokens, per_token_maps, config.sicd)
        if timings is not None:
            timings[name] = timings.get(name, 0.0) + (time.perf_counter() - t0) * 1000.0
    return m, branch_log


def _load_stacks(entry: cio.ManifestEntry, meta: SampleMetadata) -> tuple[FeatureStack, GradientStack]:
    feats = cio.read_array(entry.features_path)
    grads = cio.read_array(entry.gradients_path)
    if feats.shape != grads.shape:
        raise ShapeMismatch(f"features {feats.shape} vs gradients {grads.shape}")
    if feats.ndim == 2:
        features = extract_image_span(feats, meta)
        gradients = GradientStack(
            extract_image_span(grads, meta).channels, step_index=features.step_index
        )
    elif feats.ndim == 3:
        if feats.shape[1:] != (meta.grid_h, meta.grid_w):
            raise ShapeMismatch(
                f"feature planes {feats.shape[1:]} do not match grid "
                f"{(meta.grid_h, meta.grid_w)}"
            )
        features = FeatureStack(feats)
        gradients = GradientStack(grads)
    else:
        raise ShapeMismatch(f"features must be (L, D) or (D, H, W), got {feats.shape}")
    return features, gradients


def _load_per_token_maps(meta: SampleMetadata, meta_path: str):
    base = Path(meta_path).parent
    maps = []
    for tok in meta.tokens:
        if tok.per_token_map:
            p = Path(tok.per_token_map)
            maps.append(cio.read_map(p if p.is_absolute() else base / p, normalized=True))
        else:
            maps.append(None)
    return maps


def process_sample(
    entry: cio.ManifestEntry,
    config: PipelineConfig,
    eval_metrics: bool = True,
    refine: bool = True,
) -> SampleOutcome:
    """Full per-sample path: load, attribute, refine, evaluate.  Any error
    is captured on the outcome instead of propagating."""
    outcome = SampleOutcome(sample_id=entry.sample_id, variant_label=entry.variant_label)
    try:
        t0 = time.perf_counter()
        meta, mask_manifest = cio.read_metadata(entry.meta_path)
        if entry.variant_label is None:
            outcome.variant_label = meta.variant_label
        if meta.steps:
            outcome.feasibility = check_step_feasibility(meta)
        features, gradients = _load_stacks(entry, meta)
        cam_raw = base_cam(features, gradients)
        outcome.cam_raw = cam_raw
        outcome.timings["attribution"] = (time.perf_counter() - t0) * 1000.0

        if not refine:
            outcome.cam_refined = cam_raw
        elif config.baseline_mode == "fixed_threshold_0.4":
            outcome.cam_refined = normalize_minmax(baseline_fixed_threshold(cam_raw, 0.4))
        else:
            tokens = meta.tokens
            per_token_maps = _load_per_token_maps(meta, entry.meta_path)
            step_count = len(meta.steps) if meta.steps else None
            refined, branch_log = refine_map(
                cam_raw,
                config,
                tokens=tokens,
                per_token_maps=per_token_maps,
                step_count=step_count,
                timings=outcome.timings,
            )
            outcome.cam_refined = refined
            outcome.branch_log = branch_log

        if eval_metrics:
            t0 = time.perf_counter()
            if not mask_manifest:
                raise CamRefineError("sample has no ground-truth masks to evaluate")
            mask_base = entry.mask_dir or Path(entry.meta_path).parent
            gt = cio.load_mask_set(mask_manifest, mask_base)
            outcome.report = evaluate_sample(outcome.cam_refined, gt, entry.sample_id)
            outcome.timings["metrics"] = (time.perf_counter() - t0) * 1000.0
    except CamRefineError as exc:
        outcome.error = f"{type(exc).__name__}: {exc}"
    except Exception as exc:  # crash isolation: one bad sample, one record
        outcome.error = f"unexpected {type(exc).__name__}: {exc}"
    return outcome


@dataclass
class BatchResult:
    outcomes: list[SampleOutcome]
    config: PipelineConfig

    @property
    def ok_outcomes(self) -> list[SampleOutcome]:
        return [o for o in self.outcomes if o.ok]

    @property
    def error_count(self) -> int:
        return sum(not o.ok for o in self.outcomes)

    def routing_percentages(self) -> dict[str, float]:
        logs = [o.branch_log for o in self.ok_outcomes if o.branch_log is not None]
        counts = {b: 0 for b in BRANCHES}
        for log in logs:
            counts[log.branch] += 1
        n = len(logs)
        return {b: (100.0 * counts[b] / n if n else 0.0) for b in BRANCHES}

    def metric_aggregate(self) -> dict[str, float]:
        reports = [o.report for o in self.ok_outcomes if o.report is not None]
        agg: dict[str, float] = {"n": float(len(reports))}
        if not reports:
            return agg
        for name in METRIC_NAMES:
            vals = np.array([getattr(r, name) for r in reports])
            agg[f"{name}_mean"] = float(vals.mean())
            agg[f"{name}_std"] = float(vals.std())
        agg["f3_aggregate"] = f3_score(
            agg["obj_iou_mean"], agg["contrast_mean"], agg["concentration_mean"]
        )
        return agg

    def stage_timing_rows(self) -> list[dict]:
        rows = []
        module_means = []
        for stage in STAGES:
            vals = [o.timings[stage] for o in self.ok_outcomes if stage in o.timings]
            if not vals:
                continue
            mean = float(np.mean(vals))
            rows.append(
                {"stage": stage, "mean_ms": mean, "std_ms": float(np.std(vals)), "n": len(vals)}
            )
            if stage in ("akd", "dacg", "cba", "sicd"):
                module_means.append(mean)
        if module_means:
            rows.append(
                {
                    "stage": "total_refinement",
                    "mean_ms": float(sum(module_means)),
                    "std_ms": 0.0,
                    "n": len(self.ok_outcomes),
                }
            )
        return rows


def run_batch(
    entries: Sequence[cio.ManifestEntry],
    config: PipelineConfig,
    eval_metrics: bool = True,
    refine: bool = True,
    workers: Optional[int] = None,
) -> BatchResult:
    """Process every manifest entry; output order always follows the
    manifest regardless of completion order."""
    workers = config.workers if workers is None else workers
    job = lambda e: process_sample(e, config, eval_metrics=eval_metrics, refine=refine)
    if workers <= 1 or len(entries) <= 1:
        outcomes = [job(e) for e in entries]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, entries))
    return BatchResult(outcomes=list(outcomes), config=config)


def _json_dump(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8")


def write_cam_files(result: BatchResult, out_dir, raw_prefix="cam_raw", refined_prefix="cam_refined"):
    out = Path(out_dir)
    for o in result.outcomes:
        if o.cam_raw is not None:
            cio.write_map(out / f"{raw_prefix}_{o.sample_id}.npy", o.cam_raw)
        if o.cam_refined is not None:
            cio.write_map(out / f"{refined_prefix}_{o.sample_id}.npy", o.cam_refined)


def write_feasibility(result: BatchResult, out_dir) -> Optional[Path]:
    per_sample = []
    valid = total = 0
    for o in result.outcomes:
        if o.feasibility is None:
            continue
        rep = o.feasibility
        per_sample.append(
            {
                "sample_id": o.sample_id,
                "valid_count": rep.valid_count,
                "total_count": rep.total_count,
                "valid_ratio": rep.valid_ratio,
                "per_step": [
                    {"t": s.t, "seq_len": s.seq_len, "img_end": s.img_end, "valid": s.valid}
                    for s in rep.per_step
                ],
            }
        )
        valid += rep.valid_count
        total += rep.total_count
    if not per_sample:
        return None
    doc = {
        "per_sample": per_sample,
        "pooled": {
            "valid_count": valid,
            "total_count": total,
            "valid_ratio": valid / total if total else 0.0,
        },
    }
    path = Path(out_dir) / "feasibility.json"
    _json_dump(path, doc)
    return path


def write_metrics_json(result: BatchResult, out_dir) -> Path:
    samples = []
    for o in result.outcomes:
        if not o.ok:
            samples.append({"sample_id": o.sample_id, "error": o.error})
            continue
        entry = o.report.as_dict() if o.report else {"sample_id": o.sample_id}
        if o.branch_log is not None:
            entry["dacg_branch"] = o.branch_log.branch
            entry["dacg_tau_conf"] = o.branch_log.tau_conf
        if o.variant_label is not None:
            entry["variant_label"] = o.variant_label
        samples.append(entry)
    doc = {
        "samples": samples,
        "aggregate": result.metric_aggregate(),
        "routing_pct": result.routing_percentages(),
    }
    path = Path(out_dir) / "metrics.json"
    _json_dump(path, doc)
    return path


def write_summary_csv(result: BatchResult, out_dir, label: str = "run") -> Path:
    agg = result.metric_aggregate()
    routing = result.routing_percentages()
    path = Path(out_dir) / "summary.csv"
    path.parent.mkdir(parents=True, exist_ok=True)
    cols = ["config", "n", "errors"]
    for name in METRIC_NAMES:
        cols += [f"{name}_mean", f"{name}_std"]
    cols += ["f3_aggregate"] + [f"routing_{b}_pct" for b in BRANCHES]
    row = [label, int(agg.get("n", 0)), result.error_count]
    for name in METRIC_NAMES:
        row += [agg.get(f"{name}_mean", ""), agg.get(f"{name}_std", "")]
    row.append(agg.get("f3_aggregate", ""))
    row += [routing[b] for b in BRANCHES]
    with open(path, "w", newline="") as fp:
        writer = csv.writer(fp)
        writer.writerow(cols)
        writer.writerow(row)
    return path


def write_run_outputs(result: BatchResult, out_dir, figures: bool = True) -> dict:
    """Standard report bundle: cam files, metrics JSON, summary CSV,
    feasibility JSON and the summary figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_cam_files(result, out)
    paths = {
        "metrics": write_metrics_json(result, out),
        "summary": write_summary_csv(result, out),
    }
    feas = write_feasibility(result, out)
    if feas:
        paths["feasibility"] = feas
    if figures:
        fig = save_metrics_figure(
            [o.report for o in result.ok_outcomes], out / "metrics_summary.png"
        )
        if fig:
            paths["figure"] = fig
    return paths


def sweep(
    entries: Sequence[cio.ManifestEntry],
    config: PipelineConfig,
    param: str,
    values: Sequence,
    workers: Optional[int] = None,
) -> list[dict]:
    """Re-run the batch once per parameter value; one row per value with
    metric means/stds and branch routing percentages."""
    rows = []
    for value in values:
        cfg = set_param(config, param, value)
        result = run_batch(entries, cfg, eval_metrics=True, workers=workers)
        agg = result.metric_aggregate()
        routing = result.routing_percentages()
        row = {"param": param, "value": value, "n": int(agg.get("n", 0))}
        for name in METRIC_NAMES:
            row[f"{name}_mean"] = agg.get(f"{name}_mean", 0.0)
            row[f"{name}_std"] = agg.get(f"{name}_std", 0.0)
        for b in BRANCHES:
            row[f"routing_{b}_pct"] = routing[b]
        rows.append(row)
    return rows


def write_sweep_outputs(rows: list[dict], out_dir, figures: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "sweep.csv"
    if rows:
        with open(path, "w", newline="") as fp:
            writer = csv.DictWriter(fp, fieldnames=list(rows[0].keys()))
            writer.writeheader()
            writer.writerows(rows)
    paths = {"sweep": path}
    if figures and rows:
        fig = save_sweep_figure(rows[0]["param"], rows, out / "sweep.png")
        if fig:
            paths["figure"] = fig
    return paths


def variant_table(result: BatchResult) -> tuple[list[dict], dict[str, bool]]:
    """Group metric means by caption variant and evaluate the quality
    ordering concise >= original >= verbose >= repeated per metric."""
    groups: dict[str, list[MetricReport]] = {}
    for o in result.ok_outcomes:
        if o.report is None:
            continue
        if o.variant_label is None:
            raise NoVariants(f"sample {o.sample_id!r} carries no variant_label")
        groups.setdefault(o.variant_label, []).append(o.report)
    if not groups:
        raise NoVariants("no labeled samples to group")
    rows = []
    ordered = [v for v in VARIANT_ORDER if v in groups]
    for variant in ordered:
        reports = groups[variant]
        row = {"variant": variant, "n": len(reports)}
        for name in METRIC_NAMES:
            vals = np.array([getattr(r, name) for r in reports])
            row[f"{name}_mean"] = float(vals.mean())
            row[f"{name}_std"] = float(vals.std())
        rows.append(row)
    monotone = {}
    for name in METRIC_NAMES:
        means = [r[f"{name}_mean"] for r in rows]
        monotone[name] = all(a >= b for a, b in zip(means, means[1:]))
    return rows, monotone


def write_variant_outputs(rows, monotone, out_dir, figures: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "variants.csv"
    with open(path, "w", newline="") as fp:
        writer = csv.DictWriter(fp, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    _json_dump(out / "variants_monotone.json", monotone)
    paths = {"variants": path}
    if figures:
        fig = save_variant_figure(rows, out / "variants.png")
        if fig:
            paths["figure"] = fig
    return paths


def write_timing_outputs(result: BatchResult, out_dir, figures: bool = True) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = result.stage_timing_rows()
    path = out / "timing.csv"
    with open(path, "w", newline="") as fp:
        writer = csv.DictWriter(fp, fieldnames=["stage", "mean_ms", "std_ms", "n"])
        writer.writeheader()
        writer.writerows(rows)
    paths = {"timing": path}
    if figures:
        fig = save_timing_figure(rows, out / "timing.png")
        if fig:
            paths["figure"] = fig
    return paths
