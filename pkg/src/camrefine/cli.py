"""Command-line surface.

Subcommands: attribute, refine, eval, run, sweep, synth, render,
check-steps, variants, time.  Exit codes: 0 on success, 1 when any sample
produced an error record, 2 for configuration problems.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path


from . import io as cio
from .attribution import check_step_feasibility
from .config import PipelineConfig, load_config, parse_value, set_param
from .core import CamRefineError, ConfigError, NoSteps
from .pipeline import (
    BatchResult,
    run_batch,
    sweep,
    variant_table,
    write_cam_files,
    write_feasibility,
    write_metrics_json,
    write_run_outputs,
    write_summary_csv,
    write_sweep_outputs,
    write_timing_outputs,
    write_variant_outputs,
)
from .render import render_map
from .synthgen import write_corpus


def _add_common(p, manifest=True, config=True, out=True, workers=True, modules=True):
    if manifest:
        p.add_argument("--manifest", required=True, help="JSON-Lines sample manifest")
    if config:
        p.add_argument("--config", default=None, help="TOML pipeline config")
    if out:
        p.add_argument("--out-dir", required=True, help="output directory")
    if workers:
        p.add_argument("--workers", type=int, default=None, help="concurrent sample workers")
    if modules:
        p.add_argument(
            "--modules",
            default=None,
            help="comma list of refinement modules in order (empty or 'none' disables all)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camrefine",
        description="Refine and evaluate activation heatmaps exported from "
        "diffusion multimodal language models.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("attribute", "base heatmaps plus feasibility report"),
        ("refine", "base heatmaps plus the refinement chain"),
        ("eval", "metrics over refined heatmaps"),
        ("run", "attribute + refine + eval with all artifacts"),
    ):
        p = sub.add_parser(name, help=help_text)
        _add_common(p)

    p = sub.add_parser("sweep", help="re-run the batch across one parameter's values")
    _add_common(p)
    p.add_argument("--param", required=True, help="dotted parameter path, e.g. dacg.delta_sigma")
    p.add_argument("--values", required=True, help="comma-separated list of values")

    p = sub.add_parser("synth", help="generate a synthetic fixture corpus")
    _add_common(p, manifest=False, workers=False, modules=False)
    p.add_argument("--seed-range", default="0:200", help="half-open seed range START:END")
    p.add_argument(
        "--variants",
        action="store_true",
        help="emit four caption-variant samples per seed with graded noise",
    )

    p = sub.add_parser("render", help="write heatmap PNGs for each sample")
    _add_common(p)
    p.add_argument("--source", choices=("raw", "refined"), default="refined")
    p.add_argument("--opacity", type=float, default=None)
    p.add_argument("--no-gt", action="store_true", help="skip ground-truth contours")

    p = sub.add_parser("check-steps", help="step-feasibility protocol over metadata only")
    _add_common(p, workers=False, modules=False)

    p = sub.add_parser("variants", help="caption-variant comparison table")
    _add_common(p)

    p = sub.add_parser("time", help="per-stage runtime over a corpus")
    _add_common(p)

    return parser


def _load_setup(args) -> tuple[list[cio.ManifestEntry], PipelineConfig]:
    config = load_config(args.config)
    if getattr(args, "modules", None) is not None:
        raw = args.modules.strip()
        modules = () if raw in ("", "none") else tuple(m.strip() for m in raw.split(","))
        config = set_param(config, "pipeline.modules", modules)
    if getattr(args, "workers", None):
        config = set_param(config, "pipeline.workers", args.workers)
    try:
        entries = cio.read_manifest(args.manifest)
    except cio.InterchangeError as exc:
        raise ConfigError(str(exc)) from exc
    if not entries:
        raise ConfigError(f"manifest {args.manifest} lists no samples")
    return entries, config


def _finish(result: BatchResult) -> int:
    for o in result.outcomes:
        if not o.ok:
            print(f"[error] {o.sample_id}: {o.error}", file=sys.stderr)
    agg = result.metric_aggregate()
    if agg.get("n"):
        print(
            "samples={n:.0f} obj_iou={obj_iou_mean:.4f} contrast={contrast_mean:.3f} "
            "concentration={concentration_mean:.4f} f3={f3_mean:.4f}".format(**agg)
        )
    return 1 if result.error_count else 0


def cmd_attribute(args) -> int:
    entries, config = _load_setup(args)
    result = run_batch(entries, config, eval_metrics=False, refine=False)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for o in result.outcomes:
        if o.cam_raw is not None:
            cio.write_map(out / f"cam_{o.sample_id}.npy", o.cam_raw)
    write_feasibility(result, out)
    return _finish(result)


def cmd_refine(args) -> int:
    entries, config = _load_setup(args)
    result = run_batch(entries, config, eval_metrics=False)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_cam_files(result, out)
    return _finish(result)


def cmd_eval(args) -> int:
    entries, config = _load_setup(args)
    result = run_batch(entries, config, eval_metrics=True)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_metrics_json(result, out)
    write_summary_csv(result, out)
    from .render import save_metrics_figure

    save_metrics_figure([o.report for o in result.ok_outcomes], out / "metrics_summary.png")
    return _finish(result)


def cmd_run(args) -> int:
    entries, config = _load_setup(args)
    result = run_batch(entries, config, eval_metrics=True)
    write_run_outputs(result, args.out_dir)
    return _finish(result)


def cmd_sweep(args) -> int:
    entries, config = _load_setup(args)
    values = [parse_value(v) for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values lists no values")
    rows = sweep(entries, config, args.param, values)
    write_sweep_outputs(rows, args.out_dir)
    for row in rows:
        print(
            f"{args.param}={row['value']}: f3={row['f3_mean']:.4f} "
            f"iou={row['obj_iou_mean']:.4f}"
        )
    return 0


def cmd_synth(args) -> int:
    config = load_config(args.config)
    text = args.seed_range
    try:
        if ":" in text:
            start, end = (int(v) for v in text.split(":", 1))
        else:
            start, end = 0, int(text)
    except ValueError as exc:
        raise ConfigError(f"bad --seed-range {text!r}: {exc}") from exc
    if end <= start:
        raise ConfigError(f"empty seed range {text!r}")
    manifest = write_corpus(args.out_dir, range(start, end), config.synth, variants=args.variants)
    n = (end - start) * (4 if args.variants else 1)
    print(f"wrote {n} samples, manifest {manifest}")
    return 0


def cmd_render(args) -> int:
    entries, config = _load_setup(args)
    result = run_batch(entries, config, eval_metrics=False)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    opacity = config.render.opacity if args.opacity is None else args.opacity
    errors = result.error_count
    for entry, o in zip(entries, result.outcomes):
        if not o.ok:
            print(f"[error] {o.sample_id}: {o.error}", file=sys.stderr)
            continue
        m = o.cam_raw if args.source == "raw" else o.cam_refined
        gt = None
        if not args.no_gt:
            try:
                _, mask_manifest = cio.read_metadata(entry.meta_path)
                if mask_manifest:
                    base = entry.mask_dir or Path(entry.meta_path).parent
                    gt = cio.load_mask_set(mask_manifest, base)
            except cio.InterchangeError:
                gt = None
        render_map(
            m,
            out / f"heatmap_{o.sample_id}.png",
            gt=gt,
            opacity=opacity,
            target_size=gt.image_size if gt else None,
        )
    return 1 if errors else 0


def cmd_check_steps(args) -> int:
    config = load_config(args.config)
    del config  # config accepted for interface symmetry; nothing to apply
    try:
        entries = cio.read_manifest(args.manifest)
    except cio.InterchangeError as exc:
        raise ConfigError(str(exc)) from exc
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    per_sample = []
    valid = total = 0
    errors = 0
    for entry in entries:
        try:
            meta, _ = cio.read_metadata(entry.meta_path)
            rep = check_step_feasibility(meta)
        except (cio.InterchangeError, NoSteps) as exc:
            errors += 1
            print(f"[error] {entry.sample_id}: {exc}", file=sys.stderr)
            continue
        per_sample.append(
            {
                "sample_id": entry.sample_id,
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
    doc = {
        "per_sample": per_sample,
        "pooled": {
            "valid_count": valid,
            "total_count": total,
            "valid_ratio": valid / total if total else 0.0,
        },
    }
    (out / "feasibility.json").write_text(
        json.dumps(doc, indent=1, sort_keys=True), encoding="utf-8"
    )
    if total:
        print(f"pooled feasibility: {valid}/{total} = {100.0 * valid / total:.1f}%")
    return 1 if errors else 0


def cmd_variants(args) -> int:
    entries, config = _load_setup(args)
    result = run_batch(entries, config, eval_metrics=True)
    rows, monotone = variant_table(result)
    write_variant_outputs(rows, monotone, args.out_dir)
    for row in rows:
        print(
            f"{row['variant']:>9}: n={row['n']} f3={row['f3_mean']:.4f} "
            f"iou={row['obj_iou_mean']:.4f}"
        )
    print("monotone:", json.dumps(monotone, sort_keys=True))
    return _finish(result)


def cmd_time(args) -> int:
    entries, config = _load_setup(args)
    result = run_batch(entries, config, eval_metrics=True, workers=1)
    write_timing_outputs(result, args.out_dir)
    for row in result.stage_timing_rows():
        print(f"{row['stage']:>16}: {row['mean_ms']:8.2f} ms")
    return _finish(result)


COMMANDS = {
    "attribute": cmd_attribute,
    "refine": cmd_refine,
    "eval": cmd_eval,
    "run": cmd_run,
    "sweep": cmd_sweep,
    "synth": cmd_synth,
    "render": cmd_render,
    "check-steps": cmd_check_steps,
    "variants": cmd_variants,
    "time": cmd_time,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except CamRefineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
