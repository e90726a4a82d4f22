"""Heatmap rendering and report figures.

The per-sample path writes PNGs directly: a grayscale heatmap, or the map
pushed through the fixed 256-entry colormap table (shipped as a resource)
and alpha-blended over a source image, with optional ground-truth contours.
Batch reports additionally save matplotlib figures next to the CSV output.
"""

from __future__ import annotations

from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np
from PIL import Image

from .core import ActivationMap, GroundTruthMaskSet
from .metrics import upsample_to_mask

_COLORMAP: Optional[np.ndarray] = None


def colormap_table() -> np.ndarray:
    """The packaged 256 x 3 uint8 color ramp used for overlays."""
    global _COLORMAP
    if _COLORMAP is None:
        text = resources.files("camrefine.resources").joinpath("colormap_256.csv").read_text("utf-8")
        rows = [[int(v) for v in line.split(",")] for line in text.splitlines() if line.strip()]
        table = np.asarray(rows, dtype=np.uint8)
        if table.shape != (256, 3):
            raise ValueError(f"colormap resource must be 256x3, got {table.shape}")
        _COLORMAP = table
    return _COLORMAP


def _to_levels(m: ActivationMap) -> np.ndarray:
    v = m.values
    hi = v.max()
    scaled = v / hi if hi > 0 else v
    return np.clip(np.round(scaled * 255.0), 0, 255).astype(np.uint8)


def _contour(mask: np.ndarray) -> np.ndarray:
    interior = np.zeros_like(mask)
    interior[1:-1, 1:-1] = (
        mask[1:-1, 1:-1]
        & mask[:-2, 1:-1]
        & mask[2:, 1:-1]
        & mask[1:-1, :-2]
        & mask[1:-1, 2:]
    )
    return mask & ~interior


def render_map(
    m: ActivationMap,
    out_path,
    image: Optional[np.ndarray] = None,
    gt: Optional[GroundTruthMaskSet] = None,
    opacity: float = 0.5,
    target_size: Optional[tuple[int, int]] = None,
) -> Path:
    """Write a heatmap PNG.

    Without a source image the map is saved as grayscale; with one, it is
    upsampled, colormapped and alpha-blended at the given opacity.  Ground
    truth, when given, is traced as white contours.
    """
    size = target_size
    if size is None and image is not None:
        size = image.shape[:2]
    if size is None and gt is not None:
        size = gt.image_size
    if size is not None and m.shape != tuple(size):
        m = upsample_to_mask(m, size)
    levels = _to_levels(m)

    if image is None:
        rgb = np.stack([levels] * 3, axis=-1)
    else:
        if image.ndim == 2:
            image = np.stack([image] * 3, axis=-1)
        heat = colormap_table()[levels]
        rgb = np.clip(
            (1.0 - opacity) * image.astype(np.float64) + opacity * heat.astype(np.float64),
            0,
            255,
        ).astype(np.uint8)

    if gt is not None and gt.image_size == levels.shape:
        edge = np.zeros(levels.shape, dtype=bool)
        for _, mask in gt.masks:
            edge |= _contour(mask)
        rgb = rgb.copy()
        rgb[edge] = (255, 255, 255)

    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(rgb, "RGB").save(out_path, format="PNG")
    return out_path


METRIC_COLUMNS = ("obj_iou", "contrast", "concentration", "f3")


def save_metrics_figure(reports, out_path) -> Optional[Path]:
    """Histogram panel of the four metrics over a batch."""
    rows = [r for r in reports if r is not None]
    if not rows:
        return None
    fig, axes = plt.subplots(1, 4, figsize=(14, 3.2))
    for ax, name in zip(axes, METRIC_COLUMNS):
        vals = [getattr(r, name) for r in rows]
        ax.hist(vals, bins=24, color="#4878cf", edgecolor="white")
        ax.set_title(name)
        ax.set_xlabel(f"mean={np.mean(vals):.3f}")
    fig.suptitle("metric distribution over batch")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def save_sweep_figure(param: str, rows: Sequence[dict], out_path) -> Optional[Path]:
    """Metric means against the swept parameter value."""
    if not rows:
        return None
    fig, axes = plt.subplots(1, 4, figsize=(14, 3.2))
    xs = list(range(len(rows)))
    labels = [str(r["value"]) for r in rows]
    for ax, name in zip(axes, METRIC_COLUMNS):
        ax.plot(xs, [r[f"{name}_mean"] for r in rows], marker="o")
        ax.set_xticks(xs, labels, rotation=40)
        ax.set_title(name)
        ax.set_xlabel(param)
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def save_variant_figure(rows: Sequence[dict], out_path) -> Optional[Path]:
    """Grouped bars of metric means per caption variant."""
    if not rows:
        return None
    fig, axes = plt.subplots(1, 4, figsize=(14, 3.2))
    names = [r["variant"] for r in rows]
    for ax, metric in zip(axes, METRIC_COLUMNS):
        ax.bar(names, [r[f"{metric}_mean"] for r in rows], color="#4878cf")
        ax.set_title(metric)
        ax.tick_params(axis="x", rotation=30)
    fig.suptitle("caption variants")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def save_timing_figure(rows: Sequence[dict], out_path) -> Optional[Path]:
    """Bar chart of mean per-stage runtime."""
    if not rows:
        return None
    fig, ax = plt.subplots(figsize=(7, 3.4))
    ax.bar([r["stage"] for r in rows], [r["mean_ms"] for r in rows], color="#c44e52")
    ax.set_ylabel("mean ms per sample")
    ax.set_title("per-stage runtime")
    fig.tight_layout()
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
