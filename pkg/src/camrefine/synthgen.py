"""Synthetic fixture scenes: ground-truth activation blobs plus the noise
taxonomy seen in raw exported heatmaps (salt-and-pepper flips, high-value
corner spikes mimicking register artifacts, diffuse background).

Scenes are deterministic per seed, with paired per-blob masks at image
resolution, so metric and refinement behavior can be exercised without any
model export.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from .core import (
    ActivationMap,
    ConfigError,
    GroundTruthMaskSet,
    SampleMetadata,
    StepRecord,
)

# blobs are truncated tightly so the Otsu prediction and the mask agree at
# baseline; the margin covers bilinear spill past the truncation radius
MASK_MARGIN = 0.5
BLOB_TRUNC_SIGMAS = 1.2


@dataclass(frozen=True)
class SynthSpec:
    seed: int
    grid: tuple[int, int] = (24, 24)
    image_size: tuple[int, int] = (96, 96)
    n_blobs: int = 4
    blob_intensity: tuple[float, float] = (0.5, 1.0)
    blob_sigma: tuple[float, float] = (1.4, 5.4)
    salt_pepper_rate: float = 0.0
    corner_spike_count: int = 0
    corner_spike_value: float = 1.1
    diffuse_background_level: float = 0.0
    distractor_blobs: int = 0
    activation_spread: float = 0.0
    variant_label: Optional[str] = None

    def __post_init__(self):
        if not (0.0 <= self.salt_pepper_rate <= 1.0):
            raise ConfigError("salt_pepper_rate must lie in [0, 1]")
        if self.n_blobs < 0 or self.corner_spike_count < 0 or self.distractor_blobs < 0:
            raise ConfigError("counts must be >= 0")
        if self.activation_spread < 0:
            raise ConfigError("activation_spread must be >= 0")
        if self.diffuse_background_level < 0 or self.corner_spike_value < 0:
            raise ConfigError("noise levels must be >= 0")
        if min(self.grid) < 4 or min(self.image_size) < 4:
            raise ConfigError("grid and image size must be at least 4x4")


def _corner_aligned_coords(n_src: int, n_dst: int) -> np.ndarray:
    if n_dst == 1 or n_src == 1:
        return np.zeros(n_dst)
    return np.linspace(0.0, n_src - 1.0, n_dst)


def generate(spec: SynthSpec) -> tuple[ActivationMap, GroundTruthMaskSet, SampleMetadata]:
    """Build one scene: truncated Gaussian blobs centered in their masks,
    plus configured noise, reproducible bit-for-bit per seed."""
    rng = np.random.default_rng(spec.seed)
    h, w = spec.grid
    ih, iw = spec.image_size
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    # image pixels expressed in grid coordinates, matching the
    # corner-aligned bilinear upsampling used by the metrics
    gy = _corner_aligned_coords(h, ih)[:, None]
    gx = _corner_aligned_coords(w, iw)[None, :]

    def draw_blob(center_y, center_x, sigma, intensity):
        r2 = (yy - center_y) ** 2 + (xx - center_x) ** 2
        blob = intensity * np.exp(-r2 / (2.0 * sigma * sigma))
        blob[r2 > (BLOB_TRUNC_SIGMAS * sigma) ** 2] = 0.0
        return blob

    def draw_center(margin):
        cy = rng.uniform(margin, h - 1.0 - margin) if h - 1.0 > 2 * margin else (h - 1.0) / 2.0
        cx = rng.uniform(margin, w - 1.0 - margin) if w - 1.0 > 2 * margin else (w - 1.0) / 2.0
        return cy, cx

    grid_map = np.zeros((h, w))
    masks = []
    centers = []
    for b in range(spec.n_blobs):
        sigma = rng.uniform(*spec.blob_sigma)
        cy, cx = draw_center(BLOB_TRUNC_SIGMAS * sigma + 1.0)
        intensity = rng.uniform(*spec.blob_intensity)
        grid_map = np.maximum(grid_map, draw_blob(cy, cx, sigma, intensity))
        centers.append((cy, cx, sigma))
        mask_r = BLOB_TRUNC_SIGMAS * sigma + MASK_MARGIN
        mask = (gy - cy) ** 2 + (gx - cx) ** 2 <= mask_r * mask_r
        masks.append((f"object{b}", mask))

    # distractor blobs carry no mask: bright activations in regions the
    # ground truth never covers, which refinement cannot (and should not)
    # remove
    for _ in range(spec.distractor_blobs):
        sigma = rng.uniform(*spec.blob_sigma)
        cy = cx = None
        for _attempt in range(16):
            try_y, try_x = draw_center(BLOB_TRUNC_SIGMAS * sigma + 1.0)
            clear = all(
                (try_y - by) ** 2 + (try_x - bx) ** 2
                > (BLOB_TRUNC_SIGMAS * (sigma + bs) * 0.75) ** 2
                for by, bx, bs in centers
            )
            if clear:
                cy, cx = try_y, try_x
                break
        if cy is None:
            cy, cx = try_y, try_x
        intensity = rng.uniform(*spec.blob_intensity)
        grid_map = np.maximum(grid_map, draw_blob(cy, cx, sigma, intensity))

    if spec.activation_spread > 0:
        # diffuse attribution: smear the signal itself beyond its masks,
        # a degradation the refinement chain cannot reverse
        from .dacg import gaussian_blur

        kernel = 2 * math.ceil(2.0 * spec.activation_spread) + 1
        kernel = min(kernel, 2 * (min(h, w) // 2) - 1)
        grid_map = gaussian_blur(grid_map, kernel, spec.activation_spread)

    grid_map = grid_map + spec.diffuse_background_level

    n_flips = math.floor(spec.salt_pepper_rate * h * w)
    if n_flips:
        idx = rng.choice(h * w, size=n_flips, replace=False)
        polarity = rng.integers(0, 2, size=n_flips).astype(np.float64)
        flat = grid_map.reshape(-1)
        flat[idx] = polarity
        grid_map = flat.reshape(h, w)

    for _ in range(spec.corner_spike_count):
        corner = rng.integers(0, 4)
        dy = int(rng.integers(0, 3))
        dx = int(rng.integers(0, 3))
        y = dy if corner in (0, 1) else h - 1 - dy
        x = dx if corner in (0, 2) else w - 1 - dx
        grid_map[y, x] = spec.corner_spike_value

    raw = ActivationMap(grid_map, normalized=False)
    gt = GroundTruthMaskSet(masks=tuple(masks), image_size=(ih, iw))
    meta = SampleMetadata(
        sample_id=f"synth{spec.seed:04d}",
        n_base=0,
        grid_h=h,
        grid_w=w,
        hidden_dim=1,
        steps=(StepRecord(t=0, seq_len=h * w, img_end=h * w),),
        tokens=(),
        response_text="",
        variant_label=spec.variant_label,
    )
    return raw, gt, meta


# caption-variant fixtures degrade monotonically from concise to repeated:
# the signal spreads spatially (diffuse attribution) while distractor
# activations accumulate in off-target regions
VARIANT_SPREAD = {"concise": 0.0, "original": 0.7, "verbose": 1.4, "repeated": 2.2}
VARIANT_DISTRACTORS = {"concise": 0, "original": 1, "verbose": 2, "repeated": 3}


def spec_for(seed: int, synth_cfg, variant: Optional[str] = None) -> SynthSpec:
    """Build a scene spec from a corpus-level config block, optionally
    scaled into one of the four caption-variant degradation levels."""
    return SynthSpec(
        seed=seed,
        grid=tuple(synth_cfg.grid),
        image_size=tuple(synth_cfg.image_size),
        n_blobs=synth_cfg.n_blobs,
        blob_intensity=tuple(synth_cfg.blob_intensity),
        blob_sigma=tuple(synth_cfg.blob_sigma),
        salt_pepper_rate=synth_cfg.salt_pepper_rate,
        corner_spike_count=synth_cfg.corner_spike_count,
        corner_spike_value=synth_cfg.corner_spike_value,
        diffuse_background_level=synth_cfg.diffuse_background_level,
        distractor_blobs=VARIANT_DISTRACTORS[variant] if variant else synth_cfg.distractor_blobs,
        activation_spread=VARIANT_SPREAD[variant] if variant else 0.0,
        variant_label=variant,
    )


def write_corpus(out_dir, seeds, synth_cfg, variants: bool = False):
    """Materialize a corpus as standard interchange files plus a manifest.

    Each scene becomes a single-channel feature stack equal to the raw map
    with an all-ones gradient stack, so the attribution stage reproduces
    the scene exactly.  With ``variants`` set, every seed yields four
    labeled samples at increasing noise levels.
    """
    from . import io as cio  # local import to keep synthgen usable standalone

    out = Path(out_dir)
    for sub in ("features", "gradients", "meta", "masks"):
        (out / sub).mkdir(parents=True, exist_ok=True)
    entries = []
    labels = list(VARIANT_SPREAD) if variants else [None]
    for seed in seeds:
        for label in labels:
            spec = spec_for(seed, synth_cfg, label)
            raw, gt, meta = generate(spec)
            sample_id = meta.sample_id if label is None else f"{meta.sample_id}_{label}"
            meta = dataclasses.replace(meta, sample_id=sample_id)
            cio.write_array(out / "features" / f"{sample_id}.npy", raw.values[None, :, :])
            cio.write_array(out / "gradients" / f"{sample_id}.npy", np.ones_like(raw.values)[None, :, :])
            mask_manifest = []
            for cls, mask in gt.masks:
                name = f"{sample_id}_{cls}.png"
                cio.write_mask(out / "masks" / name, mask)
                mask_manifest.append((cls, name))
            cio.write_metadata(out / "meta" / f"{sample_id}.json", meta, mask_manifest)
            entries.append(
                cio.ManifestEntry(
                    sample_id=sample_id,
                    features_path=f"features/{sample_id}.npy",
                    gradients_path=f"gradients/{sample_id}.npy",
                    meta_path=f"meta/{sample_id}.json",
                    mask_dir="masks",
                    variant_label=label,
                )
            )
    manifest_path = out / "manifest.jsonl"
    cio.write_manifest(manifest_path, entries)
    return manifest_path
