"""Base heatmap construction from exported hidden features and gradients.

Diffusion MLLMs keep image and prompt tokens as fixed conditioning while
response tokens denoise in parallel, so a denoising step is usable for
visual attribution only when its hooked hidden sequence still contains the
full image-token span.  This module implements that feasibility predicate,
the dynamic image-span extraction, and the gradient-weighted map:

    w_c = mean_{i,j} G_c(i,j)
    M   = ReLU(sum_c w_c * A_c), then min-max normalized.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .core import (
    ActivationMap,
    FeatureStack,
    GradientStack,
    NoSteps,
    SampleMetadata,
    ShapeMismatch,
    SpanOutOfRange,
    StepRecord,
    normalize_minmax,
)


@dataclass(frozen=True)
class StepCheck:
    t: int
    seq_len: int
    img_end: int
    valid: bool


@dataclass(frozen=True)
class FeasibilityReport:
    """Per-step validity plus the aggregate ratio over all supplied records."""

    per_step: tuple[StepCheck, ...]
    valid_count: int
    total_count: int

    @property
    def valid_ratio(self) -> float:
        return self.valid_count / self.total_count

    def first_valid(self) -> StepCheck | None:
        for s in self.per_step:
            if s.valid:
                return s
        return None


def _check_records(records: Sequence[StepRecord], default_img_end: int) -> list[StepCheck]:
    out = []
    for rec in records:
        img_end = rec.img_end if rec.img_end is not None else default_img_end
        out.append(
            StepCheck(t=rec.t, seq_len=rec.seq_len, img_end=img_end, valid=rec.seq_len >= img_end)
        )
    return out


def check_step_feasibility(meta: SampleMetadata) -> FeasibilityReport:
    """Mark each step record valid iff ``seq_len >= img_end``.

    A record without an explicit ``img_end`` falls back to
    ``n_base + grid_h * grid_w``.
    """
    if not meta.steps:
        raise NoSteps(f"sample {meta.sample_id!r} has no step records")
    checks = _check_records(meta.steps, meta.default_img_end)
    valid = sum(c.valid for c in checks)
    return FeasibilityReport(per_step=tuple(checks), valid_count=valid, total_count=len(checks))


def pooled_feasibility(metas: Iterable[SampleMetadata]) -> FeasibilityReport:
    """Aggregate the feasibility predicate over many samples' step records."""
    checks: list[StepCheck] = []
    for meta in metas:
        if not meta.steps:
            raise NoSteps(f"sample {meta.sample_id!r} has no step records")
        checks.extend(_check_records(meta.steps, meta.default_img_end))
    if not checks:
        raise NoSteps("no step records supplied")
    valid = sum(c.valid for c in checks)
    return FeasibilityReport(per_step=tuple(checks), valid_count=valid, total_count=len(checks))


def extract_image_span(hidden: np.ndarray, meta: SampleMetadata, step_index: int = 0) -> FeatureStack:
    """Slice rows [n_base, n_base + H*W) out of an (L, D) hidden sequence and
    reshape them row-major into D spatial planes of H x W."""
    hidden = np.asarray(hidden, dtype=np.float64)
    if hidden.ndim != 2:
        raise ShapeMismatch(f"hidden sequence must be (L, D), got {hidden.shape}")
    L, D = hidden.shape
    h, w = meta.grid_h, meta.grid_w
    end = meta.n_base + h * w
    if L < end:
        raise SpanOutOfRange(
            f"hidden length {L} < image-span end {end} (n_base={meta.n_base}, grid={h}x{w})"
        )
    span = hidden[meta.n_base : end]  # (H*W, D)
    planes = span.reshape(h, w, D).transpose(2, 0, 1)
    return FeatureStack(channels=planes, step_index=step_index)


def base_cam(features: FeatureStack, gradients: GradientStack) -> ActivationMap:
    """Gradient-weighted channel aggregation with ReLU, min-max normalized.

    Channel weights are the spatial means of the gradient planes; summation
    order over channels is fixed, so the result is bit-deterministic.
    """
    if features.shape != gradients.shape:
        raise ShapeMismatch(
            f"feature stack {features.shape} vs gradient stack {gradients.shape}"
        )
    weights = gradients.channels.mean(axis=(1, 2))  # (D,)
    combined = np.tensordot(weights, features.channels, axes=(0, 0))  # (H, W)
    raw = np.maximum(combined, 0.0)
    return normalize_minmax(ActivationMap(raw))


def base_cam_raw(features: FeatureStack, gradients: GradientStack) -> np.ndarray:
    """Pre-normalization ReLU output of :func:`base_cam`; kept separate so
    tests can probe the un-scaled values."""
    if features.shape != gradients.shape:
        raise ShapeMismatch(
            f"feature stack {features.shape} vs gradient stack {gradients.shape}"
        )
    weights = gradients.channels.mean(axis=(1, 2))
    combined = np.tensordot(weights, features.channels, axes=(0, 0))
    return np.maximum(combined, 0.0)


def per_token_cam(features: FeatureStack, per_token_gradients: Sequence[GradientStack]) -> list[ActivationMap]:
    """One gradient-weighted map per answer token's gradient stack."""
    return [base_cam(features, g) for g in per_token_gradients]


def baseline_fixed_threshold(m: ActivationMap, theta: float = 0.4) -> ActivationMap:
    """Zero all entries below a fixed threshold; comparison-baseline only."""
    out = np.where(m.values < theta, 0.0, m.values)
    return ActivationMap(out, normalized=False)
