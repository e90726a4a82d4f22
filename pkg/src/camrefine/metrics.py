"""Otsu binarization and the four-metric evaluation framework.

Predicted regions come from a 256-candidate Otsu threshold over the
normalized map; localization is the best per-class IoU, contrast the
foreground/background mean ratio, concentration the activation-mass share
inside ground truth, and the combined score the harmonic mean of IoU,
contrast clipped at 20x, and concentration.  All metrics evaluate at mask
resolution after corner-aligned bilinear upsampling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import ActivationMap, GroundTruthMaskSet, ShapeMismatch

EPSILON = 1e-6
OTSU_BINS = 256
# candidate thresholds: midpoints of a 256-bin histogram over [0, 1]
OTSU_CANDIDATES = (np.arange(OTSU_BINS, dtype=np.float64) + 0.5) / OTSU_BINS
CONTRAST_CAP = 20.0


@dataclass(frozen=True)
class MetricReport:
    """The metric quartet plus provenance for one sample."""

    sample_id: str
    obj_iou: float
    contrast: float
    concentration: float
    f3: float
    per_class_iou: dict[str, float] = field(default_factory=dict)
    otsu_threshold: float = 0.0

    def as_dict(self) -> dict:
        return {
            "sample_id": self.sample_id,
            "obj_iou": self.obj_iou,
            "obj_iou_pct": 100.0 * self.obj_iou,
            "contrast": self.contrast,
            "concentration": self.concentration,
            "concentration_pct": 100.0 * self.concentration,
            "f3": self.f3,
            "f3_pct": 100.0 * self.f3,
            "per_class_iou": dict(sorted(self.per_class_iou.items())),
            "otsu_threshold": self.otsu_threshold,
        }


def otsu_threshold(m: ActivationMap) -> float:
    """Threshold maximizing between-class variance over the 256 candidate
    bin midpoints; ties resolve to the lowest candidate.

    Degenerate maps: an all-zero map gets the lowest candidate (which leaves
    the foreground empty), a constant nonzero map a threshold just below the
    constant (everything foreground).
    """
    values = np.sort(m.values, axis=None)
    n = values.size
    lo, hi = values[0], values[-1]
    if lo == hi:
        if hi == 0.0:
            return float(OTSU_CANDIDATES[0])
        below = OTSU_CANDIDATES[OTSU_CANDIDATES < hi]
        return float(below[-1]) if below.size else float(np.nextafter(hi, 0.0))
    # prefix sums give exact class means for every candidate split
    prefix = np.concatenate(([0.0], np.cumsum(values)))
    counts_below = np.searchsorted(values, OTSU_CANDIDATES, side="left")
    n0 = counts_below.astype(np.float64)
    n1 = n - n0
    sum0 = prefix[counts_below]
    sum1 = prefix[-1] - sum0
    with np.errstate(invalid="ignore", divide="ignore"):
        mu0 = np.where(n0 > 0, sum0 / n0, 0.0)
        mu1 = np.where(n1 > 0, sum1 / n1, 0.0)
    score = (n0 / n) * (n1 / n) * (mu1 - mu0) ** 2
    score[(n0 == 0) | (n1 == 0)] = 0.0
    best = int(np.argmax(score))  # argmax returns the first (lowest) maximum
    return float(OTSU_CANDIDATES[best])


def upsample_to_mask(m: ActivationMap, target: tuple[int, int]) -> ActivationMap:
    """Corner-aligned bilinear interpolation to the mask resolution; output
    values stay inside the input's range."""
    th, tw = int(target[0]), int(target[1])
    if th < 1 or tw < 1:
        raise ShapeMismatch(f"target size must be positive, got {target}")
    src = m.values
    h, w = src.shape
    rows = np.linspace(0.0, h - 1.0, th) if th > 1 else np.zeros(1)
    cols = np.linspace(0.0, w - 1.0, tw) if tw > 1 else np.zeros(1)
    if h == 1:
        rows = np.zeros(th)
    if w == 1:
        cols = np.zeros(tw)
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    r1 = np.minimum(r0 + 1, h - 1)
    c1 = np.minimum(c0 + 1, w - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = src[np.ix_(r0, c0)] * (1 - fc) + src[np.ix_(r0, c1)] * fc
    bot = src[np.ix_(r1, c0)] * (1 - fc) + src[np.ix_(r1, c1)] * fc
    out = top * (1 - fr) + bot * fr
    # interior extrema need not land on the target grid, so the result may
    # no longer span [0, 1] exactly and the normalized flag cannot carry over
    return ActivationMap(np.clip(out, src.min(), src.max()), normalized=False)


def _check_resolution(m: ActivationMap, gt: GroundTruthMaskSet) -> None:
    if m.shape != gt.image_size:
        raise ShapeMismatch(
            f"map {m.shape} must be upsampled to mask resolution {gt.image_size}"
        )


def obj_iou(
    m: ActivationMap, gt: GroundTruthMaskSet, threshold: float | None = None
) -> tuple[float, dict[str, float]]:
    """Best spatial overlap between the Otsu-binarized prediction and any
    class mask; an empty prediction against an empty mask scores 0."""
    _check_resolution(m, gt)
    tau = otsu_threshold(m) if threshold is None else threshold
    pred = m.values >= tau
    per_class: dict[str, float] = {}
    for name, mask in gt.masks:
        inter = np.logical_and(pred, mask).sum()
        union = np.logical_or(pred, mask).sum()
        per_class[name] = float(inter / union) if union else 0.0
    best = max(per_class.values()) if per_class else 0.0
    return best, per_class


def contrast(m: ActivationMap, gt: GroundTruthMaskSet) -> float:
    """Mean activation inside the ground-truth union over mean outside
    (epsilon-guarded); an all-foreground mask keeps the ratio finite."""
    _check_resolution(m, gt)
    fg = gt.union()
    fg_mean = float(m.values[fg].mean()) if fg.any() else 0.0
    bg = ~fg
    bg_mean = float(m.values[bg].mean()) if bg.any() else 0.0
    return fg_mean / (bg_mean + EPSILON)


def concentration(m: ActivationMap, gt: GroundTruthMaskSet) -> float:
    """Share of total activation mass falling inside the ground-truth
    union."""
    _check_resolution(m, gt)
    fg = gt.union()
    total = float(m.values.sum())
    inside = float(m.values[fg].sum())
    return inside / (total + EPSILON)


def f3_score(obj_iou_value: float, contrast_value: float, concentration_value: float) -> float:
    """Harmonic mean of IoU, contrast clipped at 20x, and concentration;
    zero if any component is zero."""
    clipped = min(contrast_value / CONTRAST_CAP, 1.0)
    if obj_iou_value <= 0.0 or clipped <= 0.0 or concentration_value <= 0.0:
        return 0.0
    return 3.0 / (1.0 / obj_iou_value + 1.0 / clipped + 1.0 / concentration_value)


def evaluate_sample(m: ActivationMap, gt: GroundTruthMaskSet, sample_id: str = "") -> MetricReport:
    """Upsample a grid-resolution map to the mask resolution and compute the
    full metric quartet."""
    if m.shape != gt.image_size:
        m = upsample_to_mask(m, gt.image_size)
    tau = otsu_threshold(m)
    iou, per_class = obj_iou(m, gt, threshold=tau)
    r_c = contrast(m, gt)
    c_t = concentration(m, gt)
    return MetricReport(
        sample_id=sample_id,
        obj_iou=iou,
        contrast=r_c,
        concentration=c_t,
        f3=f3_score(iou, r_c, c_t),
        per_class_iou=per_class,
        otsu_threshold=tau,
    )
