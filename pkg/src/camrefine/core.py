"""Shared domain types for activation-map processing.

All map math runs on 64-bit floats internally; the interchange files
(see :mod:`camrefine.io`) are 32-bit.  Every type here is an immutable
value after construction and every operation is a pure function, so
instances are safe to share across threads.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


class CamRefineError(Exception):
    """Base class for all toolkit errors."""


class InvalidMap(CamRefineError):
    """Raised when grid values are non-finite or negative."""


class ShapeMismatch(CamRefineError):
    """Raised when paired grids disagree on shape."""


class NoSteps(CamRefineError):
    """Raised when a sample carries no denoising-step records."""


class SpanOutOfRange(CamRefineError):
    """Raised when a hidden sequence is too short to hold the image span."""


class InvalidKernel(CamRefineError):
    """Raised for even or out-of-range smoothing kernel sizes."""


class NoVariants(CamRefineError):
    """Raised when a variant report is requested without variant labels."""


class ConfigError(CamRefineError):
    """Raised for malformed or out-of-range configuration."""


def _as_map_array(values) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise InvalidMap(f"activation map must be 2-D and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidMap("activation map contains non-finite entries")
    if arr.min() < 0:
        raise InvalidMap("activation map contains negative entries")
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ActivationMap:
    """A 2-D non-negative float grid, the unit all refinement and metric
    operations consume and produce.

    ``normalized`` is set once the grid has been min-max scaled to [0, 1].
    Constant nonzero grids normalize to all-ones (not all-zeros) so that
    foreground statistics stay meaningful.
    """

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        arr = _as_map_array(self.values)
        object.__setattr__(self, "values", arr)
        if self.normalized:
            lo, hi = float(arr.min()), float(arr.max())
            constant_ok = lo == hi and hi in (0.0, 1.0)
            if not constant_ok and not (lo == 0.0 and hi == 1.0):
                raise InvalidMap(
                    f"normalized map must span [0, 1] or be constant 0/1, got [{lo}, {hi}]"
                )

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]

    def with_values(self, values, normalized: bool = False) -> "ActivationMap":
        return ActivationMap(values, normalized=normalized)


@dataclass(frozen=True)
class FeatureStack:
    """Per-channel spatial feature planes captured at one denoising step."""

    channels: np.ndarray  # (D, H, W)
    step_index: int = 0

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.channels, dtype=np.float64))
        if arr.ndim != 3 or arr.shape[0] < 1:
            raise InvalidMap(f"feature stack must be (D, H, W) with D >= 1, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise InvalidMap("feature stack contains non-finite entries")
        if self.step_index < 0:
            raise InvalidMap("step_index must be >= 0")
        arr.setflags(write=False)
        object.__setattr__(self, "channels", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.channels.shape  # type: ignore[return-value]


class GradientStack(FeatureStack):
    """Gradient planes, shape-identical to their paired :class:`FeatureStack`."""


@dataclass(frozen=True)
class StepRecord:
    """One denoising-step record: hooked sequence length vs. image-span end.

    A step is structurally valid for image-span extraction iff
    ``seq_len >= img_end``; the flag is derived, never stored.
    """

    t: int
    seq_len: int
    img_end: Optional[int] = None

    def __post_init__(self):
        if self.seq_len < 0:
            raise InvalidMap("seq_len must be >= 0")
        if self.img_end is not None and self.img_end < 0:
            raise InvalidMap("img_end must be >= 0")


@dataclass(frozen=True)
class TokenInfo:
    """Response-token metadata: position, Penn-style POS tag, answer flag,
    repeat count of the token string and an optional per-token map path."""

    index: int
    text: str
    pos_tag: str = ""
    is_answer: bool = False
    repeat_count: int = 1
    per_token_map: Optional[str] = None

    def __post_init__(self):
        if self.repeat_count < 1:
            raise InvalidMap("repeat_count must be >= 1")
        if self.is_answer and not self.text:
            raise InvalidMap("answer tokens must have non-empty text")


VARIANT_LABELS = ("concise", "original", "verbose", "repeated")


@dataclass(frozen=True)
class SampleMetadata:
    """The per-sample packing record: prompt offset, token grid shape,
    step records and the token list."""

    sample_id: str
    n_base: int
    grid_h: int
    grid_w: int
    hidden_dim: int = 0
    steps: tuple[StepRecord, ...] = ()
    tokens: tuple[TokenInfo, ...] = ()
    response_text: str = ""
    variant_label: Optional[str] = None

    def __post_init__(self):
        if self.n_base < 0:
            raise InvalidMap("n_base must be >= 0")
        if self.grid_h * self.grid_w < 1:
            raise InvalidMap("token grid must be non-empty")
        if self.variant_label is not None and self.variant_label not in VARIANT_LABELS:
            raise InvalidMap(f"variant_label must be one of {VARIANT_LABELS}")
        object.__setattr__(self, "steps", tuple(self.steps))
        object.__setattr__(self, "tokens", tuple(self.tokens))
        idx = [t.index for t in self.tokens]
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise InvalidMap("token indices must be strictly increasing")

    @property
    def img_span(self) -> int:
        return self.grid_h * self.grid_w

    @property
    def default_img_end(self) -> int:
        return self.n_base + self.img_span


@dataclass(frozen=True)
class GroundTruthMaskSet:
    """Per-class binary masks at image resolution."""

    masks: tuple[tuple[str, np.ndarray], ...]
    image_size: tuple[int, int]

    def __post_init__(self):
        cleaned = []
        for name, m in self.masks:
            arr = np.ascontiguousarray(np.asarray(m, dtype=bool))
            if arr.shape != tuple(self.image_size):
                raise ShapeMismatch(
                    f"mask {name!r} has shape {arr.shape}, expected {tuple(self.image_size)}"
                )
            arr.setflags(write=False)
            cleaned.append((str(name), arr))
        object.__setattr__(self, "masks", tuple(cleaned))
        object.__setattr__(self, "image_size", (int(self.image_size[0]), int(self.image_size[1])))

    @property
    def class_names(self) -> list[str]:
        return [name for name, _ in self.masks]

    def union(self) -> np.ndarray:
        """Union of all class masks (the foreground used by contrast and
        concentration)."""
        out = np.zeros(self.image_size, dtype=bool)
        for _, m in self.masks:
            out |= m
        return out


def normalize_minmax(m: ActivationMap) -> ActivationMap:
    """Min-max scale a map to [0, 1].

    Degenerate conventions: an identically-zero map stays zero; a constant
    nonzero map becomes all-ones.  Idempotent bit-exactly.
    """
    arr = m.values
    lo = arr.min()
    hi = arr.max()
    if hi == lo:
        out = np.zeros_like(arr) if hi == 0.0 else np.ones_like(arr)
    else:
        out = (arr - lo) / (hi - lo)
    return ActivationMap(out, normalized=True)


def quantile(m, q: float) -> float:
    """Linear-interpolation quantile (between closest ranks) of a map's
    entries; ``q`` in [0, 1]."""
    arr = m.values if isinstance(m, ActivationMap) else np.asarray(m, dtype=np.float64)
    return float(np.quantile(arr, q, method="linear"))


@dataclass(frozen=True)
class MapStats:
    """Global activation statistics of one map.

    ``std`` is the population standard deviation (divide by H*W) and
    ``skewness`` the Fisher-Pearson standardized third moment, defined as 0
    for zero-variance maps.  The nonzero statistics are taken over entries
    strictly greater than 0 and fall back to 0 on all-zero maps.
    """

    mean: float
    std: float
    skewness: float
    median_nonzero: float
    mean_nonzero: float
    max: float


def map_stats(m: ActivationMap) -> MapStats:
    arr = m.values
    mu = float(arr.mean())
    centered = arr - mu
    var = float(np.mean(centered * centered))
    std = float(np.sqrt(var))
    if std > 0.0:
        skew = float(np.mean(centered**3) / std**3)
    else:
        skew = 0.0
    nz = arr[arr > 0]
    if nz.size:
        med_nz = float(np.median(nz))
        mean_nz = float(nz.mean())
    else:
        med_nz = 0.0
        mean_nz = 0.0
    return MapStats(
        mean=mu,
        std=std,
        skewness=skew,
        median_nonzero=med_nz,
        mean_nonzero=mean_nz,
        max=float(arr.max()),
    )
