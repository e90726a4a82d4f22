"""Contextual background attenuation.

A composite threshold built from four statistical descriptors (median and
mean of the nonzero values, the global 0.60 quantile, and the peak) marks
background pixels, which are then softly attenuated with a retention floor:
no hard truncation, no amplification, and ordering among background pixels
is preserved.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ActivationMap, ConfigError, map_stats, normalize_minmax, quantile


@dataclass(frozen=True)
class CbaParams:
    """Descriptor weights put most mass on robust central statistics with a
    small peak anchor; gamma is the attenuation's retention lower bound."""

    weights: tuple[float, float, float, float] = (0.35, 0.25, 0.25, 0.15)
    gamma: float = 0.5

    def __post_init__(self):
        if len(self.weights) != 4 or any(w < 0 for w in self.weights):
            raise ConfigError("weights must be four non-negative numbers")
        if not (0.0 < self.gamma <= 1.0):
            raise ConfigError("gamma must lie in (0, 1]")


def background_threshold(m: ActivationMap, params: CbaParams | None = None) -> float:
    """Weighted sum of (median_nonzero, Q0.60 over all pixels, mean_nonzero,
    max); the nonzero descriptors are 0 on an all-zero map."""
    params = params or CbaParams()
    stats = map_stats(m)
    descriptors = (
        stats.median_nonzero,
        quantile(m, 0.60),
        stats.mean_nonzero,
        stats.max,
    )
    return float(sum(w * s for w, s in zip(params.weights, descriptors)))


def cba(
    m: ActivationMap,
    params: CbaParams | None = None,
    renormalize: bool = True,
) -> ActivationMap:
    """Attenuate pixels below the composite threshold by
    ``M * max(gamma, M / tau_bg)``; pixels at or above the threshold are
    untouched.  The factor never exceeds 1, so attenuation-only semantics
    hold pointwise."""
    params = params or CbaParams()
    tau = background_threshold(m, params)
    values = m.values
    if tau <= 0.0:
        return m if m.normalized or not renormalize else normalize_minmax(m)
    factor = np.minimum(np.maximum(params.gamma, values / tau), 1.0)
    out = np.where(values < tau, values * factor, values)
    result = ActivationMap(out, normalized=False)
    return normalize_minmax(result) if renormalize else result
