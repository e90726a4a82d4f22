"""Distribution-aware confidence gating.

A map's global statistics pick one of four routing branches, each with its
own percentile; values above the resulting confidence quantile keep their
raw structure while everything at or below it is replaced by a mild 3x3
Gaussian blur of the full map.  Branch precedence is fixed (high_var,
high_mean, low_mean, default) so routing ratios stay comparable between
runs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import ActivationMap, ConfigError, map_stats, normalize_minmax, quantile

BRANCHES = ("high_var", "high_mean", "low_mean", "default")


@dataclass(frozen=True)
class DacgParams:
    delta_sigma: float = 0.22
    delta_mu: float = 0.35
    delta_mu_prime: float = 0.25
    alpha_high_var: float = 90.0
    alpha_high_mean: float = 75.0
    alpha_low_mean: float = 80.0
    alpha_default: float = 85.0
    blur_kernel: int = 3
    blur_sigma: float = 0.3

    def __post_init__(self):
        for name in ("delta_sigma", "delta_mu", "delta_mu_prime"):
            v = getattr(self, name)
            if not (0.0 < v < 1.0):
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        for name in ("alpha_high_var", "alpha_high_mean", "alpha_low_mean", "alpha_default"):
            v = getattr(self, name)
            if not (0.0 < v < 100.0):
                raise ConfigError(f"{name} must lie in (0, 100), got {v}")
        if self.blur_kernel < 1 or self.blur_kernel % 2 == 0:
            raise ConfigError("blur_kernel must be a positive odd integer")
        if self.blur_sigma <= 0:
            raise ConfigError("blur_sigma must be > 0")

    def alpha_for(self, branch: str) -> float:
        return {
            "high_var": self.alpha_high_var,
            "high_mean": self.alpha_high_mean,
            "low_mean": self.alpha_low_mean,
            "default": self.alpha_default,
        }[branch]


@dataclass(frozen=True)
class DacgBranchLog:
    """Routing outcome for one map: exactly one branch plus the confidence
    threshold it produced."""

    branch: str
    alpha: float
    tau_conf: float
    hc_count: int
    lc_count: int


def select_branch(mu_m: float, sigma_m: float, params: DacgParams) -> tuple[str, float]:
    """Route a map by its statistics; precedence high_var > high_mean >
    low_mean > default."""
    if sigma_m > params.delta_sigma:
        return "high_var", params.alpha_high_var
    if mu_m > params.delta_mu:
        return "high_mean", params.alpha_high_mean
    if mu_m < params.delta_mu_prime:
        return "low_mean", params.alpha_low_mean
    return "default", params.alpha_default


def gaussian_blur(values: np.ndarray, kernel: int = 3, sigma: float = 0.3) -> np.ndarray:
    """Separable spatial Gaussian blur with replicate padding and weights
    normalized to sum 1."""
    half = kernel // 2
    offsets = np.arange(-half, half + 1, dtype=np.float64)
    g = np.exp(-(offsets**2) / (2.0 * sigma**2))
    g /= g.sum()
    pad = np.pad(values, half, mode="edge")
    rows = np.lib.stride_tricks.sliding_window_view(pad, kernel, axis=1) @ g
    cols = np.lib.stride_tricks.sliding_window_view(rows, kernel, axis=0)
    blurred = np.tensordot(cols, g, axes=(2, 0))
    return blurred


def dacg(
    m: ActivationMap,
    params: DacgParams | None = None,
    renormalize: bool = True,
) -> tuple[ActivationMap, DacgBranchLog]:
    """Split the map at the branch percentile and blur only the
    low-confidence side; high-confidence pixels pass through bit-identical
    (pre-renormalization)."""
    params = params or DacgParams()
    stats = map_stats(m)
    branch, alpha = select_branch(stats.mean, stats.std, params)
    tau = quantile(m, alpha / 100.0)
    hc = m.values > tau
    blurred = gaussian_blur(m.values, params.blur_kernel, params.blur_sigma)
    out = np.where(hc, m.values, blurred)
    log = DacgBranchLog(
        branch=branch,
        alpha=alpha,
        tau_conf=tau,
        hc_count=int(hc.sum()),
        lc_count=int(hc.size - hc.sum()),
    )
    result = ActivationMap(out, normalized=False)
    if renormalize:
        result = normalize_minmax(result)
    return result, log
