"""Adaptive kernel denoising: dynamic kernel sizing plus rank-weighted
Gaussian filtering.

The kernel grows with trajectory length, spatial variance and resolution;
the filter then sorts each window and applies Gaussian weights to the rank
index (mean fixed at the median rank), which suppresses values occupying
extreme ranks while leaving the dominant signal untouched.  Per-pixel cost
is O(k^2 log k^2) from the window sort.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import ActivationMap, ConfigError, InvalidKernel, map_stats, normalize_minmax


@dataclass(frozen=True)
class AkdParams:
    """Kernel-sizing factors and rank-filter settings.

    The piecewise factor tables are declared defaults, monotone in each
    governing quantity: more denoising steps, higher variance and larger
    grids all widen the kernel.
    """

    k_base: int = 3
    step_count: int = 16
    sigma_rank_scale: float = 1.0 / 6.0
    f_step_breaks: tuple[float, ...] = (16.0, 32.0)
    f_step_values: tuple[float, ...] = (1.0, 1.25, 1.5)
    f_std_breaks: tuple[float, ...] = (0.15, 0.30)
    f_std_values: tuple[float, ...] = (1.0, 1.25, 1.5)
    f_size_ref: float = 24.0
    f_size_clamp: tuple[float, float] = (0.75, 2.0)
    k_max_fraction: float = 1.0

    def __post_init__(self):
        if self.k_base < 3 or self.k_base % 2 == 0:
            raise ConfigError("k_base must be an odd integer >= 3")
        if self.step_count < 1:
            raise ConfigError("step_count must be >= 1")
        if self.sigma_rank_scale <= 0:
            raise ConfigError("sigma_rank_scale must be > 0")
        if not (0 < self.k_max_fraction <= 1.0):
            raise ConfigError("k_max_fraction must be in (0, 1]")
        for breaks, values in (
            (self.f_step_breaks, self.f_step_values),
            (self.f_std_breaks, self.f_std_values),
        ):
            if len(values) != len(breaks) + 1:
                raise ConfigError("factor table needs one more value than breaks")


def _piecewise(x: float, breaks, values) -> float:
    idx = int(np.searchsorted(np.asarray(breaks, dtype=float), x, side="left"))
    return float(values[idx])


def round_to_odd(x: float) -> int:
    """Nearest odd integer, ties toward the smaller odd."""
    return 2 * math.ceil((x - 2.0) / 2.0) + 1


def largest_odd_leq(n: int) -> int:
    return n if n % 2 == 1 else n - 1


def adaptive_kernel_size(
    params: AkdParams,
    sigma_m: float,
    h: int,
    w: int | None = None,
    step_count: int | None = None,
) -> int:
    """Dynamic kernel size: k_base scaled by the step, variance and size
    factors, rounded to the nearest odd integer and clamped to
    [3, largest odd <= k_max_fraction * min(H, W)]."""
    if sigma_m < 0 or h < 1:
        raise ConfigError("sigma_m must be >= 0 and h >= 1")
    w = h if w is None else w
    s = params.step_count if step_count is None else step_count
    k = params.k_base
    k *= _piecewise(float(s), params.f_step_breaks, params.f_step_values)
    k *= _piecewise(float(sigma_m), params.f_std_breaks, params.f_std_values)
    lo, hi = params.f_size_clamp
    k *= min(max(h / params.f_size_ref, lo), hi)
    k_odd = round_to_odd(k)
    cap = largest_odd_leq(int(params.k_max_fraction * min(h, w)))
    cap = max(cap, 3)
    return min(max(k_odd, 3), cap)


def _rank_weights(k: int, sigma_rank: float) -> np.ndarray:
    n = np.arange(1, k * k + 1, dtype=np.float64)
    mu = (k * k + 1) / 2.0
    g = np.exp(-((n - mu) ** 2) / (2.0 * sigma_rank**2))
    return g / g.sum()


def rank_gaussian_filter(m: ActivationMap, k: int, sigma_rank: float) -> ActivationMap:
    """Order-statistic filter with Gaussian weights over the rank index.

    Each pixel's k x k window (edge-replicate padding) is sorted ascending
    and combined with weights centered on the median rank; the output is a
    convex combination, so it stays inside the window's [min, max].
    """
    h, w = m.shape
    if k % 2 == 0 or k < 3 or k > max(3, min(h, w)):
        raise InvalidKernel(f"kernel size {k} invalid for a {h}x{w} map")
    if sigma_rank <= 0:
        raise InvalidKernel("sigma_rank must be > 0")
    pad = k // 2
    padded = np.pad(m.values, pad, mode="edge")
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k))
    flat = windows.reshape(h, w, k * k)
    ordered = np.sort(flat, axis=-1)
    weights = _rank_weights(k, sigma_rank)
    out = ordered @ weights
    # enforce the convex-combination bound bit-exactly against weight
    # round-off
    np.clip(out, ordered[..., 0], ordered[..., -1], out=out)
    return ActivationMap(out, normalized=False)


def akd(
    m: ActivationMap,
    params: AkdParams | None = None,
    step_count: int | None = None,
    renormalize: bool = True,
) -> ActivationMap:
    """Full denoising stage: size the kernel from the map's own statistics,
    rank-filter, then min-max re-normalize."""
    params = params or AkdParams()
    h, w = m.shape
    sigma_m = map_stats(m).std
    k = adaptive_kernel_size(params, sigma_m, h, w, step_count=step_count)
    sigma_rank = params.sigma_rank_scale * k * k
    filtered = rank_gaussian_filter(m, k, sigma_rank)
    return normalize_minmax(filtered) if renormalize else filtered
