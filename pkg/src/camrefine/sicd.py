"""Single-instance causal debiasing.

Interference is rebuilt from the sample itself instead of cross-image
statistics: diffuse activations of repeated function words plus spatial
outliers beyond mean + z * std.  The subtraction strength is the closed-form
minimizer of ||M - lambda * I||_F^2 clamped to [0, lambda_max], and the whole
stage only fires when the map shows pathological variance or skewness.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from importlib import resources
from typing import Optional, Sequence

import numpy as np

from .core import (
    ActivationMap,
    ConfigError,
    ShapeMismatch,
    TokenInfo,
    map_stats,
    normalize_minmax,
)

FUNCTION_POS_TAGS = frozenset({"DT", "IN", "CC", "TO"})

logger = logging.getLogger(__name__)


def default_stoplist() -> frozenset[str]:
    text = resources.files("camrefine.resources").joinpath("function_words.txt").read_text("utf-8")
    return frozenset(w.strip() for w in text.splitlines() if w.strip())


def load_stoplist(path) -> frozenset[str]:
    with open(path, encoding="utf-8") as fp:
        return frozenset(w.strip().lower() for w in fp if w.strip())


@dataclass(frozen=True)
class SicdParams:
    omega_rep: float = 0.5
    omega_out: float = 0.5
    lambda_max: float = 1.0
    z: float = 2.0
    sigma_gate: float = 0.25
    skew_gate: float = 1.5
    stoplist: frozenset[str] = None  # type: ignore[assignment]

    def __post_init__(self):
        if self.omega_rep < 0 or self.omega_out < 0:
            raise ConfigError("omega weights must be >= 0")
        if self.lambda_max <= 0:
            raise ConfigError("lambda_max must be > 0")
        if self.stoplist is None:
            object.__setattr__(self, "stoplist", default_stoplist())


def is_function_token(tok: TokenInfo, stoplist: frozenset[str]) -> bool:
    if tok.text.lower() in stoplist:
        return True
    return tok.pos_tag in FUNCTION_POS_TAGS and tok.repeat_count >= 2


def interference_rep(
    tokens: Sequence[TokenInfo],
    per_token_maps: Sequence[Optional[ActivationMap]],
    params: SicdParams | None = None,
    shape: tuple[int, int] | None = None,
) -> ActivationMap:
    """Normalized mean of the maps of repeated function tokens; falls back
    to a zero map when no function token carries a stored map."""
    params = params or SicdParams()
    if len(tokens) != len(per_token_maps):
        raise ShapeMismatch("tokens and per_token_maps must align")
    matching = [
        (tok, m) for tok, m in zip(tokens, per_token_maps) if is_function_token(tok, params.stoplist)
    ]
    selected = [m for _, m in matching if m is not None]
    if not selected:
        if matching:
            logger.warning(
                "no per-token maps stored for %d function token(s); "
                "debiasing degrades to outlier-only",
                len(matching),
            )
        if shape is None:
            shape = (1, 1)
        return ActivationMap(np.zeros(shape), normalized=False)
    base_shape = selected[0].shape
    for m in selected[1:]:
        if m.shape != base_shape:
            raise ShapeMismatch(f"per-token map shapes differ: {m.shape} vs {base_shape}")
    mean = np.mean([m.values for m in selected], axis=0)
    return normalize_minmax(ActivationMap(mean))


def interference_out(m: ActivationMap, z: float = 2.0) -> ActivationMap:
    """Soft exceedance above mean + z*std, normalized; zero map when nothing
    exceeds the bound."""
    stats = map_stats(m)
    bound = stats.mean + z * stats.std
    exceed = np.maximum(m.values - bound, 0.0)
    return normalize_minmax(ActivationMap(exceed))


def optimal_lambda(m_values: np.ndarray, i_values: np.ndarray, lambda_max: float = 1.0) -> float:
    """Closed-form minimizer of ||M - lambda*I||_F^2 over [0, lambda_max]:
    the Frobenius projection <M, I> / <I, I>, clamped; 0 for zero I."""
    m_values = np.asarray(m_values, dtype=np.float64)
    i_values = np.asarray(i_values, dtype=np.float64)
    if m_values.shape != i_values.shape:
        raise ShapeMismatch(f"map {m_values.shape} vs interference {i_values.shape}")
    denom = float(np.vdot(i_values, i_values))
    if denom == 0.0:
        return 0.0
    lam = float(np.vdot(m_values, i_values)) / denom
    return min(max(lam, 0.0), float(lambda_max))


def sicd(
    m: ActivationMap,
    tokens: Sequence[TokenInfo] = (),
    per_token_maps: Sequence[Optional[ActivationMap]] = (),
    params: SicdParams | None = None,
    renormalize: bool = True,
) -> ActivationMap:
    """Conditional debiasing: maps without pathological variance or skewness
    pass through bit-identically; otherwise subtract the optimally scaled
    interference and clip at zero."""
    params = params or SicdParams()
    stats = map_stats(m)
    if stats.std <= params.sigma_gate and stats.skewness <= params.skew_gate:
        return m
    m_rep = interference_rep(tokens, per_token_maps, params, shape=m.shape)
    if m_rep.shape != m.shape:
        raise ShapeMismatch(f"per-token maps {m_rep.shape} do not match map {m.shape}")
    m_out = interference_out(m, params.z)
    interference = params.omega_rep * m_rep.values + params.omega_out * m_out.values
    if not interference.any():
        return m
    lam = optimal_lambda(m.values, interference, params.lambda_max)
    clean = np.maximum(m.values - lam * interference, 0.0)
    result = ActivationMap(clean, normalized=False)
    return normalize_minmax(result) if renormalize else result
