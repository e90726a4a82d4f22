"""camrefine: refinement and evaluation toolkit for activation heatmaps
exported from diffusion multimodal language models."""

from .core import (
    ActivationMap,
    CamRefineError,
    FeatureStack,
    GradientStack,
    GroundTruthMaskSet,
    MapStats,
    SampleMetadata,
    StepRecord,
    TokenInfo,
    map_stats,
    normalize_minmax,
    quantile,
)

__version__ = "0.1.0"

__all__ = [
    "ActivationMap",
    "CamRefineError",
    "FeatureStack",
    "GradientStack",
    "GroundTruthMaskSet",
    "MapStats",
    "SampleMetadata",
    "StepRecord",
    "TokenInfo",
    "map_stats",
    "normalize_minmax",
    "quantile",
    "__version__",
]
