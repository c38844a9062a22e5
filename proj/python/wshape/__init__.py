"""Singular-value distance analysis and distribution-shaped LoRA initialization."""

from ._wshape import (
    WShapeError,
    __version__,
    analyze,
    characterize,
    classify,
    cosine_distance,
    export_adapter,
    fit_pareto,
    generate,
    reference_order_presets,
    reshape,
    target_preset,
    target_presets,
    top_r_singular_values,
    validate_adapter,
)

__all__ = [
    "WShapeError",
    "__version__",
    "analyze",
    "characterize",
    "classify",
    "cosine_distance",
    "export_adapter",
    "fit_pareto",
    "generate",
    "reference_order_presets",
    "reshape",
    "target_preset",
    "target_presets",
    "top_r_singular_values",
    "validate_adapter",
]
