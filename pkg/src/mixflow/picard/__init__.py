"""Fixed-point driver, discrete norms and time extension."""
from .driver import (
    ContractionReport,
    PicardMap,
    Problem,
    Solution,
    check_compatibility,
    picard_map,
    run_fixed_point,
)
from .norms import NormSet, discrete_norms, extend_in_time

__all__ = [
    "ContractionReport",
    "NormSet",
    "PicardMap",
    "Problem",
    "Solution",
    "check_compatibility",
    "discrete_norms",
    "extend_in_time",
    "picard_map",
    "run_fixed_point",
]
