"""Numerical toolkit for isothermal compressible multi-species flow in one dimension."""
from .errors import MixflowError
from .grid import Grid
from .mixture import NormalState, PrimitiveState, SpeciesParams, psi_forward, psi_inverse, thermo_eval

__version__ = "0.1.0"

__all__ = [
    "Grid",
    "MixflowError",
    "NormalState",
    "PrimitiveState",
    "SpeciesParams",
    "psi_forward",
    "psi_inverse",
    "thermo_eval",
]
