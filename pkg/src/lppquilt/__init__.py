"""Brownian last passage percolation laboratory: polymers, forests and patchwork quilts."""
from .env import BrownianField, GridSpec, build_grid, sample_field
from .lpp import Staircase, geodesic, last_passage_profile, last_passage_value
from .profiles import MINUS_INFINITY, InitialCondition, f_rewarded_profile, narrow_wedge_profile
from .scaled import Polymer, ScaledPoint, polymer, weight

__version__ = "0.1.0"

__all__ = [
    "BrownianField", "GridSpec", "build_grid", "sample_field",
    "Staircase", "geodesic", "last_passage_profile", "last_passage_value",
    "MINUS_INFINITY", "InitialCondition", "f_rewarded_profile", "narrow_wedge_profile",
    "Polymer", "ScaledPoint", "polymer", "weight",
]
