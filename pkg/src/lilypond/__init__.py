"""Lilypond model: exact radii, stopping sets, clusters and certified experiments."""

from .geometry import Config, GeometryError, Window, ball_volume
from .model import InfiniteRadiusError, RadiiAssignment, solve, verify
from .sampling import SeedSpec, add_point, sample_binomial, sample_poisson
from .stabilization import in_G, stab_radius, stopping_set

__all__ = [
    "Config",
    "GeometryError",
    "InfiniteRadiusError",
    "RadiiAssignment",
    "SeedSpec",
    "Window",
    "add_point",
    "ball_volume",
    "in_G",
    "sample_binomial",
    "sample_poisson",
    "solve",
    "stab_radius",
    "stopping_set",
    "verify",
]
