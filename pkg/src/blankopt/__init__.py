"""Blank-shape optimisation through SDF latent spaces and field surrogates.

Geometry, grids and the forming oracle import with numpy and scipy only; the
network modules (``nn``, ``autodecoder``, ``iaism``, ``optimizer``) pull in
torch when imported.
"""
from .config import Config, ConfigError
from .fields import GridKind, GridSpec, ScalarGrid, extract_contour, flip, rasterize_sdf, read_grid, write_grid
from .geometry import (
    BlankDesign,
    Param,
    RegionChoices,
    active_parameters,
    build_contour,
    build_reference,
    validate_design,
)
from .oracle import OracleConfig, maxima, simulate
from .sampling import SamplingPlan, generate_splits, lhs, sample_designs

__version__ = "0.1.0"

__all__ = [
    "BlankDesign", "Config", "ConfigError", "GridKind", "GridSpec", "OracleConfig", "Param", "RegionChoices",
    "SamplingPlan", "ScalarGrid", "active_parameters", "build_contour", "build_reference", "extract_contour",
    "flip", "generate_splits", "lhs", "maxima", "rasterize_sdf", "read_grid", "sample_designs", "simulate",
    "validate_design", "write_grid",
]
