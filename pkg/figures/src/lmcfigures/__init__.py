"""Figure regeneration for the sampling benchmark's result files.

This package never runs a sampler. It reads the CSV, config.toml and PGM
files the ``proxlmc`` command writes and turns them into the standard
plots: chain trajectories with burn-in shading and divergence markers,
step-size sweeps of the relative error or coefficient of variation, plus
grids of posterior images.
"""

from .render import build, render
from .sources import (
    SummaryRow,
    Trajectory,
    read_pgm,
    read_sidecar_config,
    read_summary,
    read_trajectory,
)
from .spec import KINDS, FigureSpec, SchemaError, expand_inputs, load_specs

__all__ = [
    "KINDS",
    "FigureSpec",
    "SchemaError",
    "SummaryRow",
    "Trajectory",
    "build",
    "expand_inputs",
    "load_specs",
    "read_pgm",
    "read_sidecar_config",
    "read_summary",
    "read_trajectory",
    "render",
]

__version__ = "0.1.0"
