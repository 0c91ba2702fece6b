"""Numerical laboratory for the damped 2-D isentropic Euler half-space problem."""

from .grid import Field, Grid2D
from .model import ModelParams, PressureLaw
from .solver import RunConfig, run

__all__ = ["Field", "Grid2D", "ModelParams", "PressureLaw", "RunConfig", "run"]
__version__ = "0.1.0"
