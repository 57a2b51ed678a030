"""Eulerian return-map solver for quasistatic fluid-structure interaction.

A single velocity field is solved on a fixed grid each step; the solid and
fluid phases are told apart by where the return map sends each point.
"""
from . import _threads  # noqa: F401  (must run before numpy loads)

from .config import RunConfig, dump_defaults, parse_config, parse_config_text, sample_config_path
from .constitutive import Disk, FluidParams, Geometry, MaterialSpec, Rect, SolidParams
from .engine import EnergyReport, SimState, Simulation
from .fields import Grid
from .momentum import MomentumProblem, SolverConfig, solve_velocity

__version__ = "0.1.0"

__all__ = [
    "Disk",
    "EnergyReport",
    "FluidParams",
    "Geometry",
    "Grid",
    "MaterialSpec",
    "MomentumProblem",
    "Rect",
    "RunConfig",
    "SimState",
    "Simulation",
    "SolidParams",
    "SolverConfig",
    "dump_defaults",
    "parse_config",
    "parse_config_text",
    "sample_config_path",
    "solve_velocity",
]
