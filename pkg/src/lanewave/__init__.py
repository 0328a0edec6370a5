"""Two-dimensional traffic flow on multi-lane roads: a follow-the-leader
particle model, its ARZ-type continuum limit, finite-volume solvers and
Riemann problem tools."""

from .core import (
    ConservedState,
    Direction,
    Events,
    InvalidState,
    ModelParams,
    NoPreimage,
    PrimitiveState,
    conserved_to_primitive,
    eigenvalues,
    physical_flux,
    pressure,
    pressure_inverse,
    primitive_to_conserved,
    riemann_invariants,
)
from .fvm import Field1D, Field2D, Grid2D, NumericalFailure, run, step_1d, step_2d
from .micro import Fleet, MicroParams, micro_step, run_micro
from .scenarios import ScenarioSpec, build_scenario

__version__ = "0.1.0"

__all__ = [
    "ConservedState", "Direction", "Events", "InvalidState", "ModelParams", "NoPreimage",
    "PrimitiveState", "conserved_to_primitive", "eigenvalues", "physical_flux", "pressure",
    "pressure_inverse", "primitive_to_conserved", "riemann_invariants",
    "Field1D", "Field2D", "Grid2D", "NumericalFailure", "run", "step_1d", "step_2d",
    "Fleet", "MicroParams", "micro_step", "run_micro",
    "ScenarioSpec", "build_scenario",
]
