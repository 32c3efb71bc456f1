"""Kinetic and fluid solvers for checking slip-boundary hydrodynamic limits.

The package covers a discrete velocity lattice, BGK and quadrature collision
models, Maxwell accommodation walls, a scaled kinetic channel solver,
relative entropy audits, slip Navier-Stokes and Euler solvers on a MAC grid
and a sweep harness fitting convergence rates.
"""

from .collision import (BGKModel, CollisionError, CollisionKernel, bgk_collision, linearize,
                        solve_A_hat, viscosity)
from .entropy import (EntropyReport, RelativeEntropyAudit, darrozes_guiraud,
                      entropic_convergence_gap, relative_entropy, relative_entropy_inequality_audit)
from .fields import ChannelGeometry, ShearField, ZeroField
from .fluid import FluidSolverError, SlipParams, run_fluid
from .harness import ConvergenceReport, SweepConfig, run_sweep
from .kinetic import AlphaLaw, KineticSolverError, ScalingRegime, init_well_prepared, run_kinetic
from .lattice import VelocityLattice, bracket, build_lattice, half_space_moment
from .wall import WallSpec, apply_accommodation, slip_coefficient

__version__ = "0.1.0"

__all__ = [
    "AlphaLaw", "BGKModel", "ChannelGeometry", "CollisionError", "CollisionKernel",
    "ConvergenceReport", "EntropyReport", "FluidSolverError", "KineticSolverError",
    "RelativeEntropyAudit", "ScalingRegime", "ShearField", "SlipParams", "SweepConfig",
    "VelocityLattice", "WallSpec", "ZeroField", "apply_accommodation", "bgk_collision", "bracket",
    "build_lattice", "darrozes_guiraud", "entropic_convergence_gap", "half_space_moment",
    "init_well_prepared", "linearize", "relative_entropy", "relative_entropy_inequality_audit",
    "run_fluid", "run_kinetic", "run_sweep", "slip_coefficient", "solve_A_hat", "viscosity",
]
