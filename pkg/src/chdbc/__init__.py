"""Structure-preserving finite-difference solver for the 1-D Cahn-Hilliard
equation with dynamic or Neumann boundary conditions."""

from .config import RunConfig, builtin_ic, load_config, parse_config
from .convergence import OrderReport, RefinementLadder, interp_space, interp_spacetime, refine_and_measure
from .energy import (
    BoundPack,
    ConditionReport,
    EnergyReport,
    discrete_energy,
    discrete_mass,
    dissipation_rate,
    energy_ledger,
    neumann_energy,
    neumann_ledger,
    refined_bound,
    stability_bound,
    timestep_condition,
)
from .grid import Grid
from .linear import assemble, factorize, solve
from .potential import DoubleWell
from .stepper import SchemeParams, SimulationTrace, StepFailure, psi_apply, run, step

__version__ = "0.1.0"
