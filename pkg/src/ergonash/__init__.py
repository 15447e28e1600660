"""Numerical toolkit for ergodic N-player games on the torus and their mean-field limit."""

__version__ = "0.1.0"

from .catalog import CouplingSpec, LagrangianSpec, hamiltonian, eval_lagrangian  # noqa: F401
from .errors import ConfigurationError, SolverError, VelocityGridTooSmall  # noqa: F401
from .grids import TorusGrid, VelocityGrid  # noqa: F401
from .measures import PhaseMeasure, StateMeasure, marginal, wasserstein1  # noqa: F401
