"""Cascaded attribute-module policies for planar robots.

A task is modeled as a stack of attributes (reach a target, avoid an
obstacle, respect a door schedule, obey a speed limit, resist a push).
A base policy solves the bare reaching task; each extra attribute gets a
small compensation network that perturbs the action of the stack below
it.  Modules are trained one at a time with PPO under a curriculum that
widens the reset distribution, and can be re-bound to new entities at
evaluation time without retraining.
"""

__version__ = "0.1.0"

from .errors import (
    DimensionError,
    DivergenceError,
    InfeasibleTaskError,
    SimulationFault,
    TaskConfigError,
)

__all__ = [
    "DimensionError",
    "DivergenceError",
    "InfeasibleTaskError",
    "SimulationFault",
    "TaskConfigError",
    "__version__",
]
