"""Exception types shared across the package."""


class DimensionError(ValueError):
    """An array's shape does not match the consuming interface."""


class SimulationFault(RuntimeError):
    """Non-finite quantities fed into or produced by a physics step."""


class DivergenceError(RuntimeError):
    """Optimization produced non-finite losses or gradients."""


class InfeasibleTaskError(RuntimeError):
    """Rejection sampling could not find a valid initial configuration."""


class TaskConfigError(ValueError):
    """A task file or cascade descriptor is malformed or inconsistent."""
