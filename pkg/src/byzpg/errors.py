"""Exception types shared across the simulator."""


class ConfigurationError(ValueError):
    """A configuration value or combination of values is invalid."""


class SimulationError(RuntimeError):
    """A numeric invariant broke during a run (non-finite value, bad state)."""


class UnsupportedOperationError(RuntimeError):
    """The requested operation does not apply to this environment or mode."""
