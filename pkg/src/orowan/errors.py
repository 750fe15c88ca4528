"""Exception types shared across the simulators and solvers."""


class SimulationError(RuntimeError):
    """A run had to be aborted for a numerical reason."""


class OrderingError(SimulationError):
    """Dislocation ordering was violated during time stepping (dt too large)."""

    def __init__(self, step, message=None):
        self.step = step
        super().__init__(message or f"dislocation crossing detected at step {step}")


class CoincidenceError(SimulationError):
    """Two dislocations came closer than the allowed minimum gap."""

    def __init__(self, step=None, message=None):
        self.step = step
        super().__init__(message or f"coincident dislocations at step {step}")


class StabilityError(SimulationError):
    """A stability (CFL / monotonicity) bound was violated."""
