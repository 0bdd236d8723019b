"""Exception types raised across the package."""


class PadlError(Exception):
    """Base class for all errors raised by padl."""


class CircuitError(PadlError, ValueError):
    pass


class UnresonantDrive(PadlError, ValueError):
    def __init__(self, drive_index, nearest_mode, nearest_detuning):
        self.drive_index = drive_index
        self.nearest_mode = nearest_mode
        self.nearest_detuning = nearest_detuning
        super().__init__(
            f"unresonant drive {drive_index}: nearest mode {nearest_mode} "
            f"misses by {nearest_detuning / (2 * 3.141592653589793):.6g} Hz"
        )


class ModelError(PadlError, ValueError):
    pass


class SingularEvaluation(ModelError):
    pass


class FitError(PadlError, RuntimeError):
    def __init__(self, message, residual_trace=None):
        super().__init__(message)
        self.residual_trace = list(residual_trace or [])


class SimulationError(PadlError, RuntimeError):
    pass


class TimestepTooCoarse(SimulationError, ValueError):
    def __init__(self, dt, required):
        self.dt = dt
        self.required = required
        super().__init__(f"dt too coarse: {dt:.4g} s given, need dt <= {required:.4g} s")


class IntegrationBlewUp(SimulationError):
    def __init__(self, last_valid_time):
        self.last_valid_time = last_valid_time
        super().__init__(f"integration blew up after t = {last_valid_time:.6g} s")


class NonphysicalRun(SimulationError):
    pass


class ScheduleError(PadlError, ValueError):
    pass


class UndefinedFidelity(PadlError, ValueError):
    pass


class SteadyStateError(PadlError, RuntimeError):
    pass


class DataError(PadlError, ValueError):
    pass


class ConfigError(PadlError, ValueError):
    """Schema violation in an experiment config; ``field`` names the offending key."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class UnresolvablePhaseSlope(ModelError):
    pass
