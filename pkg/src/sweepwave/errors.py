"""Exception hierarchy shared by all sweepwave modules."""


class SweepwaveError(Exception):
    """Base class for every error raised by this package."""


class InvalidParams(SweepwaveError, ValueError):
    pass


class MuOutOfRange(InvalidParams):
    pass


class NonGenericParameters(SweepwaveError):
    """Two candidate event times of the limit system coincide.

    The limit is only defined when every wave has a unique minimiser, so
    ties abort the construction instead of being broken arbitrarily.
    """

    def __init__(self, wave_index, candidates, message=None):
        self.wave_index = wave_index
        self.candidates = dict(candidates)
        if message is None:
            message = f"tied event candidates at wave {wave_index}: {self.candidates}"
        super().__init__(message)


class OutOfHorizon(SweepwaveError, ValueError):
    pass


class OutOfRegime(SweepwaveError, ValueError):
    pass


class ConditionViolated(SweepwaveError):
    def __init__(self, index, message=None):
        self.index = index
        super().__init__(message or f"regime conditions violated at iterate {index}")


class SimulationError(SweepwaveError):
    pass


class Overflow(SimulationError, OverflowError):
    pass


class EventBudgetExceeded(SimulationError):
    """Raised when a simulation hits its event cap; carries the partial run."""

    def __init__(self, message, trajectory=None):
        self.trajectory = trajectory
        super().__init__(message)


class RngExhausted(SimulationError):
    pass


class DegenerateLog(SweepwaveError, ValueError):
    pass


class WindowOverlapsEvent(SweepwaveError, ValueError):
    pass


class StepTooLarge(SweepwaveError, ValueError):
    pass


class ConfigError(SweepwaveError):
    pass


class ParseError(ConfigError):
    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if line is not None:
            where.append(f"line {line}")
        if key is not None:
            where.append(f"key {key!r}")
        suffix = f" ({', '.join(where)})" if where else ""
        super().__init__(message + suffix)


class MissingField(ConfigError):
    def __init__(self, field):
        self.field = field
        super().__init__(f"missing required field: {field}")


class ConflictingStop(ConfigError):
    pass
