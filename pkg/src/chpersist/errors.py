"""Exception hierarchy shared by the simulator and the verification checks."""


class ChPersistError(Exception):
    """Base class for all package errors."""


class PreconditionError(ChPersistError):
    """Hypotheses of a check are not met; the check is refused, not failed."""


class AdmissibilityError(PreconditionError):
    """A weight is not admissible for the requested use."""


class WeightRangeError(ChPersistError, OverflowError):
    """Weight evaluation would overflow double precision."""


class ShapeError(ChPersistError, ValueError):
    """Sampled functions do not live on a common grid."""


class WindowError(PreconditionError):
    """A fit or evaluation window is empty or below the noise floor."""


class DomainTooSmallError(ChPersistError):
    """Solution tails reached the edge of the truncated domain."""

    def __init__(self, t: float, tail: float):
        super().__init__(f"tail max {tail:.3e} exceeds tolerance at t={t:.6g}; enlarge L")
        self.t = t
        self.tail = tail


class UnresolvedDataError(PreconditionError):
    """Initial datum is not resolved by the grid."""


class ConfigError(PreconditionError):
    """Configuration or spec file could not be parsed."""


class BlowUpError(ChPersistError):
    """Numerical breakdown (NaN or gradient blow-up) detected during a step."""

    def __init__(self, t: float, reason: str):
        super().__init__(f"breakdown at t={t:.6g}: {reason}")
        self.t = t
        self.reason = reason
