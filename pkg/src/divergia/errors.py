"""Exception hierarchy shared by all modules."""


class DivergiaError(Exception):
    pass


class DomainError(DivergiaError, ValueError):
    """Input outside an operation's domain (empty sequence, p < 1, mismatched domains...)."""


class PrecisionError(DivergiaError):
    """A digit expansion was asked for more digits than it certifiably holds."""


class BoundViolation(DivergiaError, AssertionError):
    """A proven inequality failed on a concrete instance.

    Either the instance breaks a hypothesis or the implementation is wrong;
    it is never silently tolerated.
    """


class HorizonTooSmall(DivergiaError):
    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class ResourceGuard(DivergiaError):
    """Desk-scale size guard exceeded."""


class ReplayMismatch(DivergiaError):
    def __init__(self, field, recorded, replayed):
        super().__init__(f"replay mismatch in {field}: recorded {recorded!r}, replayed {replayed!r}")
        self.field = field
        self.recorded = recorded
        self.replayed = replayed
