"""Exception hierarchy shared by all qki modules."""


class QkiError(Exception):
    """Base class for every error raised by qki."""


class DuplicateLabel(QkiError):
    pass


class UnknownLabel(QkiError):
    pass


class DimMismatch(QkiError):
    pass


class OverlappingGroups(QkiError):
    pass


class BadRank(QkiError):
    pass


class InvariantViolation(QkiError):
    """A value failed the invariants of its type (Hermiticity, trace, ...)."""


class SingularAverage(QkiError):
    pass


class DegenerateCenterSplit(QkiError):
    pass


class VerificationFailed(QkiError):
    """Post-hoc verification of a decomposition failed; message names the check."""


class IrreducibilityFailure(QkiError):
    pass


class DimTooLarge(QkiError):
    """A dense computation would exceed the feasibility cap."""

    def __init__(self, message, dim=None):
        super().__init__(message)
        self.dim = dim


class NoFeasiblePoint(QkiError):
    pass


class SlackViolation(QkiError):
    pass
