"""Exception hierarchy.

Each family maps to a CLI exit code: configuration problems exit 1, data
problems exit 2, numerical failures exit 3.
"""


class RHLError(Exception):
    exit_code = 1


class ConfigError(RHLError):
    exit_code = 1


class DataError(RHLError, ValueError):
    exit_code = 2


class NumericalError(RHLError, ArithmeticError):
    exit_code = 3


# data problems
class MissingColumn(DataError):
    pass


class NonChronologicalRows(DataError):
    pass


class InconsistentEnumeration(DataError):
    pass


class EmptyDataset(DataError):
    pass


class DuplicateEventTime(DataError):
    pass


class OutOfWindow(DataError):
    pass


class UnknownCategoryLevel(DataError):
    pass


class UnitMismatch(DataError):
    pass


class NoEvents(DataError):
    pass


class GridOutsideBaseline(DataError):
    pass


class InsufficientClusters(DataError):
    pass


class BasisMismatch(DataError):
    pass


class ComponentOutOfRange(DataError):
    pass


class UnmatchedGroupLabel(DataError):
    pass


class DegenerateOutcome(DataError):
    pass


class NegativeIntensity(DataError):
    pass


# numerical failures
class NumericalOverflow(NumericalError):
    pass


class NotConverged(NumericalError):
    pass


class SingularInformation(NumericalError):
    pass


class EigenFailure(NumericalError):
    pass


class RankDeficient(NumericalError):
    pass


class SeparationWarning(UserWarning):
    """Logistic fit hit (quasi-)complete separation; estimates are unreliable."""
