"""Exception hierarchy.  Each family maps onto a CLI exit code."""


class CoreAssocError(Exception):
    exit_code = 1


class ConfigError(CoreAssocError):
    """Invalid run configuration or command-line arguments."""

    exit_code = 2


class DataError(CoreAssocError):
    """Malformed, inconsistent or insufficient input data."""

    exit_code = 3


class StructuralError(DataError):
    """Shapes, indices or column sets do not line up."""


class EmptySelectionError(DataError):
    pass


class DuplicateCellError(DataError):
    pass


class NumericError(CoreAssocError):
    """A numerical precondition failed (zero variance, rank deficiency, ...)."""

    exit_code = 4


class ZeroVarianceError(NumericError):
    pass


class RankDeficiencyError(NumericError):
    pass


class InsufficientDataError(NumericError):
    pass
