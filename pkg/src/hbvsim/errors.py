"""Exception hierarchy. Each class maps to a CLI exit code."""


class HbvError(Exception):
    exit_code = 1


class ConfigError(HbvError, ValueError):
    """Invalid parameters, scenario or CLI configuration."""

    exit_code = 2


class NumericalError(HbvError, ArithmeticError):
    """Integration failure: non-finite state, step underflow, work limit."""

    exit_code = 3


class StiffnessError(NumericalError):
    pass


class HistoryError(NumericalError):
    """Delay history queried outside the recorded range."""


class DataError(HbvError):
    """Malformed or missing input data (mouse series, snapshots)."""

    exit_code = 4


class DegenerateRegressionError(HbvError, ValueError):
    """Rank-deficient design in a partial correlation."""


class UndefinedCorrelationError(HbvError, ValueError):
    """Correlation of a zero-variance vector."""
