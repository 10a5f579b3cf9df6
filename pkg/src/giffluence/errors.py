"""Exception hierarchy.

Errors fall into three families that the command line maps to exit codes:
configuration problems (2), bad input data (3) and estimation failures (4).
Each concrete class carries a short ``code`` matching the names used in the
documentation (``MALFORMED_RECORD``, ``RANK_DEFICIENT`` ...).
"""

from __future__ import annotations


class GiffluenceError(Exception):
    code = "ERROR"
    exit_code = 1

    def __init__(self, message: str = "", **context):
        self.context = context
        super().__init__(message or self.code)


class ConfigError(GiffluenceError, ValueError):
    code = "CONFIG"
    exit_code = 2


class DataError(GiffluenceError, ValueError):
    code = "DATA"
    exit_code = 3


class EstimationError(GiffluenceError, ArithmeticError):
    code = "ESTIMATION"
    exit_code = 4


# corpus
class MalformedRecord(DataError):
    code = "MALFORMED_RECORD"


class MissingTimestamp(DataError):
    code = "MISSING_TIMESTAMP"


class InvalidDeclaration(DataError):
    code = "INVALID_DECLARATION"


class OutOfCalendar(DataError):
    code = "OUT_OF_CALENDAR"


class SchemaMismatch(DataError):
    code = "SCHEMA_MISMATCH"


class GapError(DataError):
    code = "GAP"


# index
class OutOfOrder(DataError):
    code = "OUT_OF_ORDER"


class UnknownGif(DataError, KeyError):
    code = "UNKNOWN_GIF"

    def __str__(self):  # KeyError would repr() the message
        return Exception.__str__(self)


class EmptyLedger(DataError):
    code = "EMPTY_LEDGER"


class ZeroVariance(EstimationError):
    code = "ZERO_VARIANCE"


class TooFewPoints(EstimationError):
    code = "TOO_FEW_POINTS"


class EmptySeries(DataError):
    code = "EMPTY_SERIES"


# metrics
class WindowOutOfRange(DataError):
    code = "WINDOW_OUT_OF_RANGE"


class TooFewFirms(DataError):
    code = "TOO_FEW_FIRMS"


class InsufficientHistory(DataError):
    code = "INSUFFICIENT_HISTORY"


# econ
class RankDeficient(EstimationError):
    code = "RANK_DEFICIENT"


class TooFewRows(EstimationError):
    code = "TOO_FEW_ROWS"


class TooShort(EstimationError):
    code = "TOO_SHORT"


class Degenerate(EstimationError):
    code = "DEGENERATE"


class ConstantInput(EstimationError):
    code = "CONSTANT_INPUT"


class UnknownSeries(ConfigError, KeyError):
    code = "UNKNOWN_SERIES"

    def __str__(self):
        return Exception.__str__(self)
