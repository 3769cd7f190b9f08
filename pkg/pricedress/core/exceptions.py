from typing import Optional


class PriceDressError(Exception):
    """Base class for all pricedress errors"""


class MalformedInputError(PriceDressError, ValueError):
    """Raised for NaN or otherwise unusable numeric input"""


class CurveValidationError(PriceDressError):
    """A bid/ask curve violates one of the step-curve invariants"""

    def __init__(self, message: str, date=None, hour: Optional[int] = None,
                 side: Optional[str] = None, row: Optional[int] = None):
        self.reason = message
        self.date = date
        self.hour = hour
        self.side = side
        self.row = row
        location = []
        if date is not None:
            location.append(f"date={date}")
        if hour is not None:
            location.append(f"hour={hour}")
        if side is not None:
            location.append(f"side={side}")
        if row is not None:
            location.append(f"row={row}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)


class DataValidationError(PriceDressError):
    """An input table is malformed (missing columns, bad values, empty file)"""


class DisjointDomainsError(PriceDressError):
    """Bid and ask curves share no volume interval"""


class InsufficientHistoryError(PriceDressError):
    """Not enough past observations to fit an estimator"""

    def __init__(self, message: str, required: Optional[int] = None,
                 available: Optional[int] = None):
        self.required = required
        self.available = available
        if required is not None and available is not None:
            message = f"{message} (required {required}, available {available})"
        super().__init__(message)


class LengthMismatchError(PriceDressError, ValueError):
    """Paired score sequences differ in length or are too short"""


class ConfigError(PriceDressError):
    """Invalid configuration file or override"""


class OutputExistsError(PriceDressError):
    """An output would be overwritten without the force flag"""


class UsageError(PriceDressError):
    """Bad command-line usage, such as a missing input file or a malformed flag"""
