"""
Exceptions raised by LossRank.
"""


class LossRankError(Exception):
    """Base class for every error the library raises on purpose"""


class DomainError(LossRankError, ValueError):
    """Argument outside the domain of the operation"""


class ShapeRangeError(LossRankError, ValueError):
    """Gamma shape above the supported maximum"""


class NumericInstabilityError(LossRankError, ArithmeticError):
    """Cancellation broke a closed-form evaluation; use the quadrature form"""


class InsufficientAcceptanceError(LossRankError):
    """Too few Monte Carlo draws survived rejection"""


class DimensionMismatchError(LossRankError, ValueError):
    pass


class KinkProximityError(LossRankError):
    """Finite differences would straddle the hinge kink"""


class SampleSizeError(LossRankError, ValueError):
    pass


class EmptyLabeledSetError(LossRankError):
    pass


class BatchSizeError(LossRankError, ValueError):
    pass


class ConfigError(LossRankError):
    """Invalid run configuration; the message starts with the field path"""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field


class InputFormatError(LossRankError):
    """Unparseable input file; the message carries path and line number"""
