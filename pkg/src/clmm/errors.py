"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument is outside the mathematical domain of an operation."""


class LiquidityExhaustedError(DomainError):
    """A buy order asks for more of the risky asset than the pool holds."""


class NotProfitableError(DomainError):
    """Pool fee rate is below the profitability threshold; provision should not happen."""


class InadmissiblePolicyError(DomainError):
    """A policy returned a nonpositive spread."""


class DataError(ValueError):
    """Input data is unusable (too short, empty, degenerate design matrix, ...)."""


class ShapeError(DataError):
    """Array arguments whose lengths must agree do not."""


class SchemaError(DataError):
    """An event file violates the CSV schema.

    ``line`` is the 1-based line number of the first offending row
    (line 1 is the header).
    """

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NumericError(RuntimeError):
    """A numerical routine failed to converge to the requested accuracy."""
