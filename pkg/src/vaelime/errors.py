"""Exception hierarchy shared by all vaelime modules."""


class VaeLimeError(Exception):
    """Base class for every error raised by this package."""


class DimensionMismatch(VaeLimeError, ValueError):
    pass


class NotPositiveDefinite(VaeLimeError, ArithmeticError):
    """A Cholesky pivot fell below the positivity threshold.

    Usually means the normal equations are rank deficient; raising the
    ridge penalty is the standard fix.
    """


class DegenerateSystem(VaeLimeError, ArithmeticError):
    """The weighted least-squares system could not be solved, even with the ridge floor."""


class NonFiniteLoss(VaeLimeError, ArithmeticError):
    """Training diverged. Try a lower learning rate or KL weight."""


class NonFiniteInput(VaeLimeError, ValueError):
    pass


class WrongKind(VaeLimeError, TypeError):
    pass


class BlackBoxError(VaeLimeError, RuntimeError):
    """A black-box query failed; ``index`` locates the offending sample."""

    def __init__(self, index, message):
        super().__init__(f"black-box prediction failed at sample {index}: {message}")
        self.index = index


class DataError(VaeLimeError, ValueError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None, column=None):
        where = []
        if row is not None:
            where.append(f"row {row}")
        if column is not None:
            where.append(f"column {column!r}")
        loc = f" ({', '.join(where)})" if where else ""
        super().__init__(f"{message}{loc}")
        self.row = row
        self.column = column


class NonFiniteValue(ParseError):
    pass


class DuplicateHeader(DataError):
    pass


class EmptyDataset(DataError):
    pass


class SchemaError(VaeLimeError, ValueError):
    """A serialized model file does not match the expected JSON schema."""
