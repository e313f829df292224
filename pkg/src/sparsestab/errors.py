"""Exception types shared across the package.

Every error carries a stable ``code`` string so the CLI can emit
machine-parsable one-line diagnostics.
"""


class SparseStabError(Exception):
    """Base class for all package errors."""

    code = "Error"


class ValidationError(SparseStabError):
    """Invalid parameter, argument, or configuration value."""

    code = "ValidationError"


class NonRectangular(ValidationError):
    code = "NonRectangular"


class NonFinite(ValidationError):
    code = "NonFinite"


class ColumnNotUnitNorm(ValidationError):
    code = "ColumnNotUnitNorm"

    def __init__(self, index, norm):
        self.index = index
        self.norm = norm
        super().__init__(f"column {index} has norm {norm!r}, expected 1 within 1e-12")


class ZeroColumn(ValidationError):
    code = "ZeroColumn"

    def __init__(self, index):
        self.index = index
        super().__init__(f"column {index} has (near-)zero norm and cannot be normalized")


class NotPowerOfTwo(ValidationError):
    code = "NotPowerOfTwo"

    def __init__(self, n):
        self.n = n
        super().__init__(f"n={n} is not a power of two")


class DimensionMismatch(ValidationError):
    code = "DimensionMismatch"


class IoFailure(SparseStabError):
    code = "IoFailure"


class ParseFailure(SparseStabError):
    code = "ParseFailure"

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column})" if column is not None else ")")
        super().__init__(f"{message}{where}")


class BudgetExceeded(SparseStabError):
    code = "BudgetExceeded"

    def __init__(self, required, budget):
        self.required = required
        self.budget = budget
        super().__init__(f"enumeration needs {required} subsets, budget is {budget}")


class PreconditionViolated(SparseStabError):
    code = "PreconditionViolated"


class SupportTooLarge(SparseStabError):
    code = "SupportTooLarge"


class NoSolutionWithinBudget(SparseStabError):
    code = "NoSolutionWithinBudget"


class NotConverged(SparseStabError):
    code = "NotConverged"


class EmptyInput(ValidationError):
    code = "EmptyInput"
