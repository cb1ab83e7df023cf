"""Exception hierarchy.

Data problems and numerical problems are kept apart so the CLI can map them
to distinct exit codes.
"""

from __future__ import annotations


class ElrError(Exception):
    """Base class for every error raised by the package."""


class DataError(ElrError):
    """Input data cannot be used as given."""


class NumericalError(ElrError):
    """A fit or solve is numerically undefined."""


class DomainError(ElrError, ValueError):
    """An argument lies outside the function's domain."""


# -- data ------------------------------------------------------------------


class EmptyFile(DataError):
    def __init__(self, path):
        super().__init__(f"{path}: no header or no data rows")
        self.path = path


class MissingColumn(DataError):
    def __init__(self, column, available=()):
        msg = f"column {column!r} not found"
        if available:
            msg += f" (available: {', '.join(available)})"
        super().__init__(msg)
        self.column = column


class NonNumericCell(DataError):
    """A CSV cell that does not parse as a finite real.

    ``row`` counts the header as row 1, so the first data row is row 2.
    """

    def __init__(self, row: int, column: str, value: str = ""):
        super().__init__(f"row {row}, column {column!r}: cannot parse {value!r} as a finite real")
        self.row = row
        self.column = column


class ConstantColumn(DataError):
    def __init__(self, column):
        super().__init__(f"column {column!r} has zero range and cannot be rescaled")
        self.column = column


class MissingIndexVariable(DataError):
    def __init__(self):
        super().__init__("varying-coefficient design needs an index variable z")


class LengthMismatch(DataError, ValueError):
    pass


class DimensionMismatch(DataError, ValueError):
    pass


class DegenerateKnots(DataError):
    pass


class OutOfDomain(DomainError):
    def __init__(self, x):
        super().__init__(f"x={x!r} outside [0, 1]")
        self.x = x


class EmptyGrid(ElrError, ValueError):
    pass


class NTooLarge(DataError, ValueError):
    pass


class IndexOutOfRange(DomainError):
    pass


# -- numerical -------------------------------------------------------------


class RankDeficient(NumericalError):
    def __init__(self, rank: int, ncols: int):
        super().__init__(f"design has numerical rank {rank} < {ncols} columns")
        self.rank = rank
        self.ncols = ncols


class NotEnoughRows(NumericalError):
    pass


class DegenerateLeverage(NumericalError):
    def __init__(self, index: int, leverage: float):
        super().__init__(f"observation {index} has leverage {leverage:.17g}; held-out fit undefined")
        self.index = index
        self.leverage = leverage


class RankDeficientOnDeletion(NumericalError):
    def __init__(self, index: int):
        super().__init__(f"design is rank deficient once observation {index} is deleted")
        self.index = index


class SingularAggregate(NumericalError):
    pass


class Infeasible(NumericalError):
    """All scores share one strict sign, so the constraint set is empty."""


class AllZeroScores(NumericalError):
    """Every score is exactly zero; uniform weights already satisfy the constraint."""


class NoConvergence(NumericalError):
    def __init__(self, max_iter: int):
        super().__init__(f"multiplier solve did not converge in {max_iter} iterations")
        self.max_iter = max_iter
