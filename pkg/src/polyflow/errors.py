"""Exception hierarchy shared by all polyflow modules."""


class PolyflowError(Exception):
    """Base class for all library errors."""


class EmptyInput(PolyflowError):
    pass


class DegenerateNumerics(PolyflowError):
    pass


class PointOutside(PolyflowError):
    pass


class EmptyStratum(PolyflowError):
    pass


class NotSimple(PolyflowError):
    pass


class IsSimple(PolyflowError):
    pass


class ChartViolation(PolyflowError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class CoverFailure(PolyflowError):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class IncompatibleFamily(PolyflowError):
    def __init__(self, message, faces=None, point=None, discrepancy=None):
        super().__init__(message)
        self.faces = faces
        self.point = point
        self.discrepancy = discrepancy


class NotStratified(PolyflowError):
    pass


class StratificationFailure(PolyflowError):
    pass


class StepFailure(PolyflowError):
    pass


class ConstraintEscape(PolyflowError):
    def __init__(self, message, violation=None):
        super().__init__(message)
        self.violation = violation


class BaseMismatch(PolyflowError):
    pass


class NotVanishing(PolyflowError):
    def __init__(self, message, sup_norm=None):
        super().__init__(message)
        self.sup_norm = sup_norm


class BudgetExhausted(PolyflowError):
    def __init__(self, message, best=None, residual=None):
        super().__init__(message)
        self.best = best
        self.residual = residual


class ParseError(PolyflowError):
    def __init__(self, message, line=None, column=None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class UnknownSymbol(ParseError):
    pass
