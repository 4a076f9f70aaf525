class FkpathError(Exception):
    """Base class for errors raised by fkpath."""


class DomainError(FkpathError, ValueError):
    """A time or state lies outside the domain of a path or model."""


class ModelEvaluationError(FkpathError, ArithmeticError):
    """A model callback returned a non-finite or out-of-bound value."""


class ModelConsistencyError(FkpathError, ValueError):
    """A model violates a structural requirement (e.g. invariance of pi_beta)."""


class NumericError(FkpathError, ArithmeticError):
    """An ODE or quadrature routine failed."""


class DegenerateSemigroupError(NumericError):
    """The semigroup Q_{s,t}(1) vanishes at some state."""


class FunctionalError(FkpathError):
    """A path functional failed to evaluate.

    ``index`` is the position of the functional in the battery being evaluated.
    """

    def __init__(self, index: int, message: str):
        super().__init__(f"functional #{index}: {message}")
        self.index = index
