"""Exception types shared across the package."""


class FuzzyDistillError(Exception):
    """Base class for errors raised by this package."""


class InvalidInputError(FuzzyDistillError, ValueError):
    """Arguments violate a precondition (shape, finiteness, range)."""


class ModelFormatError(FuzzyDistillError, ValueError):
    """A model document failed to parse or validate. The message starts with the field path."""


class DatasetFormatError(FuzzyDistillError, ValueError):
    """A dataset or trajectory file failed to parse. The message names the line."""


class NumericalError(FuzzyDistillError, ArithmeticError):
    """A linear system could not be solved."""
