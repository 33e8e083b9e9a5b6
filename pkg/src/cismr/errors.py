"""Exception types.

``ValidationError`` covers bad user input (files, flags, shapes);
``NumericalError`` covers failures of the numerical pipeline on valid input.
The CLI maps them to exit codes 2 and 3.
"""


class CisMRError(Exception):
    pass


class ValidationError(CisMRError, ValueError):
    pass


class NumericalError(CisMRError, ArithmeticError):
    pass


class SelectionError(NumericalError):
    """No estimated factor passed the relevance pre-test."""


class RareSelectionError(NumericalError):
    """Too few Monte-Carlo draws reproduce the observed selection event."""
