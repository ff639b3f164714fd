"""Exception hierarchy shared across the package.

The CLI maps ``InputError`` to exit code 2 and ``NumericError`` (with its
subclasses) to exit code 3.
"""


class InputError(ValueError):
    """Invalid user input: bad arguments, malformed files, precondition breaks."""


class NumericError(RuntimeError):
    """A numerical routine failed (factorization, iteration, eigensolve)."""


class ModelError(NumericError):
    """The model instance is unusable: rank deficiency, degeneracy, dimension clash."""


class SolverError(NumericError):
    """A linear solve did not reach the requested tolerance."""


class BracketError(NumericError):
    """Root finding was asked to start from a bracket without a sign change."""


class ConvergenceError(NumericError):
    """An iterative method hit its iteration budget before converging."""
