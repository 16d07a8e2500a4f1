"""Shared exception and warning types.

Every error raised deliberately by this package derives from GradflowError,
so callers (and the command-line driver) can tell expected failure modes
apart from genuine bugs.
"""

from __future__ import annotations


class GradflowError(Exception):
    """Base class for all errors raised on purpose by this package."""


class ShapeError(GradflowError, ValueError):
    """Operands have incompatible or malformed shapes."""


class CsrFormatError(GradflowError, ValueError):
    """A compressed-sparse-row matrix violates its structural invariants."""


class ParseError(GradflowError, ValueError):
    """A data file could not be parsed.

    Carries the file path and 1-based line number of the offending line.
    """

    def __init__(self, path: str, line_no: int, message: str):
        self.path = str(path)
        self.line_no = int(line_no)
        super().__init__(f"{self.path}:{self.line_no}: {message}")


class IntegrityError(GradflowError, ValueError):
    """Loaded dataset files disagree with each other or with known stats."""


class ForwardDivergenceError(GradflowError, FloatingPointError):
    """A forward pass produced non-finite values.

    ``layer`` names the first layer index whose output went non-finite
    (-1 for the input projection, ``num_layers`` for the readout).
    """

    def __init__(self, layer: int, message: str):
        self.layer = int(layer)
        super().__init__(message)


class DepthCapError(GradflowError, ValueError):
    """An exponential-cost closed-form evaluation exceeds its depth cap."""


class FitError(GradflowError, ValueError):
    """A profile has too few usable values to fit a decay line."""


class StateError(GradflowError, RuntimeError):
    """An object was used before the pass that populates it was run."""


class ConfigError(GradflowError, ValueError):
    """An experiment configuration file is malformed or inconsistent."""


class DataError(GradflowError, ValueError):
    """A dataset is missing or unusable (distinct from a parse failure)."""


class BoundViolationError(GradflowError, AssertionError):
    """A checked inequality that should always hold was violated."""


class ConvergenceWarning(UserWarning):
    """An iterative estimator stopped before reaching its tolerance."""
