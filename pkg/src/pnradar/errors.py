"""Exception types raised across the package."""
from __future__ import annotations

import numpy as np


class PnRadarError(Exception):
    pass


class InconsistentNumerology(PnRadarError, ValueError):
    """Subcarrier spacing and elementary duration disagree."""


class TooLarge(PnRadarError, ValueError):
    """Dense materialization requested beyond the size guard."""


class CholeskyFailure(PnRadarError, np.linalg.LinAlgError):
    """Factorization failed even after the full jitter ladder."""


class PrincipalOutOfRange(PnRadarError, ValueError):
    """Principal delay estimate is outside [0, T)."""


class NotConverged(PnRadarError, RuntimeError):
    """Iterative solver hit ``max_iter`` before reaching ``tol``.

    The best iterate and its residual are attached so callers can decide
    whether to accept them.
    """

    def __init__(self, message, x=None, residual=np.inf, iterations=0):
        super().__init__(message)
        self.x = x
        self.residual = residual
        self.iterations = iterations
