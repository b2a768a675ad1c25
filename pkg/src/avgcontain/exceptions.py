"""Exception types raised across the package."""

import numpy as np


class ConvergenceError(RuntimeError):
    """An iterative kernel hit its iteration cap without converging."""


class SingularMatrixError(np.linalg.LinAlgError):
    """A linear system is singular or too ill-conditioned to trust."""


class InfeasiblePatternError(ValueError):
    """No matrix with unit row and column sums fits the sparsity pattern."""


class InvalidWeightsError(ValueError):
    """A weight matrix violates the invariants required by a protocol."""


class LocalityError(RuntimeError):
    """An agent tried to read a message from a non-neighbor."""


class MissingMessageError(RuntimeError):
    """An in-neighbor failed to deliver its message for the round."""


class NodeWeightError(ValueError):
    """Node weights became too large: some self-weight ``1 - d_i v_i`` went negative."""
