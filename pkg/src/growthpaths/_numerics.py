"""Small shared linear-algebra helpers."""

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import DegeneracyError

JITTER = 1e-10
# relative eigenvalue floor below which the jitter is not allowed to rescue a system
RANK_TOL = 1e-13


def solve_normal(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve symmetric positive semidefinite normal equations.

    A ridge of ``1e-10`` times the mean diagonal is added for conditioning.
    Raises :class:`DegeneracyError` if the matrix is numerically rank
    deficient (smallest eigenvalue below ``1e-13`` of the largest).
    """
    mat = 0.5 * (mat + mat.T)
    evals = np.linalg.eigvalsh(mat)
    top = evals[-1]
    if not np.isfinite(top) or top <= 0 or evals[0] < RANK_TOL * top:
        raise DegeneracyError("normal matrix is singular")
    ridge = JITTER * float(np.trace(mat)) / mat.shape[0]
    jittered = mat + ridge * np.eye(mat.shape[0])
    try:
        factor = cho_factor(jittered)
    except np.linalg.LinAlgError:
        raise DegeneracyError("normal matrix is not positive definite") from None
    return cho_solve(factor, rhs)
