"""Dense LU with pivot diagnostics (LAPACK getrf/getrs through scipy)."""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

from ..errors import SingularMatrixError


class LU:
    """Partial-pivoting factorization of a square matrix, reusable for many
    right-hand sides.

    Raises
    ------
    SingularMatrixError
        If a pivot is zero or below ``n * eps * max|A|``.
    """

    def __init__(self, a: np.ndarray, rtol: float | None = None):
        a = np.asarray(a, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("LU needs a square matrix")
        n = a.shape[0]
        scale = np.max(np.abs(a)) if a.size else 0.0
        if not np.isfinite(scale):
            raise SingularMatrixError("matrix has non-finite entries")
        # singular pivots are reported below with their index, not as a warning
        with np.errstate(all="ignore"), warnings.catch_warnings():
            warnings.simplefilter("ignore", sla.LinAlgWarning)
            self._lu, self._piv = sla.lu_factor(a, check_finite=False)
        diag = np.abs(np.diag(self._lu))
        tol = (rtol if rtol is not None else n * np.finfo(float).eps) * scale
        bad = np.flatnonzero(~(diag > tol))
        if scale == 0.0 or bad.size:
            raise SingularMatrixError("numerically singular matrix", pivot=int(bad[0]) if bad.size else 0)
        self.n = n

    def solve(self, b: np.ndarray) -> np.ndarray:
        return sla.lu_solve((self._lu, self._piv), b, check_finite=False)


def lu_solve(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Solve ``A x = b`` by partial-pivoting LU."""
    return LU(a).solve(np.asarray(b, dtype=float))
