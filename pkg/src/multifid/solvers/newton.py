"""Newton iteration with convergence diagnostics."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from ..errors import NewtonError
from .linalg import LU


@dataclass
class NewtonResult:
    x: np.ndarray
    iterations: int
    residual_norm: float
    slow_convergence: bool = False
    history: list = field(default_factory=list)


def newton_solve(residual: Callable, jacobian: Callable, x0, tol: float = 1e-10,
                 max_iter: int = 50, least_squares: bool = False, rcond: float = 1e-10) -> NewtonResult:
    """Solve ``residual(x) = 0`` to ``‖residual‖_∞ < tol``.

    Parameters
    ----------
    least_squares : bool
        Use minimum-norm steps (``lstsq``); handles consistent
        rank-deficient systems such as rotational symmetry.
    rcond : float
        Relative singular-value cutoff for the least-squares steps; modes
        below it (numerically zero) are left untouched.

    Returns
    -------
    NewtonResult
        ``slow_convergence`` is set when the residual contracted by less
        than a factor 10 in each of the last three iterations, i.e. at a
        linear rate, the signature of a singular Jacobian at the root.

    Raises
    ------
    NewtonError
        Iteration limit exceeded or non-finite residual.
    SingularMatrixError
        Jacobian numerically singular (square solve only).
    """
    x = np.array(x0, dtype=float, ndmin=1)
    r = np.atleast_1d(np.asarray(residual(x), dtype=float))
    hist = [float(np.max(np.abs(r)))]
    it = 0
    while hist[-1] >= tol:
        if it >= max_iter:
            raise NewtonError(f"no convergence in {max_iter} iterations, |r|_inf = {hist[-1]:.3e}")
        J = np.atleast_2d(np.asarray(jacobian(x), dtype=float))
        if least_squares:
            dx = np.linalg.lstsq(J, -r, rcond=rcond)[0]
        else:
            dx = LU(J).solve(-r)
        x = x + dx
        r = np.atleast_1d(np.asarray(residual(x), dtype=float))
        it += 1
        norm = float(np.max(np.abs(r)))
        if not np.isfinite(norm):
            raise NewtonError("non-finite residual during Newton iteration")
        hist.append(norm)
    slow = len(hist) >= 4 and all(hist[k + 1] > 0.1 * hist[k] for k in range(len(hist) - 4, len(hist) - 1))
    return NewtonResult(x=x, iterations=it, residual_norm=hist[-1], slow_convergence=slow, history=hist)
