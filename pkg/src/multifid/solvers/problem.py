"""Minimal problem protocol shared by the integrators.

A problem exposes ``n``, ``n_diff`` (differential rows first, algebraic
rows after), ``rhs(t, x) -> ndarray``, ``jacobian(t, x, f0) -> ndarray``
and ``state_name(k)``. ``autonomous`` tells the Rosenbrock method whether
it needs the time derivative of the right-hand side.
"""
from __future__ import annotations

from typing import Callable

import numpy as np

from .jacobian import jacobian_fd


class OdeProblem:
    """Wrap plain callables as a problem.

    Parameters
    ----------
    f : callable ``f(t, x) -> array``
    n : int
    jac : callable ``jac(t, x) -> array``, optional
        Analytic Jacobian; forward differences otherwise.
    n_diff : int, optional
        Number of differential rows (defaults to ``n``).
    """

    def __init__(self, f: Callable, n: int, jac: Callable | None = None, n_diff: int | None = None,
                 autonomous: bool = False, names: list[str] | None = None, fd_eps: float = 1.5e-8):
        self._f, self._jac = f, jac
        self.n = n
        self.n_diff = n if n_diff is None else n_diff
        self.autonomous = autonomous
        self._names = names
        self.fd_eps = fd_eps

    def rhs(self, t: float, x: np.ndarray) -> np.ndarray:
        return np.asarray(self._f(t, x), dtype=float).reshape(self.n)

    def jacobian(self, t: float, x: np.ndarray, f0: np.ndarray | None = None) -> np.ndarray:
        if self._jac is not None:
            return np.asarray(self._jac(t, x), dtype=float).reshape(self.n, self.n)
        return jacobian_fd(lambda y: self.rhs(t, y), x, self.fd_eps, f0=f0)

    @property
    def jacobian_rhs_cost(self) -> int:
        return 0 if self._jac is not None else self.n

    def state_name(self, k: int) -> str:
        return self._names[k] if self._names else f"x[{k}]"
