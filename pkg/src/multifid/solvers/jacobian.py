"""Finite-difference Jacobians."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import SolverError


def jacobian_fd(f: Callable, x, eps_rel: float = 1.5e-8, f0=None, central: bool = False,
                names=None) -> np.ndarray:
    """Dense Jacobian of ``f`` at ``x``.

    Column ``j`` uses the step ``eps_rel * max(|x_j|, 1)``; forward
    differences by default, central when ``central`` is set.

    Parameters
    ----------
    names : callable or sequence, optional
        Maps a state index to a name for error messages.
    """
    x = np.array(x, dtype=float)
    f0 = np.asarray(f(x) if f0 is None else f0, dtype=float)

    def label(k):
        if names is None:
            return f"x[{k}]"
        return names(k) if callable(names) else names[k]

    bad = np.flatnonzero(~np.isfinite(f0))
    if bad.size:
        raise SolverError("non-finite right-hand side", state=label(int(bad[0])))
    J = np.empty((f0.size, x.size))
    for j in range(x.size):
        xj = x[j]
        h = eps_rel * max(abs(xj), 1.0)
        x[j] = xj + h
        h = x[j] - xj
        fp = np.asarray(f(x), dtype=float)
        if central:
            x[j] = xj - h
            J[:, j] = (fp - np.asarray(f(x), dtype=float)) / (2.0 * h)
        else:
            J[:, j] = (fp - f0) / h
        x[j] = xj
        if not np.all(np.isfinite(J[:, j])):
            raise SolverError("non-finite right-hand side under perturbation", state=label(j))
    return J


def jacobian_richardson(f: Callable, x, h_rel: float = 1e-3) -> np.ndarray:
    """Fourth-order central differences (Richardson extrapolation of two
    central steps); used for linearization where accuracy matters more
    than cost."""
    x = np.array(x, dtype=float)
    cols = []
    for j in range(x.size):
        h = h_rel * max(abs(x[j]), 1.0)

        def central(step):
            xp, xm = x.copy(), x.copy()
            xp[j] += step
            xm[j] -= step
            return (np.asarray(f(xp), dtype=float) - np.asarray(f(xm), dtype=float)) / (2.0 * step)

        d1, d2 = central(h), central(0.5 * h)
        cols.append((4.0 * d2 - d1) / 3.0)
    return np.column_stack(cols)
