"""Classical fourth-order Runge-Kutta."""
from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import DivergenceError
from .config import SolverStats


def _as_float(x) -> np.ndarray:
    # keep an extended float dtype (e.g. longdouble) if the caller passes one
    x = np.asarray(x)
    return x if np.issubdtype(x.dtype, np.floating) else x.astype(float)


def step_rk4(f: Callable, x, t: float, dt: float) -> np.ndarray:
    """One RK4 step of ``x' = f(t, x)``, in the floating dtype of ``x``.

    Raises
    ------
    DivergenceError
        If the new state is not finite.
    """
    x = _as_float(x)
    k1 = np.asarray(f(t, x))
    k2 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k1))
    k3 = np.asarray(f(t + 0.5 * dt, x + 0.5 * dt * k2))
    k4 = np.asarray(f(t + dt, x + dt * k3))
    x1 = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(x1)):
        raise DivergenceError("RK4 produced a non-finite state", time=t + dt)
    return x1


def integrate_rk4(f: Callable, x0, t0: float, dt: float, n_steps: int, growth_limit: float = 1e8):
    """Fixed-step RK4 over ``n_steps``.

    Divergence is declared when ``max|x|`` exceeds ``growth_limit`` times
    its initial value (or 1).

    Returns
    -------
    x : ndarray
        Final state.
    stats : SolverStats
    """
    x = _as_float(x0)
    bound = growth_limit * max(float(np.max(np.abs(x))) if x.size else 0.0, 1.0)
    stats = SolverStats()
    for k in range(n_steps):
        x = step_rk4(f, x, t0 + k * dt, dt)
        stats.rhs_evaluations += 4
        stats.record_step(dt)
        if np.max(np.abs(x)) > bound:
            raise DivergenceError(f"RK4 iterates grew beyond {bound:.3g}", time=t0 + (k + 1) * dt)
    return x, stats
