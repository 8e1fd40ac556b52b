"""Trapezoidal rule for ODEs and semi-explicit index-1 DAEs."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import NewtonError, SingularMatrixError
from .config import SolverStats
from .linalg import LU


@dataclass
class NewtonConfig:
    tol: float = 1e-10
    max_iter: int = 8
    reuse_limit: int = 50


class TrapezoidalStepper:
    """Fixed-step trapezoidal integrator with simplified Newton.

    The iteration matrix ``[I - dt/2 J ; J_alg]`` is reused for up to
    ``reuse_limit`` steps and refreshed early when Newton stalls.
    Differential rows solve ``x+ - x - dt/2 (f(x) + f(x+)) = 0``; algebraic
    rows solve ``g(x+) = 0``.
    """

    def __init__(self, problem, dt: float, cfg: NewtonConfig | None = None, stats: SolverStats | None = None):
        self.p = problem
        self.dt = dt
        self.cfg = cfg or NewtonConfig()
        self.stats = stats if stats is not None else SolverStats()
        self._lu = None
        self._age = 0

    def _refresh(self, t, x, f):
        J = self.p.jacobian(t, x, f)
        nd = self.p.n_diff
        W = J.copy()
        W[:nd] *= -0.5 * self.dt
        W[np.arange(nd), np.arange(nd)] += 1.0
        self._lu = LU(W)
        self._age = 0
        self.stats.jacobian_evaluations += 1
        self.stats.jacobian_rhs_evaluations += getattr(self.p, "jacobian_rhs_cost", self.p.n)
        self.stats.lu_factorizations += 1

    def _roundoff(self, x1, f0, f1) -> float:
        # residual floor set by cancellation between x+ - x and dt/2 (f0 + f1)
        nd = self.p.n_diff
        if nd == 0:
            return 0.0
        scale = max(1.0, np.max(np.abs(x1[:nd])), 0.5 * self.dt * np.max(np.abs(f0[:nd]) + np.abs(f1[:nd])))
        return 64.0 * np.finfo(float).eps * scale

    def step(self, t: float, x: np.ndarray, f0: np.ndarray | None = None):
        """Advance one step.

        Returns
        -------
        x1, f1 : ndarray
            New state and the right-hand side evaluated there.
        """
        p, dt, nd = self.p, self.dt, self.p.n_diff
        if f0 is None:
            f0 = p.rhs(t, x)
            self.stats.rhs_evaluations += 1
        if self._lu is None or self._age >= self.cfg.reuse_limit:
            self._refresh(t, x, f0)
        fresh = self._age == 0
        x1 = x.copy()
        x1[:nd] += dt * f0[:nd]
        it = 0
        while True:
            f1 = p.rhs(t + dt, x1)
            self.stats.rhs_evaluations += 1
            r = np.concatenate([x1[:nd] - x[:nd] - 0.5 * dt * (f0[:nd] + f1[:nd]), f1[nd:]])
            norm = np.max(np.abs(r)) if r.size else 0.0
            if not np.isfinite(norm):
                raise NewtonError("non-finite residual in trapezoidal step", time=t + dt)
            if norm < max(self.cfg.tol, self._roundoff(x1, f0, f1)):
                break
            if it >= self.cfg.max_iter:
                if fresh:
                    worst = int(np.argmax(np.abs(r)))
                    raise NewtonError(f"trapezoidal Newton stalled at |r| = {norm:.3e}", time=t + dt,
                                      state=p.state_name(worst))
                try:
                    self._refresh(t + dt, x1, f1)
                except SingularMatrixError as exc:
                    raise NewtonError(f"singular iteration matrix: {exc}", time=t + dt) from None
                fresh, it = True, 0
            x1 = x1 - self._lu.solve(r)
            it += 1
            self.stats.newton_iterations += 1
        self._age += 1
        self.stats.record_step(dt)
        return x1, f1


def step_trapezoidal(problem, x, t: float, dt: float, newton_cfg: NewtonConfig | None = None) -> np.ndarray:
    """One trapezoidal step with a fresh Jacobian."""
    stepper = TrapezoidalStepper(problem, dt, newton_cfg)
    return stepper.step(t, np.asarray(x, dtype=float))[0]
