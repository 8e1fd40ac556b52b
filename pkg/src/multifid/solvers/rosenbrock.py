"""Adaptive stiffly accurate Rosenbrock method (Rodas4) with dense output.

The method is L-stable, handles semi-explicit index-1 DAEs through the
singular mass matrix ``M = diag(1, ..., 1, 0, ..., 0)`` and embeds a
third-order solution for error control. Stages are written in the
transformed form that avoids matrix-vector products with ``J``:

``(M/(hγ) - J) k_i = f(t + α_i h, y0 + Σ a_ij k_j) + M Σ (c_ij/h) k_j + γ_i h f_t``.
"""
from __future__ import annotations

import math

import numpy as np

from ..errors import DivergenceError, SingularMatrixError, StepSizeError
from .config import SolverConfig, SolverStats
from .linalg import LU
from .stepcontrol import pi_step_control

GAMMA = 0.25
ALPHA = (0.0, 0.386, 0.21, 0.63, 1.0, 1.0)
GAMMAS = (0.25, -0.1043, 0.1035, -0.0362, 0.0, 0.0)
A = (
    (),
    (1.544,),
    (0.9466785280815826, 0.2557011698983284),
    (3.314825187068521, 2.896124015972201, 0.9986419139977817),
    (1.221224509226641, 6.019134481288629, 12.53708332932087, -0.6878860361058950),
    (1.221224509226641, 6.019134481288629, 12.53708332932087, -0.6878860361058950, 1.0),
)
C = (
    (),
    (-5.6688,),
    (-2.430093356833875, -0.2063599157091915),
    (-0.1073529058151375, -9.594562251023355, -20.47028614809616),
    (7.496443313967647, -10.24680431464352, -33.99990352819905, 11.70890893206160),
    (8.083246795921522, -7.981132988064893, -31.52159432874371, 16.31930543123136, -6.058818238834054),
)
D2 = (10.12623508344586, -7.487995877610167, -34.80091861555747, -7.992771707568823, 1.025137723295662)
D3 = (-0.6762803392801253, 6.087714651680015, 16.43084320892478, 24.76722511418386, -6.594389125716872)
ORDER_EMBEDDED = 3


class RodasStep:
    """Result of one attempted step: new state, error norm and the dense
    output coefficients."""

    __slots__ = ("y0", "y1", "err", "c2", "c3", "e")

    def __init__(self, y0, y1, err, c2, c3, e):
        self.y0, self.y1, self.err, self.c2, self.c3, self.e = y0, y1, err, c2, c3, e

    def dense(self, s):
        """State at fraction ``s`` in ``[0, 1]`` of the step (scalar or array)."""
        s = np.asarray(s, dtype=float)[..., None]
        return (1.0 - s) * self.y0 + s * (self.y1 + (1.0 - s) * (self.c2 + s * self.c3))


def _mass(problem) -> np.ndarray:
    m = np.zeros(problem.n)
    m[:problem.n_diff] = 1.0
    return m


def _time_derivative(problem, t, y, f0, stats):
    if getattr(problem, "autonomous", False):
        return None
    dt = math.sqrt(np.finfo(float).eps * max(1e-5, abs(t)))
    stats.jacobian_rhs_evaluations += 1
    return (problem.rhs(t + dt, y) - f0) / dt


def rodas_attempt(problem, t, y0, h, f0, J, ft, mass, atol, rtol) -> RodasStep:
    """One Rodas4 step of size ``h`` given ``f0 = f(t, y0)`` and ``J``."""
    W = -J.copy()
    W[np.diag_indices_from(W)] += mass / (h * GAMMA)
    lu = LU(W)
    k = []
    for i in range(6):
        if i == 0:
            fi = f0
        else:
            yi = y0.copy()
            for j, a in enumerate(A[i]):
                yi += a * k[j]
            fi = problem.rhs(t + ALPHA[i] * h, yi)
        rhs = fi.copy()
        if i:
            acc = np.zeros_like(y0)
            for j, c in enumerate(C[i]):
                acc += (c / h) * k[j]
            rhs += mass * acc
        if ft is not None and GAMMAS[i]:
            rhs += (GAMMAS[i] * h) * ft
        k.append(lu.solve(rhs))
    y1 = y0.copy()
    for j, a in enumerate(A[5]):
        y1 += a * k[j]
    y1 += k[5]
    scale = atol + rtol * np.maximum(np.abs(y0), np.abs(y1))
    err = float(np.sqrt(np.mean((k[5] / scale) ** 2))) if y0.size else 0.0
    c2 = sum(d * kj for d, kj in zip(D2, k))
    c3 = sum(d * kj for d, kj in zip(D3, k))
    return RodasStep(y0, y1, err, c2, c3, k[5])


def _worst_component(step: RodasStep, cfg: SolverConfig):
    scale = cfg.abstol + cfg.reltol * np.maximum(np.abs(step.y0), np.abs(step.y1))
    return int(np.argmax(np.abs(step.e) / scale)) if step.e.size else None


def step_adaptive(problem, x, t: float, dt_suggest: float, cfg: SolverConfig | None = None,
                  err_prev: float = 1.0, stats: SolverStats | None = None):
    """One accepted error-controlled step, shrinking on rejection.

    Returns
    -------
    x_next : ndarray
    dt_used : float
    dt_next : float
        PI-controller proposal for the following step, capped at ``dt_max``.
    err : float
        Scaled error norm of the accepted step (``<= 1``).

    Raises
    ------
    StepSizeError
        If the step would have to shrink below ``dt_min``.
    """
    cfg = cfg or SolverConfig()
    stats = stats if stats is not None else SolverStats()
    y = np.array(x, dtype=float)
    mass = _mass(problem)
    f0 = problem.rhs(t, y)
    J = problem.jacobian(t, y, f0)
    ft = _time_derivative(problem, t, y, f0, stats)
    stats.rhs_evaluations += 1
    stats.jacobian_evaluations += 1
    stats.jacobian_rhs_evaluations += getattr(problem, "jacobian_rhs_cost", problem.n)
    h = min(dt_suggest, cfg.dt_max)
    while True:
        try:
            step = rodas_attempt(problem, t, y, h, f0, J, ft, mass, cfg.abstol, cfg.reltol)
            err = step.err
        except SingularMatrixError:
            err = math.inf
        stats.rhs_evaluations += 5
        stats.lu_factorizations += 1
        if np.isfinite(err) and err <= 1.0 and np.all(np.isfinite(step.y1)):
            break
        stats.rejected_steps += 1
        h *= 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** (-1.0 / (ORDER_EMBEDDED + 1)))
        if h < cfg.dt_min:
            raise StepSizeError(f"step size {h:.3e} below dt_min {cfg.dt_min:.3e}", time=t)
    stats.record_step(h)
    dt_next = min(pi_step_control(max(err, 1e-10), err_prev, h, ORDER_EMBEDDED), cfg.dt_max)
    return step.y1, h, dt_next, err


def integrate_adaptive(problem, t0: float, x0, t_end: float, cfg: SolverConfig | None = None,
                       t_out=None, stats: SolverStats | None = None, dt0: float | None = None,
                       max_steps: int = 10_000_000):
    """Integrate from ``t0`` to ``t_end`` with error-controlled steps.

    Parameters
    ----------
    t_out : array_like, optional
        Increasing output times inside ``[t0, t_end]``, filled by dense
        output.
    dt0 : float, optional
        First trial step; ``cfg.first_dt`` otherwise.

    Returns
    -------
    x_end : ndarray
    x_out : ndarray or None
        ``len(t_out) × n`` states at ``t_out``.
    stats : SolverStats
    t_steps : ndarray
        Accepted step end times (raw samples, starting with ``t0``).
    x_steps : ndarray
        States at ``t_steps``.

    Raises
    ------
    StepSizeError
        If the controller requests a step below ``dt_min``.
    DivergenceError
        If the state becomes non-finite.

    Both carry a ``partial`` dict with the dense output filled so far
    (``n_out`` rows of ``x_out``), the last accepted ``t``, ``x`` and the
    raw step samples.
    """
    cfg = cfg or SolverConfig()
    stats = stats if stats is not None else SolverStats()
    y = np.array(x0, dtype=float)
    t = float(t0)
    mass = _mass(problem)
    t_out = None if t_out is None else np.asarray(t_out, dtype=float)
    x_out = None if t_out is None else np.empty((len(t_out), problem.n))
    i_out = 0
    if t_out is not None:
        while i_out < len(t_out) and t_out[i_out] <= t + 1e-15:
            x_out[i_out] = y
            i_out += 1
    t_steps, x_steps = [t], [y.copy()]
    h = min(dt0 if dt0 is not None else cfg.first_dt, cfg.dt_max)
    f0 = problem.rhs(t, y)
    stats.rhs_evaluations += 1
    J = None
    err_prev = 1.0
    n_acc = 0
    tiny = 1e-12 * max(1.0, abs(t_end))

    def fail(exc):
        exc.partial = {"n_out": i_out, "x_out": x_out, "t": t, "x": y,
                       "t_steps": np.array(t_steps), "x_steps": np.array(x_steps)}
        return exc

    while t < t_end - tiny:
        if n_acc >= max_steps:
            raise fail(StepSizeError(f"step budget of {max_steps} exhausted", time=t))
        if J is None:
            J = problem.jacobian(t, y, f0)
            ft = _time_derivative(problem, t, y, f0, stats)
            stats.jacobian_evaluations += 1
            stats.jacobian_rhs_evaluations += getattr(problem, "jacobian_rhs_cost", problem.n)
        last = t + h >= t_end - tiny
        if last:
            h = t_end - t
        try:
            step = rodas_attempt(problem, t, y, h, f0, J, ft, mass, cfg.abstol, cfg.reltol)
            err = step.err
        except SingularMatrixError:
            err = math.inf
        stats.rhs_evaluations += 5
        stats.lu_factorizations += 1
        if not np.isfinite(err) or err > 1.0:
            stats.rejected_steps += 1
            fac = 0.2 if not np.isfinite(err) else max(0.2, 0.9 * err ** (-1.0 / (ORDER_EMBEDDED + 1)))
            h *= fac
            if h < cfg.dt_min:
                worst = _worst_component(step, cfg) if np.isfinite(err) else None
                raise fail(StepSizeError(f"step size {h:.3e} below dt_min {cfg.dt_min:.3e}", time=t,
                                         state=None if worst is None else problem.state_name(worst)))
            continue
        if not np.all(np.isfinite(step.y1)):
            raise fail(DivergenceError("adaptive solver produced a non-finite state", time=t + h))
        if t_out is not None:
            t_new = t + h
            while i_out < len(t_out) and t_out[i_out] <= t_new + tiny:
                x_out[i_out] = step.dense((t_out[i_out] - t) / h)
                i_out += 1
        stats.record_step(h)
        n_acc += 1
        t = t_end if last else t + h
        y = step.y1
        f0 = problem.rhs(t, y)
        stats.rhs_evaluations += 1
        t_steps.append(t)
        x_steps.append(y)
        J = None
        h_new = pi_step_control(max(err, 1e-10), err_prev, h, ORDER_EMBEDDED)
        err_prev = max(err, 1e-4)
        h = min(h_new, cfg.dt_max)
        if h < cfg.dt_min:
            raise fail(StepSizeError(f"step size {h:.3e} below dt_min {cfg.dt_min:.3e}", time=t))
    if t_out is not None:
        while i_out < len(t_out):
            x_out[i_out] = y
            i_out += 1
    return y, x_out, stats, np.array(t_steps), np.array(x_steps)
