"""Equilibria, small-signal linearization, eigenvalues and stiffness ratios."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, EigenvalueError, InitializationError, MultifidError, SingularMatrixError
from .solvers.jacobian import jacobian_richardson
from .solvers.linalg import LU
from .solvers.newton import newton_solve

ZERO_MODE_TOL = 1e-6
STABLE_TOL = 1e-9


@dataclass
class SmallSignalReport:
    """Linear analysis at an equilibrium.

    Attributes
    ----------
    x_star : ndarray
    eigenvalues : ndarray of complex
        One per differential state of the (reduced) system.
    zero_modes : int
        Eigenvalues with ``|λ| < zero_tol`` (rotational symmetry).
    stiffness_ratio_plain : float
        ``max|Re λ| / min|Re λ|`` over strictly stable eigenvalues.
    stiffness_ratio_dt : float or None
        The plain ratio multiplied by ``dt`` when ``dt`` is supplied.
    stable : bool
        All non-zero-mode eigenvalues have ``Re λ < 0``.
    """

    x_star: np.ndarray
    eigenvalues: np.ndarray
    zero_modes: int
    stiffness_ratio_plain: float
    stiffness_ratio_dt: float | None
    stable: bool
    names: list = field(default_factory=list)

    def as_dict(self) -> dict:
        ev = sorted(self.eigenvalues, key=lambda z: (z.real, z.imag))
        return {"n_eigenvalues": len(ev), "zero_modes": self.zero_modes,
                "stiffness_ratio_plain": self.stiffness_ratio_plain,
                "stiffness_ratio_dt": self.stiffness_ratio_dt, "stable": self.stable,
                "max_real": max(z.real for z in ev), "min_real": min(z.real for z in ev)}


def find_equilibrium(system, x0, tol: float = 1e-10, max_iter: int = 20):
    """Equilibrium of a time-invariant compiled system (dq or QSP).

    Uses minimum-norm Newton steps so the rotational zero mode of systems
    without an infinite bus does not make the iteration singular.

    Returns
    -------
    x_star : ndarray
    iterations : int

    Raises
    ------
    ConfigError
        For the time-varying abc formulation.
    InitializationError
        On non-convergence, naming the worst residual rows.
    """
    if getattr(system, "formulation", None) == "abc":
        raise ConfigError("the abc formulation is time varying and has no equilibrium")
    f = lambda x: system.rhs(0.0, x)  # noqa: E731
    try:
        res = newton_solve(f, lambda x: system.jacobian(0.0, x), x0, tol=tol, max_iter=max_iter,
                           least_squares=True)
    except MultifidError as exc:
        r = f(np.asarray(x0, dtype=float))
        worst = np.argsort(-np.abs(r))[:5]
        rows = ", ".join(f"{system.state_name(k)}={r[k]:.3e}" for k in worst)
        raise InitializationError(f"no equilibrium found ({exc}); worst rows: {rows}") from None
    return res.x, res.iterations


def schur_reduce(J: np.ndarray, n_diff: int) -> np.ndarray:
    """Eliminate algebraic variables: ``A = J_xx - J_xy J_yy⁻¹ J_yx``.

    Raises
    ------
    SingularMatrixError
        If ``J_yy`` is singular (not index 1 at this point).
    """
    if n_diff == J.shape[0]:
        return J.copy()
    jxx, jxy = J[:n_diff, :n_diff], J[:n_diff, n_diff:]
    jyx, jyy = J[n_diff:, :n_diff], J[n_diff:, n_diff:]
    try:
        lu = LU(jyy)
    except SingularMatrixError as exc:
        raise SingularMatrixError(f"algebraic Jacobian block is singular, the DAE is not index 1 here ({exc})",
                                  pivot=exc.pivot) from None
    return jxx - jxy @ lu.solve(jyx)


def linearize(system, x_star, h_rel: float = 1e-4, check: float = 1e-8) -> np.ndarray:
    """State matrix at ``x_star`` (differential states only).

    The Jacobian uses fourth-order central differences; algebraic variables
    are removed by a Schur complement.

    Raises
    ------
    InitializationError
        If ``x_star`` is not an equilibrium to ``check``.
    """
    x_star = np.asarray(x_star, dtype=float)
    r = system.rhs(0.0, x_star)
    if np.max(np.abs(r)) > check:
        k = int(np.argmax(np.abs(r)))
        raise InitializationError(f"not an equilibrium: |f| = {abs(r[k]):.3e} at {system.state_name(k)}")
    J = jacobian_richardson(lambda x: system.rhs(0.0, x), x_star, h_rel)
    return schur_reduce(J, system.n_diff)


def eigenvalues(A) -> np.ndarray:
    """All eigenvalues of a dense real matrix (balanced Hessenberg QR).

    Raises
    ------
    EigenvalueError
        On non-finite input or QR non-convergence.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ConfigError("eigenvalues needs a square matrix")
    if not np.all(np.isfinite(A)):
        raise EigenvalueError("matrix has non-finite entries")
    try:
        return np.linalg.eigvals(A)
    except np.linalg.LinAlgError as exc:
        raise EigenvalueError(f"QR iteration did not converge: {exc}") from None


def stiffness_ratio(eigs, dt: float | None = None, zero_tol: float = ZERO_MODE_TOL):
    """Stiffness ratio over strictly stable, non-zero eigenvalues.

    Returns
    -------
    plain : float
        ``max|Re λ| / min|Re λ|``.
    scaled : float or None
        ``plain * dt`` when ``dt`` is given.

    Raises
    ------
    EigenvalueError
        If fewer than two eigenvalues qualify.
    """
    eigs = np.asarray(eigs, dtype=complex)
    sel = (np.abs(eigs) >= zero_tol) & (eigs.real < -STABLE_TOL)
    re = np.abs(eigs.real[sel])
    if re.size < 2:
        raise EigenvalueError("stiffness ratio undefined: fewer than two strictly stable eigenvalues")
    plain = float(re.max() / re.min())
    return plain, (plain * dt if dt is not None else None)


def small_signal(system, x_star, dt: float | None = None, zero_tol: float = ZERO_MODE_TOL) -> SmallSignalReport:
    """Linearize, compute eigenvalues and stiffness ratios."""
    A = linearize(system, x_star)
    ev = eigenvalues(A)
    zero = int(np.sum(np.abs(ev) < zero_tol))
    plain, scaled = stiffness_ratio(ev, dt, zero_tol)
    stable = bool(np.all(ev.real[np.abs(ev) >= zero_tol] < 0))
    names = [system.state_name(k) for k in range(system.n_diff)]
    return SmallSignalReport(np.asarray(x_star), ev, zero, plain, scaled, stable, names)
