from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multifid.errors import ConfigError, DivergenceError, NewtonError, SingularMatrixError, SolverError, StepSizeError
from multifid.network import Branch, line_rhs_dq
from multifid.solvers import (LU, NewtonConfig, OdeProblem, SolverConfig, SolverStats, TrapezoidalStepper,
                              integrate_adaptive, integrate_rk4, jacobian_fd, jacobian_richardson, lu_solve,
                              newton_solve, pi_step_control, step_adaptive, step_rk4, step_trapezoidal)

OMEGA_B = 2 * np.pi * 60


def linear(lam):
    return OdeProblem(lambda t, x: lam * x, 1, jac=lambda t, x: np.array([[lam]]), autonomous=True)


def van_der_pol(t, x):
    return np.array([x[1], 5 * (1 - x[0] ** 2) * x[1] - x[0]])


# -- explicit ------------------------------------------------------------------------

def test_rk4_zero_rhs():
    x = np.array([1.0, -2.0])
    np.testing.assert_array_equal(step_rk4(lambda t, y: np.zeros(2), x, 0.0, 0.1), x)


def test_rk4_exponential():
    x1 = step_rk4(lambda t, y: -y, np.array([1.0]), 0.0, 0.1)
    assert abs(x1[0] - np.exp(-0.1)) < 1e-7


def test_rk4_outside_stability_region_diverges():
    # amplification at λdt = -3 is 1 - 3 + 9/2 - 9/2 + 27/8 = 1.375
    x1 = step_rk4(lambda t, y: -30.0 * y, np.array([1.0]), 0.0, 0.1)
    assert x1[0] == pytest.approx(1.375)
    with pytest.raises(DivergenceError):
        integrate_rk4(lambda t, y: -30.0 * y, [1.0], 0.0, 0.1, 200)


def test_rk4_work_count():
    _, stats = integrate_rk4(lambda t, y: -y, [1.0], 0.0, 0.01, 37)
    assert stats.rhs_evaluations == 4 * 37
    assert stats.accepted_steps == 37


# -- trapezoidal -----------------------------------------------------------------------

@pytest.mark.parametrize("lam,dt", [(-1.0, 0.1), (-50.0, 0.01), (2.0, 0.05)])
def test_trapezoidal_linear_update(lam, dt):
    x1 = step_trapezoidal(linear(lam), [1.3], 0.0, dt, NewtonConfig(tol=1e-14))
    assert x1[0] == pytest.approx(1.3 * (1 + lam * dt / 2) / (1 - lam * dt / 2), rel=1e-13)


def test_trapezoidal_a_stable_extreme():
    x1 = step_trapezoidal(linear(-1e6), [1.0], 0.0, 1.0)
    assert abs(x1[0]) < 1.0


@given(st.floats(-1e8, -1e-3))
def test_trapezoidal_a_stability_property(z):
    x1 = step_trapezoidal(linear(z), [1.0], 0.0, 1.0, NewtonConfig(tol=1e-12))
    assert abs(x1[0]) <= 1.0


def test_trapezoidal_dae_enforces_algebraic_rows():
    # x' = -y, 0 = y - x^2
    def f(t, z):
        return np.array([-z[1], z[1] - z[0] ** 2])

    prob = OdeProblem(f, 2, n_diff=1)
    stepper = TrapezoidalStepper(prob, 0.01, NewtonConfig(tol=1e-12))
    z = np.array([1.0, 1.0])
    for k in range(50):
        z, _ = stepper.step(0.01 * k, z)
        assert abs(z[1] - z[0] ** 2) < 1e-12
    # exact solution x = 1/(1+t)
    assert z[0] == pytest.approx(1 / 1.5, rel=1e-4)


@pytest.mark.filterwarnings("ignore:overflow:RuntimeWarning")
def test_trapezoidal_newton_failure():
    prob = OdeProblem(lambda t, x: np.array([np.exp(x[0] * 50.0)]), 1)
    with pytest.raises(NewtonError):
        step_trapezoidal(prob, [1.0], 0.0, 1.0, NewtonConfig(max_iter=2))


# -- adaptive ----------------------------------------------------------------------------

def test_adaptive_step_grows_to_dt_max():
    cfg = SolverConfig(abstol=1e-6, reltol=1e-6, dt_max=0.5)
    prob = OdeProblem(lambda t, x: np.zeros(1), 1, autonomous=True)
    _, _, stats, _, _ = integrate_adaptive(prob, 0.0, [1.0], 20.0, cfg)
    assert stats.max_dt_used == 0.5


def test_step_adaptive_single_step():
    cfg = SolverConfig(abstol=1e-10, reltol=1e-10)
    x1, dt_used, dt_next, err = step_adaptive(linear(-1.0), np.array([1.0]), 0.0, 0.05, cfg)
    assert err <= 1.0 and dt_next > 0
    assert x1[0] == pytest.approx(np.exp(-dt_used), rel=1e-9)


def test_step_adaptive_retries_large_suggestion():
    cfg = SolverConfig(abstol=1e-10, reltol=1e-10)
    stats = SolverStats()
    _, dt_used, _, err = step_adaptive(OdeProblem(van_der_pol, 2), np.array([2.0, 0.0]), 0.0, 5.0, cfg,
                                       stats=stats)
    assert dt_used < 5.0 and err <= 1.0
    assert stats.rejected_steps >= 1


def test_step_adaptive_dt_min_failure():
    prob = OdeProblem(lambda t, x: np.array([1.0 / (1.0 - t) ** 2]), 1)
    cfg = SolverConfig(abstol=1e-8, reltol=1e-8, dt_min=1e-6)
    with pytest.raises((StepSizeError, DivergenceError)):
        integrate_adaptive(prob, 0.0, [1.0], 2.0, cfg)


def test_adaptive_a_stable_on_stiff_linear():
    cfg = SolverConfig(abstol=1e-6, reltol=1e-6, dt_max=1.0)
    y, _, stats, _, _ = integrate_adaptive(linear(-1e6), 0.0, [1.0], 10.0, cfg)
    assert abs(y[0]) < 1e-6
    assert stats.accepted_steps < 200


def test_adaptive_tolerance_proportionality():
    prob = OdeProblem(van_der_pol, 2)
    ref = integrate_adaptive(prob, 0.0, [2.0, 0.0], 3.0, SolverConfig(abstol=1e-13, reltol=1e-13))[0]
    errs = []
    for tol in (1e-5, 1e-6, 1e-7, 1e-8):
        y = integrate_adaptive(prob, 0.0, [2.0, 0.0], 3.0, SolverConfig(abstol=tol, reltol=tol, dt_max=10.0))[0]
        errs.append(np.max(np.abs(y - ref)))
    ratios = np.array(errs[:-1]) / np.array(errs[1:])
    assert np.all((ratios > 5) & (ratios < 20)), ratios


def test_adaptive_dae_index1():
    def f(t, z):
        return np.array([-z[1], z[1] - z[0] ** 2])

    prob = OdeProblem(f, 2, n_diff=1)
    t_out = np.linspace(0, 1, 11)
    y, x_out, _, _, _ = integrate_adaptive(prob, 0.0, [1.0, 1.0], 1.0, SolverConfig(abstol=1e-10, reltol=1e-10),
                                           t_out=t_out)
    np.testing.assert_allclose(x_out[:, 0], 1 / (1 + t_out), rtol=1e-7)


def test_adaptive_is_deterministic():
    cfg = SolverConfig(abstol=1e-8, reltol=1e-8)
    a = integrate_adaptive(OdeProblem(van_der_pol, 2), 0.0, [2.0, 0.0], 3.0, cfg)
    b = integrate_adaptive(OdeProblem(van_der_pol, 2), 0.0, [2.0, 0.0], 3.0, cfg)
    assert a[2].step_sizes == b[2].step_sizes
    np.testing.assert_array_equal(a[4], b[4])


# -- step control ------------------------------------------------------------------------

def test_pi_control_examples():
    assert pi_step_control(1.0, 1.0, 0.01, 3) == pytest.approx(0.009, rel=1e-15)
    assert pi_step_control(1e6, 1.0, 0.01, 3) == pytest.approx(0.002, rel=1e-15)
    assert pi_step_control(1e-12, 1e-12, 0.01, 3) == pytest.approx(0.05, rel=1e-15)


def test_pi_control_formula():
    err, prev, order = 0.3, 0.7, 3
    fac = 0.9 * err ** (-0.3 / 4) * (prev / err) ** (0.4 / 4)
    assert pi_step_control(err, prev, 1.0, order) == pytest.approx(fac, rel=1e-15)


# -- newton ----------------------------------------------------------------------------

def test_newton_linear_one_iteration():
    res = newton_solve(lambda x: x - 3.0, lambda x: np.eye(1), [0.0])
    assert res.x[0] == 3.0 and res.iterations == 1


def test_newton_sqrt2_quadratic():
    res = newton_solve(lambda x: x**2 - 2, lambda x: np.diag(2 * x), [1.0], tol=1e-14)
    assert res.x[0] == pytest.approx(np.sqrt(2), rel=1e-15)
    h = res.history
    # e_{k+1} ≈ e_k² / (2√2) once in the asymptotic range
    for k in range(1, len(h) - 1):
        if h[k] < 1e-2 and h[k + 1] > 1e-13:
            assert h[k + 1] < h[k] ** 2


def test_newton_cubic_root_slow():
    res = newton_solve(lambda x: x**3, lambda x: np.diag(3 * x**2), [1.0], tol=1e-12, max_iter=200)
    assert res.slow_convergence
    assert abs(res.x[0]) < 1e-4


def test_newton_singular_and_limit():
    with pytest.raises(SingularMatrixError):
        newton_solve(lambda x: x**2 - 2, lambda x: np.diag(2 * x), [0.0])
    with pytest.raises(NewtonError):
        newton_solve(lambda x: x**2 + 1, lambda x: np.diag(2 * x), [0.7], max_iter=5)


# -- jacobians --------------------------------------------------------------------------

def test_jacobian_fd_linear():
    a = np.random.default_rng(6).normal(size=(4, 4))
    j = jacobian_fd(lambda x: a @ x, np.ones(4))
    assert np.max(np.abs(j - a)) < 1e-6 * np.max(np.abs(a))


def test_jacobian_fd_constant():
    assert not np.any(jacobian_fd(lambda x: np.array([1.0, 2.0]), np.zeros(3)))


def test_jacobian_fd_names_bad_state():
    def f(x):
        return np.array([x[0], np.inf if x[1] != 0 else 0.0])

    with pytest.raises(SolverError, match="b"):
        jacobian_fd(f, np.array([1.0, 0.0]), names=["a", "b"])


def test_jacobian_matches_line_analytic():
    br = Branch("L12", "B1", "B2", 0.01, 0.12, 0.10)
    ch = br.c / 2

    def f(x):
        return np.concatenate(line_rhs_dq(x[0:2], x[2:4], x[4:6], [0.3, 0.1], [0.2, 0.0], 1.0, br, OMEGA_B))

    def blk(z):
        return np.array([[z.real, -z.imag], [z.imag, z.real]])

    wl, wc = OMEGA_B / br.l, OMEGA_B / ch
    eye = np.eye(2)
    analytic = np.block([
        [-wl * blk(complex(br.r, br.l)), wl * eye, -wl * eye],
        [-wc * eye, -wc * blk(complex(0, ch)), 0 * eye],
        [wc * eye, 0 * eye, -wc * blk(complex(0, ch))],
    ])
    x = np.random.default_rng(7).normal(size=6)
    for j in (jacobian_fd(f, x), jacobian_richardson(f, x)):
        assert np.max(np.abs(j - analytic)) < 1e-6 * np.max(np.abs(analytic))


# -- linear algebra -----------------------------------------------------------------------

def test_lu_identity():
    b = np.array([1.0, -2.0, 3.0])
    np.testing.assert_array_equal(lu_solve(np.eye(3), b), b)


def test_lu_hilbert_exact():
    n = 4
    h = [[Fraction(1, i + j + 1) for j in range(n)] for i in range(n)]
    x_true = [Fraction(1)] * n
    b = [sum(h[i][j] * x_true[j] for j in range(n)) for i in range(n)]
    x = lu_solve(np.array(h, dtype=float), np.array(b, dtype=float))
    cond = np.linalg.cond(np.array(h, dtype=float))
    assert np.max(np.abs(x - 1.0)) < 10 * cond * np.finfo(float).eps


def test_lu_random_residual():
    rng = np.random.default_rng(8)
    a = rng.normal(size=(50, 50)) + 50 * np.eye(50)
    b = rng.normal(size=50)
    x = lu_solve(a, b)
    assert np.max(np.abs(a @ x - b)) < 1e-10 * np.max(np.abs(b))


def test_lu_singular_pivot():
    a = np.array([[1.0, 2.0, 3.0], [2.0, 4.0, 6.0], [0.0, 0.0, 1.0]])
    with pytest.raises(SingularMatrixError) as exc:
        LU(a)
    assert exc.value.pivot is not None


# -- configuration ------------------------------------------------------------------------

def test_solver_config_validation():
    with pytest.raises(ConfigError):
        SolverConfig(method="euler")
    with pytest.raises(ConfigError):
        SolverConfig(abstol=0.0)
    with pytest.raises(ConfigError):
        SolverConfig(dt_min=1.0, dt_max=0.1)
    assert SolverConfig().replace(abstol=1e-3, reltol=None).abstol == 1e-3


def test_stats_merge_and_counts():
    a, b = SolverStats(), SolverStats()
    a.record_step(1e-4)
    b.record_fixed(5e-6, 10)
    a.merge(b)
    assert a.accepted_steps == 11
    assert a.min_dt_used == 5e-6 and a.max_dt_used == 1e-4
    assert a.steps_below_1ms == 11
