import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linear_sum_assignment

from helpers import smib_inverter
from multifid.analysis import eigenvalues, find_equilibrium, linearize, schur_reduce, small_signal, stiffness_ratio
from multifid.errors import ConfigError, EigenvalueError, InitializationError, SingularMatrixError
from multifid.scenario import default_scenario, initialize, scenario_from_dict
from multifid.scenario.compile import compile_system, with_params

OMEGA_B = 2 * np.pi * 60


def _two_source_branch(r: float = 0.01, l: float = 0.1):
    return scenario_from_dict({
        "schema_version": 1,
        "buses": [{"id": "B1"}, {"id": "B2"}],
        "branches": [{"id": "L12", "from": "B1", "to": "B2", "r": r, "l": l}],
        "devices": [
            {"id": "S1", "type": "source", "bus": "B1", "control": "slack", "v_set": 1.0},
            {"id": "S2", "type": "source", "bus": "B2", "control": "pv", "p_set": -0.3, "v_set": 1.0},
        ],
        "t_end": 1.0,
    })


def test_eigenvalues_diagonal():
    np.testing.assert_allclose(np.sort(eigenvalues(np.diag([-3.0, 1.0, -7.0])).real), [-7, -3, 1])


def test_eigenvalues_rotation():
    lam = eigenvalues(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    np.testing.assert_allclose(np.sort(lam.imag), [-1, 1], atol=1e-14)
    np.testing.assert_allclose(lam.real, 0, atol=1e-14)


def test_eigenvalues_companion_roots():
    # (s + 1)(s + 2)(s + 3) = s^3 + 6 s^2 + 11 s + 6
    a = np.array([[0, 1, 0], [0, 0, 1], [-6, -11, -6]], float)
    np.testing.assert_allclose(np.sort(eigenvalues(a).real), [-3, -2, -1], atol=1e-10)


def test_eigenpair_residual():
    a = np.random.default_rng(8).normal(size=(30, 30))
    lam = eigenvalues(a)
    for z in lam[:5]:
        # smallest singular vector of (A - zI) is the eigenvector
        _, s, vh = np.linalg.svd(a - z * np.eye(30))
        v = vh[-1].conj()
        assert np.linalg.norm(a @ v - z * v) < 1e-8 * np.linalg.norm(a, 2)


def test_eigenvalues_errors():
    with pytest.raises(ConfigError):
        eigenvalues(np.zeros((2, 3)))
    with pytest.raises(EigenvalueError):
        eigenvalues(np.array([[np.nan, 0.0], [0.0, 1.0]]))


def test_stiffness_ratio_examples():
    assert stiffness_ratio([-1.0, -1000.0])[0] == pytest.approx(1000.0)
    assert stiffness_ratio([-2.0, -2.0])[0] == 1.0
    plain, scaled = stiffness_ratio([-1.0, -1000.0], dt=1e-3)
    assert scaled == pytest.approx(plain * 1e-3)
    assert stiffness_ratio([-1.0, -1000.0])[1] is None


def test_stiffness_ratio_ignores_zero_and_unstable_modes():
    assert stiffness_ratio([0.0, 1e-12, -1.0 + 5j, -1.0 - 5j, -50.0, 3.0])[0] == pytest.approx(50.0)


def test_stiffness_ratio_undefined():
    with pytest.raises(EigenvalueError):
        stiffness_ratio([0.0, -1.0])
    with pytest.raises(EigenvalueError):
        stiffness_ratio([1e-12, -1e-12, 0.0])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.floats(-3, 3), min_size=6, max_size=6))
def test_balancing_invariance(seed, log_scales):
    a = np.random.default_rng(seed).normal(size=(6, 6))
    d = 10.0 ** np.asarray(log_scales)
    lam = np.sort_complex(eigenvalues(a))
    lam_s = np.sort_complex(eigenvalues(d[:, None] * a / d[None, :]))
    assert np.max(np.abs(lam - lam_s)) < 1e-9 * max(1.0, np.max(np.abs(lam)))


def test_equilibrium_zero_iterations_from_initial_state():
    for f in ("qsp", "dq"):
        ic = initialize(default_scenario(), f)
        x, it = find_equilibrium(ic.model, ic.x0)
        assert it == 0
        np.testing.assert_array_equal(x, ic.x0)


def test_equilibrium_from_perturbed_start():
    ic = initialize(default_scenario(), "dq")
    x0 = ic.x0 + 1e-4 * np.random.default_rng(2).normal(size=ic.x0.size)
    x, it = find_equilibrium(ic.model, x0)
    assert 1 <= it <= 5
    assert np.max(np.abs(ic.model.rhs(0.0, x))) < 1e-8


def test_equilibrium_rejects_abc():
    ic = initialize(default_scenario(), "abc")
    with pytest.raises(ConfigError):
        find_equilibrium(ic.model, ic.x0)


def test_equilibrium_infeasible_reports_rows():
    # 20 pu exceeds the transfer limit of a 0.1 pu reactance
    ic = initialize(smib_inverter(), "qsp")
    params = dict(ic.params, G1=with_params(ic.params["G1"], p_ref=20.0))
    model = compile_system(smib_inverter(), "qsp", params=params)
    with pytest.raises(InitializationError, match="G1"):
        find_equilibrium(model, ic.x0, max_iter=10)


def test_linearize_branch_between_sources():
    r, l = 0.01, 0.1
    ic = initialize(_two_source_branch(r, l), "dq")
    assert ic.model.n == ic.model.n_diff == 2
    lam = np.sort_complex(eigenvalues(linearize(ic.model, ic.x0)))
    # di/dt = (Ω_b/l)(v1 - v2 - r i) - jΩ_b i in the synchronous frame
    expected = np.sort_complex(OMEGA_B * np.array([-r / l - 1j, -r / l + 1j]))
    np.testing.assert_allclose(lam, expected, rtol=1e-6)


def test_linearize_off_equilibrium():
    ic = initialize(default_scenario(), "dq")
    with pytest.raises(InitializationError):
        linearize(ic.model, ic.x0 + 1e-2)


def test_schur_reduce_decoupled():
    a = np.diag([-1.0, -2.0])
    j = np.block([[a, np.zeros((2, 1))], [np.zeros((1, 2)), np.array([[3.0]])]])
    np.testing.assert_allclose(schur_reduce(j, 2), a)


def test_schur_reduce_coupled_oracle():
    j = np.array([[-1.0, 0.5, 2.0], [0.0, -3.0, 1.0], [1.0, 1.0, -4.0]])
    expected = j[:2, :2] - j[:2, 2:] @ np.linalg.solve(j[2:, 2:], j[2:, :2])
    np.testing.assert_allclose(schur_reduce(j, 2), expected, rtol=1e-13)


def test_schur_reduce_singular_block():
    j = np.array([[-1.0, 1.0], [1.0, 0.0]])
    with pytest.raises(SingularMatrixError):
        schur_reduce(j, 1)


def test_default_scenario_stiffness_separation():
    reports = {}
    for f in ("qsp", "dq"):
        ic = initialize(default_scenario(), f)
        reports[f] = small_signal(ic.model, ic.x0)
        assert reports[f].zero_modes == 1
        assert reports[f].stable
        assert len(reports[f].eigenvalues) == ic.model.n_diff
    assert reports["dq"].stiffness_ratio_plain >= 10 * reports["qsp"].stiffness_ratio_plain


def test_zero_mode_count_without_infinite_bus():
    ic = initialize(default_scenario(), "dq")
    lam = small_signal(ic.model, ic.x0).eigenvalues
    assert np.sum(np.abs(lam) < 1e-6) == 1


def test_infinite_bus_has_no_zero_mode():
    ic = initialize(smib_inverter(), "dq")
    assert small_signal(ic.model, ic.x0).zero_modes == 0


def _matched_eig_error(gain_scale: float) -> float:
    lam = {}
    for f in ("qsp", "dq"):
        ic = initialize(smib_inverter(gain_scale=gain_scale), f)
        lam[f] = small_signal(ic.model, ic.x0).eigenvalues
    cost = np.abs(lam["qsp"][:, None] - lam["dq"][None, :])
    rows, cols = linear_sum_assignment(cost)
    return float(np.max(cost[rows, cols] / np.abs(lam["qsp"][rows])))


def test_reduced_eigenvalues_approximate_slow_dq_modes():
    # stiffer inner loops give the separation the reduction relies on
    assert _matched_eig_error(10.0) < 0.05
    assert _matched_eig_error(10.0) < _matched_eig_error(1.0)


def test_report_as_dict():
    ic = initialize(default_scenario(), "qsp")
    d = small_signal(ic.model, ic.x0, dt=1e-5).as_dict()
    assert d["stiffness_ratio_dt"] == pytest.approx(d["stiffness_ratio_plain"] * 1e-5)
    assert d["n_eigenvalues"] == ic.model.n_diff
