import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from multifid.core import DqPair, PerUnitBase, StateLayout, build_layout, wrap_angle
from multifid.errors import ConfigError, LayoutError
from multifid.network import Branch, Circuit, GROUND, node, port
from multifid.scenario.compile import phase_names

names = st.text(alphabet="abcxyz", min_size=1, max_size=4)


def test_per_unit_base_defaults():
    base = PerUnitBase()
    assert base.omega_b == pytest.approx(2 * np.pi * 60)
    assert base.z_base == pytest.approx(230.0**2 / 100.0)
    assert PerUnitBase.from_frequency(50.0).f_hz == pytest.approx(50.0)


def test_per_unit_base_rejects_nonpositive():
    with pytest.raises(ConfigError):
        PerUnitBase(omega_b=0.0)
    with pytest.raises(ConfigError):
        PerUnitBase(s_base=-1.0)


def test_dq_pair_complex_round_trip():
    assert DqPair.from_complex(complex(0.3, -0.4)).complex == complex(0.3, -0.4)


def test_empty_layout():
    lay = build_layout([])
    assert lay.n == 0 and lay.n_diff == 0 and lay.n_alg == 0


def test_layout_differential_before_algebraic():
    lay = build_layout([("G1", ["delta", "omega"])], [("B1", ["v_d", "v_q"])])
    assert lay.names() == ["G1.delta", "G1.omega", "B1.v_d", "B1.v_q"]
    assert lay.n_diff == 2 and lay.n_alg == 2
    np.testing.assert_array_equal(lay.mass_diagonal(), [1, 1, 0, 0])
    assert lay.index("B1", "v_q") == 3


def test_layout_duplicate_raises():
    with pytest.raises(LayoutError):
        build_layout([("G1", ["delta"]), ("G1", ["delta"])])


def test_layout_unknown_state_raises():
    with pytest.raises(LayoutError):
        build_layout([("G1", ["delta"])]).index("G1", "omega")


def _pi_line_circuit():
    c = Circuit(377.0)
    a = c.add_node("B1", "v", 0.05)
    b = c.add_node("B2", "v", 0.05)
    c.add_inductor("L12", "i", node(a), node(b), 0.01, 0.1)
    return c


def test_dq_pi_line_has_six_states():
    c = _pi_line_circuit()
    lay = build_layout([(o, phase_names(s, "dq")) for o, s in c.quantities])
    assert lay.n_diff == 6


def test_abc_pi_line_has_nine_states():
    c = _pi_line_circuit()
    lay = build_layout([(o, phase_names(s, "abc")) for o, s in c.quantities])
    assert lay.n_diff == 9


def test_wrap_angle_range():
    th = np.array([-7.0, -np.pi, 0.0, np.pi, 4.0, 100.0])
    w = wrap_angle(th)
    assert np.all(w > -np.pi) and np.all(w <= np.pi)
    np.testing.assert_allclose(np.exp(1j * w), np.exp(1j * th), atol=1e-12)


@given(st.lists(st.tuples(names, st.lists(names, min_size=1, max_size=4, unique=True)),
                max_size=5, unique_by=lambda t: t[0]))
def test_layout_determinism(decl):
    a, b = build_layout(decl), build_layout(list(decl))
    assert a == b
    assert sorted(a.index(o, s) for o, ss in decl for s in ss) == list(range(a.n))


def test_branch_validation():
    with pytest.raises(ConfigError):
        Branch("L", "B1", "B1", 0.01, 0.1)
    with pytest.raises(ConfigError):
        Branch("L", "B1", "B2", 0.01, 0.0)


def test_circuit_rejects_bad_elements():
    c = Circuit(377.0)
    with pytest.raises(ConfigError):
        c.add_node("B1", "v", 0.0)
    with pytest.raises(ConfigError):
        c.add_inductor("L", "i", port("x"), GROUND, 0.0, 0.0)
