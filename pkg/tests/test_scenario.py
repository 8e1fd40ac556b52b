import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from multifid.errors import ConfigError, ValidationError
from multifid.network import TopologyEvent, apply_topology_event
from multifid.scenario import (available_signals, compare, default_record, default_scenario,
                               default_scenario_path, diagnose, initialize,
                               load_scenario, power_flow, read_csv, run, scenario_from_dict, validate)
from multifid.scenario.run import TimeSeriesResult
from multifid.solvers.config import SolverStats
from multifid.transforms import park


def _two_bus(p: float, r: float = 0.0, l: float = 0.1, v2: float = 1.0):
    return scenario_from_dict({
        "schema_version": 1,
        "buses": [{"id": "B1"}, {"id": "B2"}],
        "branches": [{"id": "L12", "from": "B1", "to": "B2", "r": r, "l": l}],
        "devices": [
            {"id": "S1", "type": "source", "bus": "B1", "control": "slack", "v_set": 1.0},
            {"id": "S2", "type": "source", "bus": "B2", "control": "pv", "p_set": p, "v_set": v2},
        ],
        "formulation": "qsp",
        "t_end": 1.0,
    })


def _default_dict() -> dict:
    with open(default_scenario_path()) as fh:
        return json.load(fh)


def _quiet(sc, t_end: float = 1.0):
    return sc.replace(events=(), t_end=t_end)


# -- power flow ------------------------------------------------------------------

def test_power_flow_zero_transfer_equal_angles():
    pf = power_flow(_two_bus(0.0))
    assert np.angle(pf.v[1]) == pytest.approx(np.angle(pf.v[0]), abs=1e-12)


def test_power_flow_closed_form_transfer_angle():
    v2 = 0.98
    pf = power_flow(_two_bus(0.5, v2=v2))
    # P = V1 V2 sin(θ2 - θ1) / x with x = 0.1
    expected = np.arcsin(0.5 * 0.1 / (1.0 * v2))
    assert np.angle(pf.v[1]) - np.angle(pf.v[0]) == pytest.approx(expected, abs=1e-10)
    assert abs(pf.v[1]) == pytest.approx(v2, abs=1e-12)


def test_power_flow_default_mismatch():
    pf = power_flow(default_scenario())
    assert pf.mismatch < 1e-10
    s = pf.v * np.conj(pf.ybus @ pf.v)
    assert s[pf.buses.index("B3")].real == pytest.approx(1.25, abs=1e-10)
    assert abs(s[pf.buses.index("B2")]) < 1e-10


# -- initialization ---------------------------------------------------------------

@pytest.mark.parametrize("f", ["qsp", "dq"])
def test_initial_state_does_not_drift(f):
    sc = _quiet(default_scenario())
    model = initialize(sc, f).model
    states = model.layout.names()
    res = run(sc, f, record=states)
    assert res.ok
    drift = max(np.max(np.abs(res[n] - res[n][0])) for n in states)
    assert drift < 1e-8


def test_initial_residual_below_floor():
    for f in ("qsp", "dq"):
        ic = initialize(default_scenario(), f)
        assert ic.residual < 1e-10
        assert np.max(np.abs(ic.model.rhs(0.0, ic.x0))) < 1e-10


def test_abc_envelope_does_not_drift():
    sc = _quiet(default_scenario())
    model = initialize(sc, "abc").model
    names = [f"B{k}.v_{p}" for k in (1, 2, 3) for p in "abc"]
    res = run(sc, "abc", record=names)
    assert res.ok and res.stats.accepted_steps == 200_000
    for k in (1, 2, 3):
        dq = park(np.column_stack([res[f"B{k}.v_{p}"] for p in "abc"]), model.omega_b * res.t)
        env = np.hypot(dq[:, 0], dq[:, 1])
        assert np.max(np.abs(env - env[0])) < 1e-6


def test_abc_start_is_inverse_park_of_dq():
    sc = default_scenario()
    dq, abc = initialize(sc, "dq"), initialize(sc, "abc")
    for bus in ("B1", "B2", "B3"):
        v_abc = [abc.x0[abc.model.layout.get(bus, f"v_{p}")] for p in "abc"]
        v_dq = [dq.x0[dq.model.layout.get(bus, s)] for s in ("v_d", "v_q")]
        np.testing.assert_allclose(park(v_abc, 0.0)[:2], v_dq, atol=1e-12)


# -- compilation -------------------------------------------------------------------

def _network_states(model) -> int:
    owners = {b.id for b in default_scenario().branches} | {"B1", "B2", "B3", "LD2"}
    return sum(1 for owner, _ in model.layout.entries if owner in owners)


def test_state_counts():
    sc = default_scenario()
    qsp, dq, abc = (initialize(sc, f).model for f in ("qsp", "dq", "abc"))
    # ring: 3 bus voltages, 3 branch currents, 1 load inductor current
    assert _network_states(dq) == 2 * 7
    assert _network_states(abc) == 3 * 7
    assert _network_states(abc) == 1.5 * _network_states(dq)
    assert dq.n == dq.n_diff and abc.n == abc.n_diff
    assert qsp.n - qsp.n_diff == 2 * 3
    assert qsp.n_diff < dq.n_diff - _network_states(dq)


def test_dq_line_states():
    names = initialize(default_scenario(), "dq").model.layout.names()
    assert {"L12.i_d", "L12.i_q", "B1.v_d", "B1.v_q"} <= set(names)


# -- validation ---------------------------------------------------------------------

def test_default_is_clean():
    for f in ("qsp", "dq", "abc"):
        assert diagnose(default_scenario(), f) == []


def test_event_after_end_is_named():
    d = _default_dict()
    d["events"][0]["time"] = 12.0
    diags = diagnose(scenario_from_dict(d))
    assert any(m.startswith("[events]") and "t_end" in m for m in diags)


def test_qsp_full_filter_names_rule():
    d = _default_dict()
    del d["devices"][1]["formulation_overrides"]
    with pytest.raises(ValidationError) as exc:
        validate(scenario_from_dict(d), "qsp")
    assert any("[qsp-reduced-device]" in m and "G2" in m for m in exc.value.diagnostics)


def test_unknown_bus_and_duplicate_ids():
    d = _default_dict()
    d["devices"][1]["bus"] = "B9"
    d["loads"][0]["id"] = "L12"
    diags = diagnose(scenario_from_dict(d))
    assert any("unknown bus 'B9'" in m for m in diags)
    assert any(m.startswith("[ids]") for m in diags)


def test_schema_version_required():
    d = _default_dict()
    d["schema_version"] = 7
    with pytest.raises(ConfigError):
        scenario_from_dict(d)


def test_load_scenario_reports_json_position(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"schema_version": 1,\n "buses": [}\n')
    with pytest.raises(ConfigError, match="line 2"):
        load_scenario(p)


# -- run -------------------------------------------------------------------------------

def test_qsp_power_balance():
    sc = default_scenario()
    res = run(sc, "qsp", t_end=1.0)
    y = {False: power_flow(sc).ybus,
         True: power_flow(sc, branches=apply_topology_event(sc.branches, TopologyEvent(0.25, "L12"))).ybus}
    v = np.column_stack([res[f"B{k}.v_d"] + 1j * res[f"B{k}.v_q"] for k in (1, 2, 3)])
    inj = sum((v[:, b] * np.conj(res[f"{g}.i_g_d"] + 1j * res[f"{g}.i_g_q"])).real
              for g, b in (("G1", 0), ("G2", 2)))
    absorbed = np.array([(vk.conj() @ y[bool(tk > 0.25)] @ vk).real for tk, vk in zip(res.t, v)])
    assert np.max(np.abs(inj - absorbed)) < 1e-6


def test_dq_power_balance_at_steady_state():
    sc = default_scenario()
    res = run(sc, "dq", t_end=0.2)
    ybus = power_flow(sc).ybus
    v = np.column_stack([res[f"B{k}.v_d"] + 1j * res[f"B{k}.v_q"] for k in (1, 2, 3)])
    inj = sum((v[:, b] * np.conj(res[f"{g}.i_g_d"] + 1j * res[f"{g}.i_g_q"])).real
              for g, b in (("G1", 0), ("G2", 2)))
    absorbed = np.einsum("ti,ij,tj->t", v.conj(), ybus, v).real
    assert np.max(np.abs(inj - absorbed)) < 1e-6


def test_run_records_uniform_grid_and_events():
    sc = default_scenario()
    res = run(sc, "qsp", t_end=0.5)
    assert res.ok
    np.testing.assert_allclose(np.diff(res.t), sc.output_dt, rtol=1e-9)
    assert res.names() == default_record(sc)
    assert res.events == [{"time": 0.25, "kind": "branch_trip", "target": "L12", "detail": "opened"}]
    assert res.raw_t[0] == 0.0 and np.all(np.diff(res.raw_t) > 0)


def test_run_is_deterministic():
    a = run(default_scenario(), "qsp", t_end=0.5)
    b = run(default_scenario(), "qsp", t_end=0.5)
    for n in a.names():
        np.testing.assert_array_equal(a[n], b[n])


def test_unknown_record_signal():
    with pytest.raises(ConfigError):
        run(default_scenario(), "qsp", t_end=0.1, record=["G1.bogus"])


def test_failure_returns_partial_result():
    sc = default_scenario()
    res = run(sc, "dq", t_end=0.5, solver=sc.solver_config("dq", dt_min=1e-3))
    assert not res.ok
    assert res.failure_time == pytest.approx(0.25)
    assert res.failure_state in available_signals(res.final_model)
    assert res.t[-1] <= 0.25 + 1e-12
    assert all(len(s) == len(res.t) for s in res.signals.values())


def test_qsp_misses_fast_oscillation():
    sc = default_scenario()
    q, d = run(sc, "qsp", t_end=0.5), run(sc, "dq", t_end=0.5)
    win = (q.t > 0.25) & (q.t < 0.3)
    # line-trip ringing shows up as curvature in the EMT voltage only
    wiggle = {k: np.max(np.abs(np.diff(r["B2.v_mag"][win], 2))) for k, r in (("q", q), ("d", d))}
    assert wiggle["d"] > 10 * wiggle["q"]


# -- comparison and files ----------------------------------------------------------------

def test_compare_with_itself_is_zero():
    res = run(default_scenario(), "qsp", t_end=0.5)
    rep = compare(res, res)
    assert rep.errors and all(e.max_abs == 0 and e.rms == 0 for e in rep.errors)


def test_compare_interpolates_and_maps():
    t = np.linspace(0, 1, 11)
    a = TimeSeriesResult("x", t, {"s": 2 * t}, SolverStats())
    b = TimeSeriesResult("y", np.linspace(0, 1, 3), {"u": 2 * np.linspace(0, 1, 3) + 0.1}, SolverStats())
    rep = compare(a, b, {"s": "u"})
    assert rep.get("s").max_abs == pytest.approx(0.1)
    assert rep.get("s").rms == pytest.approx(0.1)


def test_compare_without_overlap():
    a = TimeSeriesResult("x", np.array([0.0, 1.0]), {"s": np.zeros(2)}, SolverStats())
    b = TimeSeriesResult("y", np.array([2.0, 3.0]), {"s": np.zeros(2)}, SolverStats())
    with pytest.raises(ConfigError):
        compare(a, b)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(allow_nan=False, allow_infinity=False, width=64), min_size=1, max_size=20))
def test_csv_round_trip_is_lossless(tmp_path_factory, values):
    t = np.arange(len(values)) * 1e-4
    res = TimeSeriesResult("qsp", t, {"G1.p_e": np.array(values), "B1.v_mag": -np.array(values)}, SolverStats())
    p = tmp_path_factory.mktemp("csv") / "r.csv"
    res.to_csv(p)
    t2, sig = read_csv(p)
    np.testing.assert_array_equal(t2, t)
    assert list(sig) == ["G1.p_e", "B1.v_mag"]
    np.testing.assert_array_equal(sig["G1.p_e"], values)
    np.testing.assert_array_equal(sig["B1.v_mag"], -np.array(values))
