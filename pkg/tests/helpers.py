"""Small scenarios shared by several test modules."""
from __future__ import annotations

from multifid.scenario import scenario_from_dict

INNER_GAINS = {"k_pv": 0.59, "k_iv": 736.0, "k_pc": 1.27, "k_ic": 14.3}


def smib_inverter(inner: str = "full", gain_scale: float = 1.0, outer: str = "droop", pll: str = "kaura",
                  t_end: float = 1.0, tol: float = 1e-8, interface: str = "thevenin") -> object:
    """One inverter behind a short line to an ideal source, with a power-reference step."""
    params = {k: v * gain_scale for k, v in INNER_GAINS.items()}
    variant = {"outer": outer, "inner": inner, "filter": "full", "pll": pll}
    return scenario_from_dict({
        "schema_version": 1,
        "name": "single inverter, infinite bus",
        "buses": [{"id": "B1"}, {"id": "B2"}],
        "branches": [{"id": "L12", "from": "B1", "to": "B2", "r": 0.01, "l": 0.1, "c": 0.02}],
        "devices": [
            {"id": "G1", "type": "inverter", "bus": "B1", "control": "pv", "p_set": 0.5, "v_set": 1.0,
             "variant": variant, "params": params,
             "formulation_overrides": {"qsp": {"variant": {"inner": "reduced", "filter": "reduced",
                                                           "interface": interface}}}},
            {"id": "S", "type": "source", "bus": "B2", "control": "slack", "v_set": 1.0},
        ],
        "events": [{"time": 0.05, "kind": "set_parameter", "target": "G1", "parameter": "p_ref", "value": 0.8}],
        "formulation": "dq",
        "solver": {"dq": {"method": "adaptive", "abstol": tol, "reltol": tol},
                   "qsp": {"method": "adaptive", "abstol": tol, "reltol": tol}},
        "t_end": t_end,
        "output_dt": 1e-4,
    })


def smib_machine(stator: str, t_end: float = 1.5, output_dt: float = 1 / 7200, tol: float = 1e-8) -> object:
    """One synchronous machine behind a short line to an ideal source whose voltage dips 10 %."""
    return scenario_from_dict({
        "schema_version": 1,
        "name": "single machine, infinite bus",
        "buses": [{"id": "B1"}, {"id": "B2"}],
        "branches": [{"id": "L12", "from": "B1", "to": "B2", "r": 0.01, "l": 0.1, "c": 0.02}],
        "devices": [
            {"id": "M1", "type": "machine", "bus": "B1", "control": "pv", "p_set": 0.5, "v_set": 1.0,
             "variant": {"stator": stator}, "params": {"D": 2.0},
             "formulation_overrides": {"qsp": {"variant": {"stator": "algebraic"}}}},
            {"id": "S", "type": "source", "bus": "B2", "control": "slack", "v_set": 1.0},
        ],
        "events": [{"time": 0.1, "kind": "set_parameter", "target": "S", "parameter": "v_mag", "value": 0.9}],
        "formulation": "dq",
        "solver": {"dq": {"method": "adaptive", "abstol": tol, "reltol": tol},
                   "qsp": {"method": "adaptive", "abstol": tol, "reltol": tol}},
        "t_end": t_end,
        "output_dt": output_dt,
    })
