"""Scenario description, file loading and semantic validation.

A scenario file is JSON (or TOML when a TOML parser is importable) with a
top-level ``schema_version``. Field reference::

    schema_version  int, must equal SCHEMA_VERSION
    name            str
    base            {s_base_mva, v_base_kv, f_hz}
    buses           [{id, shunt_g, shunt_b}]              shunts in pu, optional
    branches        [{id, from, to, r, l, c, g, in_service}]
    loads           [{id, bus, p, q}]                     constant impedance at 1 pu
    devices         [{id, type, bus, control, p_set, v_set, v_angle,
                      variant, params, formulation_overrides}]
    events          [{time, kind, target, parameter, value}]
    formulation     "qsp" | "dq" | "abc"
    solver          {"<formulation>": {SolverConfig fields}}
    t_end           s
    output_dt       s, uniform recording grid
    record          ["<owner>.<signal>", ...]; empty records everything

``type`` is ``inverter``, ``machine`` or ``source`` (ideal voltage source).
``control`` is ``slack`` or ``pv`` and sets the power-flow role.
``formulation_overrides`` maps a formulation to ``{"variant": {...},
"params": {...}}`` merged over the device defaults when that formulation
is compiled. Event kinds are ``branch_trip``, ``branch_close`` and
``set_parameter``.
"""
from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from ..core import PerUnitBase
from ..devices.inverter import PARAM_NAMES as INVERTER_PARAM_NAMES
from ..devices.inverter import InverterParams, InverterVariant
from ..devices.machine import PARAM_NAMES as MACHINE_PARAM_NAMES
from ..devices.machine import STATOR_KINDS, MachineParams
from ..errors import ConfigError, ValidationError
from ..network import Branch
from ..solvers.config import SolverConfig

SCHEMA_VERSION = 1
FORMULATIONS = ("qsp", "dq", "abc")
DEVICE_TYPES = ("inverter", "machine", "source")
EVENT_KINDS = ("branch_trip", "branch_close", "set_parameter")
SOURCE_PARAM_NAMES = ("v_mag", "v_angle")

DEFAULT_SOLVERS = {
    "abc": {"method": "trapezoidal", "dt_fixed": 5e-6},
    "dq": {"method": "adaptive", "abstol": 1e-6, "reltol": 1e-6},
    "qsp": {"method": "adaptive", "abstol": 1e-5, "reltol": 1e-5},
}


@dataclass(frozen=True)
class Bus:
    id: str
    shunt_g: float = 0.0
    shunt_b: float = 0.0


@dataclass(frozen=True)
class Load:
    """Constant-impedance load drawing ``p + jq`` at 1 pu voltage."""

    id: str
    bus: str
    p: float
    q: float = 0.0

    @property
    def admittance(self) -> complex:
        return complex(self.p, -self.q)


@dataclass(frozen=True)
class Device:
    id: str
    type: str
    bus: str
    control: str = "pv"
    p_set: float = 0.0
    v_set: float = 1.0
    v_angle: float = 0.0
    variant: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    formulation_overrides: dict = field(default_factory=dict)

    def resolved(self, formulation: str) -> tuple[dict, dict]:
        """Variant and parameter dicts with the formulation override applied."""
        ov = self.formulation_overrides.get(formulation, {})
        return {**self.variant, **ov.get("variant", {})}, {**self.params, **ov.get("params", {})}

    def inverter_variant(self, formulation: str) -> InverterVariant:
        return InverterVariant(**self.resolved(formulation)[0])

    def inverter_params(self, formulation: str) -> InverterParams:
        return InverterParams(**self.resolved(formulation)[1])

    def machine_stator(self, formulation: str) -> str:
        return self.resolved(formulation)[0].get("stator", "fullflux")

    def machine_params(self, formulation: str) -> MachineParams:
        return MachineParams(**self.resolved(formulation)[1])


@dataclass(frozen=True)
class Event:
    time: float
    kind: str
    target: str
    parameter: str | None = None
    value: float | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    base: PerUnitBase
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    loads: tuple[Load, ...]
    devices: tuple[Device, ...]
    events: tuple[Event, ...]
    formulation: str
    solver: dict
    t_end: float
    output_dt: float = 1e-4
    record: tuple[str, ...] = ()
    schema_version: int = SCHEMA_VERSION
    source_text: str = field(default="", compare=False, repr=False)

    def solver_config(self, formulation: str | None = None, **overrides) -> SolverConfig:
        f = formulation or self.formulation
        cfg = {**DEFAULT_SOLVERS[f], **self.solver.get(f, {})}
        return SolverConfig(**cfg).replace(**overrides)

    def bus_ids(self) -> list[str]:
        return [b.id for b in self.buses]

    def device(self, dev_id: str) -> Device:
        for d in self.devices:
            if d.id == dev_id:
                return d
        raise ConfigError(f"unknown device {dev_id!r}")

    def with_formulation(self, formulation: str) -> "Scenario":
        return _replace(self, formulation=formulation)

    def replace(self, **kw) -> "Scenario":
        return _replace(self, **kw)


def _replace(sc: Scenario, **kw) -> Scenario:
    from dataclasses import replace
    return replace(sc, **kw)


# -- parsing ---------------------------------------------------------------------

def _num(d: dict, key: str, ctx: str, default=None) -> float:
    if key not in d:
        if default is None:
            raise ConfigError(f"{ctx}: missing field {key!r}")
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{ctx}.{key}: expected a number, got {v!r}")
    return float(v)


def _str(d: dict, key: str, ctx: str, default=None) -> str:
    if key not in d:
        if default is None:
            raise ConfigError(f"{ctx}: missing field {key!r}")
        return default
    if not isinstance(d[key], str):
        raise ConfigError(f"{ctx}.{key}: expected a string, got {d[key]!r}")
    return d[key]


def _list(d: dict, key: str) -> list:
    v = d.get(key, [])
    if not isinstance(v, list):
        raise ConfigError(f"{key}: expected a list")
    return v


def scenario_from_dict(data: dict, source_text: str = "") -> Scenario:
    """Build a :class:`Scenario` from parsed file content.

    Raises
    ------
    ConfigError
        On schema errors (missing or mistyped fields); the message names the
        offending field path.
    """
    if not isinstance(data, dict):
        raise ConfigError("scenario root must be a mapping")
    data = copy.deepcopy(data)
    ver = data.get("schema_version")
    if ver != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {ver!r}")
    b = data.get("base", {})
    base = PerUnitBase.from_frequency(_num(b, "f_hz", "base", 60.0), _num(b, "s_base_mva", "base", 100.0),
                                      _num(b, "v_base_kv", "base", 230.0))
    buses = tuple(Bus(_str(x, "id", f"buses[{k}]"), _num(x, "shunt_g", f"buses[{k}]", 0.0),
                      _num(x, "shunt_b", f"buses[{k}]", 0.0)) for k, x in enumerate(_list(data, "buses")))
    branches = []
    for k, x in enumerate(_list(data, "branches")):
        ctx = f"branches[{k}]"
        branches.append(Branch(id=_str(x, "id", ctx), from_bus=_str(x, "from", ctx), to_bus=_str(x, "to", ctx),
                               r=_num(x, "r", ctx), l=_num(x, "l", ctx), c=_num(x, "c", ctx, 0.0),
                               g=_num(x, "g", ctx, 0.0), in_service=bool(x.get("in_service", True))))
    loads = tuple(Load(_str(x, "id", f"loads[{k}]"), _str(x, "bus", f"loads[{k}]"), _num(x, "p", f"loads[{k}]"),
                       _num(x, "q", f"loads[{k}]", 0.0)) for k, x in enumerate(_list(data, "loads")))
    devices = []
    for k, x in enumerate(_list(data, "devices")):
        ctx = f"devices[{k}]"
        for key in ("variant", "params", "formulation_overrides"):
            if not isinstance(x.get(key, {}), dict):
                raise ConfigError(f"{ctx}.{key}: expected a mapping")
        devices.append(Device(id=_str(x, "id", ctx), type=_str(x, "type", ctx), bus=_str(x, "bus", ctx),
                              control=_str(x, "control", ctx, "pv"), p_set=_num(x, "p_set", ctx, 0.0),
                              v_set=_num(x, "v_set", ctx, 1.0), v_angle=_num(x, "v_angle", ctx, 0.0),
                              variant=x.get("variant", {}), params=x.get("params", {}),
                              formulation_overrides=x.get("formulation_overrides", {})))
    events = []
    for k, x in enumerate(_list(data, "events")):
        ctx = f"events[{k}]"
        kind = _str(x, "kind", ctx)
        events.append(Event(time=_num(x, "time", ctx), kind=kind, target=_str(x, "target", ctx),
                            parameter=x.get("parameter"),
                            value=_num(x, "value", ctx) if kind == "set_parameter" else None))
    solver = data.get("solver", {})
    if not isinstance(solver, dict) or not all(isinstance(v, dict) for v in solver.values()):
        raise ConfigError("solver: expected a mapping of formulation -> settings")
    record = data.get("record", [])
    if not isinstance(record, list) or not all(isinstance(r, str) for r in record):
        raise ConfigError("record: expected a list of '<owner>.<signal>' strings")
    return Scenario(name=_str(data, "name", "scenario", "scenario"), base=base, buses=buses,
                    branches=tuple(branches), loads=loads, devices=tuple(devices),
                    events=tuple(sorted(events, key=lambda e: e.time)),
                    formulation=_str(data, "formulation", "scenario", "dq"), solver=solver,
                    t_end=_num(data, "t_end", "scenario"), output_dt=_num(data, "output_dt", "scenario", 1e-4),
                    record=tuple(record), schema_version=ver, source_text=source_text)


def _parse_text(text: str, suffix: str) -> dict:
    if suffix == ".toml":
        try:
            import tomllib
        except ImportError:
            try:
                import tomli as tomllib
            except ImportError:
                raise ConfigError("TOML scenario files need Python >= 3.11 or the tomli package") from None
        try:
            return tomllib.loads(text)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"TOML parse error: {exc}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"JSON parse error at line {exc.lineno}, column {exc.colno}: {exc.msg}") from None


def load_scenario(path) -> Scenario:
    """Read and parse a scenario file (schema checks only; see :func:`validate`).

    Raises
    ------
    OSError
        If the file cannot be read.
    ConfigError
        On parse or schema errors.
    """
    path = Path(path)
    text = path.read_text()
    return scenario_from_dict(_parse_text(text, path.suffix.lower()), source_text=text)


def default_scenario_path() -> Path:
    return Path(str(resources.files("multifid") / "data" / "three_bus.json"))


def default_scenario() -> Scenario:
    return load_scenario(default_scenario_path())


# -- semantic validation ---------------------------------------------------------

def diagnose(sc: Scenario, formulation: str | None = None) -> list[str]:
    """Semantic checks; returns human-readable diagnostics (empty when clean).

    Each compatibility diagnostic starts with the rule name in brackets.
    """
    f = formulation or sc.formulation
    out: list[str] = []
    if f not in FORMULATIONS:
        return [f"[formulation] must be one of {FORMULATIONS}, got {f!r}"]
    if not (sc.t_end > 0 and math.isfinite(sc.t_end)):
        out.append("[t_end] must be positive")
    if not 0 < sc.output_dt <= sc.t_end:
        out.append("[output_dt] must lie in (0, t_end]")
    ids = [b.id for b in sc.buses]
    if len(set(ids)) != len(ids):
        out.append("[buses] duplicate bus id")
    owners = ids + [b.id for b in sc.branches] + [ld.id for ld in sc.loads] + [d.id for d in sc.devices]
    dup = sorted({o for o in owners if owners.count(o) > 1})
    if dup:
        out.append(f"[ids] identifiers must be unique across buses, branches, loads and devices: {dup}")
    busset = set(ids)
    for br in sc.branches:
        for end in (br.from_bus, br.to_bus):
            if end not in busset:
                out.append(f"[branches] {br.id} references unknown bus {end!r}")
        if br.from_bus == br.to_bus:
            out.append(f"[branches] {br.id} connects a bus to itself")
        if br.r < 0 or br.l <= 0 or br.c < 0 or br.g < 0:
            out.append(f"[branches] {br.id} needs r >= 0, l > 0, c >= 0, g >= 0")
    for ld in sc.loads:
        if ld.bus not in busset:
            out.append(f"[loads] {ld.id} references unknown bus {ld.bus!r}")
        if ld.p < 0 or (ld.p == 0 and ld.q == 0):
            out.append(f"[loads] {ld.id} needs p >= 0 and a nonzero demand")
    slack = [d for d in sc.devices if d.control == "slack"]
    if len(slack) != 1:
        out.append(f"[slack] exactly one device must have control 'slack', found {len(slack)}")
    source_buses = set()
    per_bus: dict[str, int] = {}
    for d in sc.devices:
        ctx = f"[devices] {d.id}"
        if d.bus not in busset:
            out.append(f"{ctx} references unknown bus {d.bus!r}")
        if d.type not in DEVICE_TYPES:
            out.append(f"{ctx}: type must be one of {DEVICE_TYPES}")
            continue
        if d.control not in ("slack", "pv"):
            out.append(f"{ctx}: control must be 'slack' or 'pv'")
        if d.v_set <= 0:
            out.append(f"{ctx}: v_set must be positive")
        per_bus[d.bus] = per_bus.get(d.bus, 0) + 1
        unknown = set(d.formulation_overrides) - set(FORMULATIONS)
        if unknown:
            out.append(f"{ctx}: formulation_overrides has unknown keys {sorted(unknown)}")
        if d.type == "source":
            source_buses.add(d.bus)
            if d.variant or set(d.params) - set(SOURCE_PARAM_NAMES):
                out.append(f"{ctx}: a source takes no variant and only params {SOURCE_PARAM_NAMES}")
            continue
        variant, params = d.resolved(f)
        names = INVERTER_PARAM_NAMES if d.type == "inverter" else MACHINE_PARAM_NAMES
        bad = set(params) - set(names)
        if bad:
            out.append(f"{ctx}: unknown parameters {sorted(bad)}")
            continue
        try:
            if d.type == "inverter":
                var = d.inverter_variant(f)
                d.inverter_params(f)
                if f == "qsp" and (var.inner == "full" or var.filter == "full"):
                    out.append(f"[qsp-reduced-device] {d.id}: QSP uses an algebraic network, so the inverter "
                               "needs inner='reduced' and filter='reduced' (set formulation_overrides.qsp)")
                if f != "qsp" and var.interface == "norton":
                    out.append(f"[emt-interface] {d.id}: the Norton interface applies to the QSP network only")
            else:
                if set(variant) - {"stator"}:
                    out.append(f"{ctx}: machine variant takes only 'stator'")
                stator = d.machine_stator(f)
                if stator not in STATOR_KINDS:
                    out.append(f"{ctx}: stator must be one of {STATOR_KINDS}")
                d.machine_params(f)
                if f == "qsp" and stator == "fullflux":
                    out.append(f"[qsp-reduced-device] {d.id}: QSP needs the algebraic stator "
                               "(set formulation_overrides.qsp.variant.stator)")
        except (ConfigError, TypeError) as exc:
            out.append(f"{ctx}: {exc}")
    for bus, count in per_bus.items():
        if count > 1:
            out.append(f"[one-device-per-bus] bus {bus} hosts {count} devices")
    if f != "qsp":
        cap = {b: 0.0 for b in ids}
        for br in sc.branches:
            if br.in_service:
                cap[br.from_bus] = cap.get(br.from_bus, 0.0) + br.c / 2
                cap[br.to_bus] = cap.get(br.to_bus, 0.0) + br.c / 2
        for b in sc.buses:
            cap[b.id] += b.shunt_b
        for b in ids:
            if b not in source_buses and cap[b] <= 0:
                out.append(f"[emt-capacitance] bus {b} needs positive shunt capacitance in EMT formulations")
    dev_ids = {d.id: d for d in sc.devices}
    br_ids = {b.id for b in sc.branches}
    for ev in sc.events:
        ctx = f"[events] {ev.kind} at t={ev.time:g}"
        if not 0 < ev.time < sc.t_end:
            out.append(f"{ctx}: event time must lie strictly inside (0, t_end)")
        if ev.kind not in EVENT_KINDS:
            out.append(f"{ctx}: kind must be one of {EVENT_KINDS}")
        elif ev.kind in ("branch_trip", "branch_close"):
            if ev.target not in br_ids:
                out.append(f"{ctx}: unknown branch {ev.target!r}")
        else:
            dev = dev_ids.get(ev.target)
            if dev is None:
                out.append(f"{ctx}: unknown device {ev.target!r}")
            else:
                names = {"inverter": INVERTER_PARAM_NAMES, "machine": MACHINE_PARAM_NAMES,
                         "source": SOURCE_PARAM_NAMES}.get(dev.type, ())
                if ev.parameter not in names:
                    out.append(f"{ctx}: device {dev.id} has no parameter {ev.parameter!r}")
    try:
        sc.solver_config(f)
    except (ConfigError, TypeError) as exc:
        out.append(f"[solver] {exc}")
    for key in sc.solver:
        if key not in FORMULATIONS:
            out.append(f"[solver] unknown formulation key {key!r}")
    return out


def validate(sc: Scenario, formulation: str | None = None) -> Scenario:
    """Raise :class:`ValidationError` listing all diagnostics, else return ``sc``."""
    diags = diagnose(sc, formulation)
    if diags:
        raise ValidationError(diags)
    return sc
