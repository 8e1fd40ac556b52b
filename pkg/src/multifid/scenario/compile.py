"""Compile a scenario into a flat kernel system at one fidelity level.

* ``qsp``: device states are differential; bus voltages (d, q) are
  algebraic and satisfy ``I(x) - Y v = 0``. Source buses are fixed.
* ``dq``: network inductor currents and bus voltages are differential in a
  frame rotating at ω_s; the system is time invariant.
* ``abc``: the same circuit per phase; devices see Park-transformed
  measurements and drive inverse-Park'd ports, so the system is time varying.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..devices import inverter as inv
from ..devices import machine as mach
from ..devices.inverter import InverterParams
from ..devices.machine import MachineParams
from ..errors import ConfigError
from ..network import GROUND, Circuit, abc_matrix, dq_matrix, node, port, realify
from ..transforms import park
from .powerflow import network_ybus

DQ = ("d", "q")
ABC = ("a", "b", "c")
DEV_CODE = {"source": 0, "inverter": 1, "machine": 2}
OUTPUT_NAMES = inv.OUTPUT_NAMES


def phase_names(name: str, formulation: str) -> list[str]:
    return [f"{name}_{s}" for s in (ABC if formulation == "abc" else DQ)]


def device_state_names(dev, formulation: str) -> list[str]:
    if dev.type == "inverter":
        return inv.state_names(dev.inverter_variant(formulation))
    if dev.type == "machine":
        return mach.state_names(dev.machine_stator(formulation))
    return []


def ordered_devices(sc) -> list:
    """Sources first so that their ports can be measured by later devices."""
    return [d for d in sc.devices if d.type == "source"] + [d for d in sc.devices if d.type != "source"]


@dataclass
class SystemModel:
    """A compiled system together with its layout and metadata.

    Implements the solver problem protocol (``n``, ``n_diff``, ``rhs``,
    ``jacobian``, ``state_name``, ``autonomous``).
    """

    formulation: str
    layout: object
    kernel: object
    devices: list
    params: dict
    branches: tuple
    omega_b: float
    bus_ids: list
    bus_index: dict
    source_of_bus: dict
    fd_eps: float = 1.5e-8
    fd_central: bool = False
    _out: np.ndarray = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.layout.n

    @property
    def n_diff(self) -> int:
        return self.layout.n_diff

    @property
    def autonomous(self) -> bool:
        return self.formulation != "abc"

    @property
    def jacobian_rhs_cost(self) -> int:
        return self.n * (2 if self.fd_central else 1)

    def state_name(self, k: int) -> str:
        return self.layout.name(k)

    def rhs(self, t: float, x) -> np.ndarray:
        out = np.empty(self.n)
        self.kernel.rhs(float(t), np.ascontiguousarray(x, dtype=float), out)
        return out

    def jacobian(self, t: float, x, f0=None) -> np.ndarray:
        x = np.ascontiguousarray(x, dtype=float)
        if f0 is None:
            f0 = self.rhs(t, x)
        J = np.empty((self.n, self.n))
        self.kernel.jacobian(float(t), x.copy(), np.ascontiguousarray(f0, dtype=float), J, self.fd_eps,
                             int(self.fd_central))
        return J

    def outputs(self, t: float, x) -> np.ndarray:
        """Per-device derived quantities, shape ``(n_devices, len(OUTPUT_NAMES))``."""
        out = np.zeros((len(self.devices), len(OUTPUT_NAMES)))
        self.kernel.outputs(float(t), np.ascontiguousarray(x, dtype=float), out)
        return out

    def bus_voltages(self, t, X) -> np.ndarray:
        """Network-frame bus voltage phasors, shape ``(len(t), n_bus)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        X = np.atleast_2d(X)
        v = np.zeros((len(t), len(self.bus_ids)), dtype=complex)
        for j, bus in enumerate(self.bus_ids):
            idx = self.bus_index.get(bus)
            if idx is not None:
                if self.formulation == "abc":
                    dq = park(X[:, idx:idx + 3], self.omega_b * t)
                    v[:, j] = dq[:, 0] + 1j * dq[:, 1]
                else:
                    v[:, j] = X[:, idx] + 1j * X[:, idx + 1]
            else:
                p = self.params[self.devices[self.source_of_bus[bus]].id]
                v[:, j] = p[0] * np.exp(1j * p[1])
        return v

    def device_index(self, dev_id: str) -> int:
        for k, d in enumerate(self.devices):
            if d.id == dev_id:
                return k
        raise ConfigError(f"unknown device {dev_id!r}")


def param_vector(dev, p) -> np.ndarray:
    if dev.type == "source":
        return np.asarray(p, dtype=float)
    return p.vector()


def default_params(dev, formulation: str):
    if dev.type == "inverter":
        return dev.inverter_params(formulation)
    if dev.type == "machine":
        return dev.machine_params(formulation)
    return np.array([dev.v_set, dev.v_angle])


def _emt_circuit(sc, formulation, branches, devices, params, omega_b):
    circ = Circuit(omega_b)
    source_bus = {d.bus: d.id for d in devices if d.type == "source"}
    cap = {b.id: b.shunt_b for b in sc.buses}
    cond = {b.id: b.shunt_g for b in sc.buses}
    for br in branches:
        if br.in_service:
            for end in (br.from_bus, br.to_bus):
                cap[end] += 0.5 * br.c
                cond[end] += 0.5 * br.g
    reactive_loads = []
    for ld in sc.loads:
        if ld.bus in source_bus:
            continue
        # parallel g || l (or g || c) at 1 pu: y = p - jq
        cond[ld.bus] += ld.p
        if ld.q > 0.0:
            reactive_loads.append(ld)
        else:
            cap[ld.bus] -= ld.q
    bus_node = {}
    for b in sc.buses:
        if b.id in source_bus:
            continue
        if cap[b.id] <= 0:
            raise ConfigError(f"bus {b.id} needs positive shunt capacitance in EMT formulations")
        bus_node[b.id] = circ.add_node(b.id, "v", cap[b.id], cond[b.id])

    def term(bus):
        return port(source_bus[bus]) if bus in source_bus else node(bus_node[bus])

    for br in branches:
        if br.in_service:
            circ.add_inductor(br.id, "i", term(br.from_bus), term(br.to_bus), br.r, br.l)
    for ld in reactive_loads:
        circ.add_inductor(ld.id, "i", term(ld.bus), GROUND, 0.0, 1.0 / ld.q)
    meas = {}
    for d in devices:
        if d.type == "source":
            continue
        if d.bus in source_bus:
            raise ConfigError(f"device {d.id} shares bus {d.bus} with an ideal source")
        if d.type == "inverter":
            var, p = d.inverter_variant(formulation), params[d.id]
            if var.filter == "full" and var.inner == "full":
                k_vo = circ.add_node(d.id, "v_o", p.c_f)
                k_icv = circ.add_inductor(d.id, "i_cv", port(d.id), node(k_vo), p.r_f, p.l_f)
                k_ig = circ.add_inductor(d.id, "i_g", node(k_vo), term(d.bus), p.r_g, p.l_g)
                meas[d.id] = {"i_cv": k_icv, "v_o": k_vo, "i_g": k_ig}
                continue
            if var.filter == "full":
                meas[d.id] = {"i_g": circ.add_inductor(d.id, "i_g", port(d.id), term(d.bus), p.r_g, p.l_g)}
                continue
        circ.add_current_injection(d.id, bus_node[d.bus], 1.0)
        meas[d.id] = {"v_bus": bus_node[d.bus]}
    return circ, bus_node, meas


def compile_system(sc, formulation: str | None = None, branches=None, params: dict | None = None,
                   backend=None) -> SystemModel:
    """Build the kernel system for one formulation.

    Parameters
    ----------
    sc : Scenario
    formulation : {'qsp', 'dq', 'abc'}, optional
        Defaults to ``sc.formulation``.
    branches : sequence of Branch, optional
        Current topology (defaults to the scenario's).
    params : dict, optional
        Device id -> parameter object (``InverterParams``, ``MachineParams``
        or ``[v_mag, v_angle]`` for sources); defaults from the scenario.
    backend : module, optional
        Kernel backend; :data:`multifid.kernels.backend` by default.
    """
    from ..core import build_layout

    f = formulation or sc.formulation
    branches = tuple(sc.branches if branches is None else branches)
    devices = ordered_devices(sc)
    params = {d.id: (params or {}).get(d.id, None) for d in devices}
    for d in devices:
        if params[d.id] is None:
            params[d.id] = default_params(d, f)
    omega_b = sc.base.omega_b
    be = backend or kernels.backend
    nd = len(devices)
    meas_kind = -np.ones((nd, 4), dtype=np.int32)
    meas_idx = np.zeros((nd, 4), dtype=np.int32)
    slots = {"i_cv": 0, "v_o": 1, "i_g": 2, "v_bus": 3}
    targets: list[list[tuple[int, float, int]]] = [[] for _ in range(nd)]
    dev_pos = {d.id: k for k, d in enumerate(devices)}
    dev_decl = [(d.id, device_state_names(d, f)) for d in devices]
    source_of_bus = {d.bus: dev_pos[d.id] for d in devices if d.type == "source"}

    if f == "qsp":
        layout = build_layout(dev_decl, [(b, ["v_d", "v_q"]) for b in sc.bus_ids()])
        n_dev = layout.n_diff
        shunts = {b.id: complex(b.shunt_g, b.shunt_b) for b in sc.buses}
        y = network_ybus(sc.bus_ids(), branches, sc.loads, shunts)
        pos = {b: k for k, b in enumerate(sc.bus_ids())}
        for d in devices:
            if d.type == "inverter" and d.inverter_variant(f).interface == "norton":
                p = params[d.id]
                y[pos[d.bus], pos[d.bus]] += 1.0 / (complex(p.r_g, p.l_g) + complex(p.r_v, p.l_v))
        L = -realify(y)
        lin_off = n_dev
        bus_index = {b: n_dev + 2 * k for b, k in pos.items()}
        for k, d in enumerate(devices):
            row = bus_index[d.bus]
            if d.type == "source":
                targets[k].append((row, 1.0, 1))
            else:
                meas_kind[k, 3], meas_idx[k, 3] = 0, row
                targets[k].append((row, 1.0, 0))
        bus_index = {b: (None if b in source_of_bus else i) for b, i in bus_index.items()}
        n_diff = n_dev
    else:
        nph = 3 if f == "abc" else 2
        circ, bus_node, meas = _emt_circuit(sc, f, branches, devices, params, omega_b)
        a0 = circ.matrix()
        L = abc_matrix(a0) if f == "abc" else dq_matrix(a0, omega_b)
        decl = [(owner, phase_names(name, f)) for owner, name in circ.quantities]
        layout = build_layout(decl + dev_decl)
        lin_off = 0
        for d in devices:
            k = dev_pos[d.id]
            for slot, q in meas.get(d.id, {}).items():
                meas_kind[k, slots[slot]], meas_idx[k, slots[slot]] = 0, nph * q
            for q, gain in circ.port_targets.get(d.id, []):
                targets[k].append((nph * q, gain, 0))
        bus_index = {b: (nph * bus_node[b] if b in bus_node else None) for b in sc.bus_ids()}
        n_diff = layout.n

    dev_type = np.array([DEV_CODE[d.type] for d in devices], dtype=np.int32)
    flags = np.zeros((nd, 5), dtype=np.int32)
    xoff = np.zeros(nd, dtype=np.int32)
    poff = np.zeros(nd, dtype=np.int32)
    pvec = []
    off = 0
    for k, d in enumerate(devices):
        names = dict(dev_decl)[d.id]
        xoff[k] = layout.index(d.id, names[0]) if names else 0
        if d.type == "inverter":
            flags[k] = d.inverter_variant(f).flags()
        elif d.type == "machine":
            flags[k, 0] = int(d.machine_stator(f) == "fullflux")
        vec = param_vector(d, params[d.id])
        poff[k] = off
        off += len(vec)
        pvec.append(vec)
    tgt_ptr = np.zeros(nd + 1, dtype=np.int32)
    rows, gains, kinds = [], [], []
    for k in range(nd):
        for row, gain, kind in targets[k]:
            rows.append(row)
            gains.append(gain)
            kinds.append(kind)
        tgt_ptr[k + 1] = len(rows)
    kern = be.CompiledSystem(layout.n, int(f == "abc"), omega_b, 1.0, lin_off, np.ascontiguousarray(L),
                             dev_type, flags, xoff, poff,
                             np.concatenate(pvec) if pvec else np.zeros(0), meas_kind, meas_idx, tgt_ptr,
                             np.array(rows, dtype=np.int32), np.array(gains, dtype=float),
                             np.array(kinds, dtype=np.int32), n_diff)
    cfg = sc.solver_config(f)
    return SystemModel(formulation=f, layout=layout, kernel=kern, devices=devices, params=params,
                       branches=branches, omega_b=omega_b, bus_ids=sc.bus_ids(), bus_index=bus_index,
                       source_of_bus=source_of_bus, fd_eps=cfg.fd_eps, fd_central=cfg.fd_central)


def with_params(p, **changes):
    """Copy of a device parameter object with fields replaced."""
    if isinstance(p, (InverterParams, MachineParams)):
        return type(p)(**{**p.as_dict(), **changes})
    p = np.array(p, dtype=float)
    for name, value in changes.items():
        p[("v_mag", "v_angle").index(name)] = value
    return p
