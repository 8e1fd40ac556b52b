"""Newton-Raphson AC power flow in polar coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InitializationError
from ..network import assemble_ybus


@dataclass
class PowerFlowResult:
    """Solved operating point.

    Attributes
    ----------
    buses : list of str
    v : ndarray of complex
        Bus voltage phasors.
    s_inj : ndarray of complex
        Net injected power per bus (devices only; loads are in ``ybus``).
    ybus : ndarray
        Admittance matrix including constant-impedance loads and shunts.
    iterations : int
    mismatch : float
        Final ∞-norm of the power mismatch.
    """

    buses: list
    v: np.ndarray
    s_inj: np.ndarray
    ybus: np.ndarray
    iterations: int
    mismatch: float

    def voltage(self, bus: str) -> complex:
        return complex(self.v[self.buses.index(bus)])

    def injection(self, bus: str) -> complex:
        return complex(self.s_inj[self.buses.index(bus)])


def network_ybus(buses, branches, loads=(), shunts=None, omega_s: float = 1.0) -> np.ndarray:
    """Ybus of in-service branches plus constant-impedance loads and bus shunts."""
    y = assemble_ybus(branches, buses, omega_s)
    pos = {b: k for k, b in enumerate(buses)}
    for ld in loads:
        y[pos[ld.bus], pos[ld.bus]] += ld.admittance
    for bus, ysh in (shunts or {}).items():
        y[pos[bus], pos[bus]] += ysh
    return y


def solve_power_flow(ybus: np.ndarray, kinds, v0, p_spec, q_spec=None, tol: float = 1e-10,
                     max_iter: int = 30) -> tuple[np.ndarray, int, float]:
    """Solve for bus voltages.

    Parameters
    ----------
    ybus : ndarray, complex (n, n)
    kinds : sequence of {'slack', 'pv', 'pq'}
    v0 : array_like of complex
        Initial voltages; magnitudes of slack/PV buses and the slack angle
        are held.
    p_spec, q_spec : array_like
        Specified injections (q ignored on slack/PV buses).

    Returns
    -------
    v : ndarray of complex
    iterations : int
    mismatch : float

    Raises
    ------
    InitializationError
        When the iteration diverges or stalls (infeasible dispatch).
    """
    kinds = list(kinds)
    n = len(kinds)
    v = np.array(v0, dtype=complex)
    p_spec = np.asarray(p_spec, dtype=float)
    q_spec = np.zeros(n) if q_spec is None else np.asarray(q_spec, dtype=float)
    pvpq = [k for k in range(n) if kinds[k] != "slack"]
    pq = [k for k in range(n) if kinds[k] == "pq"]
    for it in range(max_iter + 1):
        i = ybus @ v
        s = v * i.conj()
        mis = np.concatenate([s.real[pvpq] - p_spec[pvpq], s.imag[pq] - q_spec[pq]])
        err = float(np.max(np.abs(mis))) if mis.size else 0.0
        if not np.isfinite(err):
            break
        if err < tol:
            return v, it, err
        if it == max_iter:
            break
        vn = v / np.abs(v)
        ds_dth = 1j * np.diag(v) @ np.conj(np.diag(i) - ybus @ np.diag(v))
        ds_dvm = np.diag(v) @ np.conj(ybus @ np.diag(vn)) + np.conj(np.diag(i)) @ np.diag(vn)
        jac = np.block([[ds_dth.real[np.ix_(pvpq, pvpq)], ds_dvm.real[np.ix_(pvpq, pq)]],
                        [ds_dth.imag[np.ix_(pq, pvpq)], ds_dvm.imag[np.ix_(pq, pq)]]])
        try:
            dx = np.linalg.solve(jac, -mis)
        except np.linalg.LinAlgError:
            break
        th = np.angle(v)
        vm = np.abs(v)
        th[pvpq] += dx[:len(pvpq)]
        vm[pq] += dx[len(pvpq):]
        v = vm * np.exp(1j * th)
    raise InitializationError(f"power flow did not converge (mismatch {err:.3e}); "
                              "the dispatch may exceed the network transfer capability")


def power_flow(sc, branches=None, formulation: str | None = None) -> PowerFlowResult:
    """Power flow of a scenario: the slack device sets ``v_set∠v_angle``,
    PV devices set ``p_set`` and ``v_set``, all other buses are PQ with zero
    injection. Loads are constant impedances in ``ybus``.
    """
    buses = sc.bus_ids()
    branches = sc.branches if branches is None else branches
    shunts = {b.id: complex(b.shunt_g, b.shunt_b) for b in sc.buses if b.shunt_g or b.shunt_b}
    y = network_ybus(buses, branches, sc.loads, shunts)
    pos = {b: k for k, b in enumerate(buses)}
    kinds = ["pq"] * len(buses)
    v0 = np.ones(len(buses), dtype=complex)
    p = np.zeros(len(buses))
    for d in sc.devices:
        k = pos[d.bus]
        kinds[k] = d.control
        v0[k] = d.v_set * np.exp(1j * (d.v_angle if d.control == "slack" else 0.0))
        p[k] = d.p_set
    v, iters, err = solve_power_flow(y, kinds, v0, p)
    s = v * np.conj(y @ v)
    return PowerFlowResult(buses, v, s, y, iters, err)
