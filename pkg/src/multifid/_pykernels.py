"""Pure-Python kernel backend.

Same interface and arithmetic as the compiled ``_ckernels`` extension; used
when the extension is unavailable or ``MULTIFID_KERNEL=python`` is set.

System layout consumed by both backends
---------------------------------------
* ``L`` (``lin_n × lin_n``) acts on ``x[lin_off:lin_off+lin_n]`` and writes
  the same slice of the RHS: the circuit matrix (EMT) or ``-realify(Y)``
  (QSP algebraic rows).
* Devices are evaluated in order. Each reads up to four measurements
  (slots ``i_cv, v_o, i_g, v_bus``), each either a state index
  (``kind 0``: a dq pair, or an abc triple that is Park-transformed at
  ``θ = Ω_b ω_s t``) or the output port of an earlier device (``kind 1``).
* Each device produces one complex output port in the network frame,
  scattered to target rows with a gain (``kind 0``, inverse-Park'd in abc)
  or imposed as ``x[row] - u`` (``kind 1``, voltage-fixed buses in QSP).
"""
from __future__ import annotations

import math

import numpy as np
import scipy.linalg as sla

from .devices.inverter import PARAM_NAMES as INVERTER_PARAM_NAMES
from .devices.inverter import InverterParams, InverterVariant, inverter_eval
from .devices.inverter import OUTPUT_NAMES, OUTER_KINDS, PLL_KINDS
from .devices.machine import PARAM_NAMES as MACHINE_PARAM_NAMES
from .devices.machine import MachineParams, machine_rhs

BACKEND = "python"
DEV_SOURCE, DEV_INVERTER, DEV_MACHINE = 0, 1, 2
N_OUT = len(OUTPUT_NAMES)
_C1, _S1 = math.cos(-2.0 * math.pi / 3.0), math.sin(-2.0 * math.pi / 3.0)
_C2, _S2 = math.cos(2.0 * math.pi / 3.0), math.sin(2.0 * math.pi / 3.0)
_SLOTS = ("i_cv", "v_o", "i_g", "v_bus")


class CompiledSystem:
    """Flat, immutable system description with RHS, Jacobian and a
    fixed-step trapezoidal integrator.

    Parameters mirror the compiled backend; see module docstring.
    """

    def __init__(self, n, abc, omega_b, omega_s, lin_off, L, dev_type, dev_flags, dev_xoff, dev_poff,
                 params, meas_kind, meas_idx, tgt_ptr, tgt_row, tgt_gain, tgt_kind, n_diff):
        self.n = int(n)
        self.abc = int(abc)
        self.omega_b = float(omega_b)
        self.omega_s = float(omega_s)
        self.lin_off = int(lin_off)
        self.L = np.ascontiguousarray(L, dtype=float)
        self.lin_n = self.L.shape[0]
        self.dev_type = np.asarray(dev_type, dtype=np.int32)
        self.dev_flags = np.asarray(dev_flags, dtype=np.int32).reshape(-1, 5)
        self.dev_xoff = np.asarray(dev_xoff, dtype=np.int32)
        self.dev_poff = np.asarray(dev_poff, dtype=np.int32)
        self.params = np.asarray(params, dtype=float)
        self.meas_kind = np.asarray(meas_kind, dtype=np.int32).reshape(-1, 4)
        self.meas_idx = np.asarray(meas_idx, dtype=np.int32).reshape(-1, 4)
        self.tgt_ptr = np.asarray(tgt_ptr, dtype=np.int32)
        self.tgt_row = np.asarray(tgt_row, dtype=np.int32)
        self.tgt_gain = np.asarray(tgt_gain, dtype=float)
        self.tgt_kind = np.asarray(tgt_kind, dtype=np.int32)
        self.n_diff = int(n_diff)
        self.nd = len(self.dev_type)
        self._models = [self._model(k) for k in range(self.nd)]

    def _model(self, k):
        typ, off, fl = int(self.dev_type[k]), int(self.dev_poff[k]), self.dev_flags[k]
        if typ == DEV_INVERTER:
            vec = self.params[off:off + len(INVERTER_PARAM_NAMES)]
            p = InverterParams(**dict(zip(INVERTER_PARAM_NAMES, map(float, vec))))
            var = InverterVariant(outer=OUTER_KINDS[fl[0]], inner="full" if fl[1] else "reduced",
                                  filter="full" if fl[2] else "reduced", pll=PLL_KINDS[fl[3]],
                                  interface="norton" if fl[4] else "thevenin")
            return p, var
        if typ == DEV_MACHINE:
            vec = self.params[off:off + len(MACHINE_PARAM_NAMES)]
            p = MachineParams(**dict(zip(MACHINE_PARAM_NAMES, map(float, vec))))
            return p, "fullflux" if fl[0] else "algebraic"
        return complex(self.params[off] * math.cos(self.params[off + 1]),
                       self.params[off] * math.sin(self.params[off + 1])), None

    # -- evaluation ----------------------------------------------------------

    def _eval(self, t, x, out, extras):
        out[:] = 0.0
        lo, ln = self.lin_off, self.lin_n
        if ln:
            out[lo:lo + ln] = self.L @ x[lo:lo + ln]
        abc = self.abc
        if abc:
            th = self.omega_b * self.omega_s * t
            c0, s0 = math.cos(th), math.sin(th)
            c1, s1 = c0 * _C1 - s0 * _S1, s0 * _C1 + c0 * _S1
            c2, s2 = c0 * _C2 - s0 * _S2, s0 * _C2 + c0 * _S2
        ports = [0j] * self.nd
        fixes = []
        for k in range(self.nd):
            meas = {}
            for slot in range(4):
                kind, idx = self.meas_kind[k, slot], self.meas_idx[k, slot]
                if kind == 0:
                    if abc:
                        a, b, c = x[idx], x[idx + 1], x[idx + 2]
                        meas[_SLOTS[slot]] = complex((2.0 / 3.0) * (a * c0 + b * c1 + c * c2),
                                                     -(2.0 / 3.0) * (a * s0 + b * s1 + c * s2))
                    else:
                        meas[_SLOTS[slot]] = complex(x[idx], x[idx + 1])
                elif kind == 1:
                    meas[_SLOTS[slot]] = ports[idx]
            typ, xo = self.dev_type[k], self.dev_xoff[k]
            p, var = self._models[k]
            if typ == DEV_INVERTER:
                dx, u, ex = inverter_eval(x[xo:], meas, p, var, self.omega_b, self.omega_s)
            elif typ == DEV_MACHINE:
                dx, u, ex = machine_rhs(x[xo:], meas["v_bus"], p, var, self.omega_b, self.omega_s)
            else:
                dx, u, ex = [], p, None
            out[xo:xo + len(dx)] = dx
            ports[k] = u
            if extras is not None and ex is not None:
                extras[k] = [ex[name] for name in OUTPUT_NAMES]
            for m in range(self.tgt_ptr[k], self.tgt_ptr[k + 1]):
                row, gain = self.tgt_row[m], self.tgt_gain[m]
                if self.tgt_kind[m] == 1:
                    fixes.append((row, u))
                elif abc:
                    out[row] += gain * (u.real * c0 - u.imag * s0)
                    out[row + 1] += gain * (u.real * c1 - u.imag * s1)
                    out[row + 2] += gain * (u.real * c2 - u.imag * s2)
                else:
                    out[row] += gain * u.real
                    out[row + 1] += gain * u.imag
        for row, u in fixes:
            out[row] = x[row] - u.real
            out[row + 1] = x[row + 1] - u.imag

    def rhs(self, t, x, out):
        self._eval(float(t), np.asarray(x), out, None)

    def outputs(self, t, x, out):
        """Fill ``out`` (nd × N_OUT) with per-device derived quantities."""
        scratch = np.empty(self.n)
        out[:] = 0.0
        self._eval(float(t), np.asarray(x), scratch, out)

    def jacobian(self, t, x, f0, J, eps_rel, central=0):
        """Finite-difference Jacobian, forward (``central=0``) or central."""
        x = np.array(x, dtype=float)
        fp = np.empty(self.n)
        fm = np.empty(self.n)
        for j in range(self.n):
            h = eps_rel * max(abs(x[j]), 1.0)
            xj = x[j]
            x[j] = xj + h
            h = x[j] - xj
            self._eval(t, x, fp, None)
            if central:
                x[j] = xj - h
                self._eval(t, x, fm, None)
                J[:, j] = (fp - fm) / (2.0 * h)
            else:
                J[:, j] = (fp - f0) / h
            x[j] = xj

    def integrate_trapezoidal(self, t0, x0, dt, n_steps, rec_every, rec, newton_tol, newton_max,
                              reuse_limit, eps_rel):
        """Fixed-step trapezoidal rule with simplified Newton.

        Row ``m`` of ``rec`` receives the state after ``m * rec_every``
        steps. Returns a dict of work counters; on failure the dict holds
        ``failed_step`` and the partial record is valid up to it.
        """
        n, nd_ = self.n, self.n_diff
        x = np.array(x0, dtype=float)
        f0 = np.empty(n)
        f1 = np.empty(n)
        J = np.empty((n, n))
        stats = dict(steps=0, rhs_evaluations=0, jacobian_evaluations=0, jacobian_rhs_evaluations=0,
                     lu_factorizations=0, newton_iterations=0, failed_step=-1)
        self._eval(t0, x, f0, None)
        stats["rhs_evaluations"] += 1
        lu = None
        age = reuse_limit
        rec[0] = x
        n_rec = rec.shape[0]

        def refresh(t, xx, ff):
            nonlocal lu, age
            self.jacobian(t, xx, ff, J, eps_rel)
            W = -J
            W[:nd_] *= 0.5 * dt
            W[np.arange(nd_), np.arange(nd_)] += 1.0
            W[nd_:] = J[nd_:]
            lu = sla.lu_factor(W, check_finite=False)
            age = 0
            stats["jacobian_evaluations"] += 1
            stats["jacobian_rhs_evaluations"] += n
            stats["lu_factorizations"] += 1

        for step in range(int(n_steps)):
            t1 = t0 + (step + 1) * dt
            if age >= reuse_limit:
                refresh(t0 + step * dt, x, f0)
            x1 = x.copy()
            x1[:nd_] += dt * f0[:nd_]
            fresh = age == 0
            converged = False
            it = 0
            while True:
                self._eval(t1, x1, f1, None)
                stats["rhs_evaluations"] += 1
                r = np.empty(n)
                r[:nd_] = x1[:nd_] - x[:nd_] - 0.5 * dt * (f0[:nd_] + f1[:nd_])
                r[nd_:] = f1[nd_:]
                if not np.all(np.isfinite(r)):
                    break
                if np.max(np.abs(r)) < newton_tol:
                    converged = True
                    break
                if it >= newton_max:
                    if fresh:
                        break
                    refresh(t1, x1, f1)
                    fresh = True
                    it = 0
                x1 -= sla.lu_solve(lu, r, check_finite=False)
                it += 1
                stats["newton_iterations"] += 1
            if not converged:
                stats["failed_step"] = step
                return stats
            x, x1 = x1, x
            f0, f1 = f1, f0
            age += 1
            stats["steps"] += 1
            if (step + 1) % rec_every == 0:
                m = (step + 1) // rec_every
                if m < n_rec:
                    rec[m] = x
        return stats


INVERTER_PARAMS = INVERTER_PARAM_NAMES
MACHINE_PARAMS = MACHINE_PARAM_NAMES
