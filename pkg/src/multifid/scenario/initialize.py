"""Dynamic initialization: power flow, device back-solve, global refinement."""
from __future__ import annotations

import cmath
from dataclasses import dataclass

import numpy as np

from ..devices.inverter import InverterParams
from ..devices.machine import machine_initial_state, state_names
from ..errors import InitializationError, MultifidError
from ..solvers.newton import newton_solve
from ..transforms import inverse_park
from .compile import (SystemModel, compile_system, default_params, device_state_names, ordered_devices,
                      with_params)
from .powerflow import PowerFlowResult, power_flow


@dataclass
class InitialCondition:
    x0: np.ndarray
    model: SystemModel
    params: dict
    power_flow: PowerFlowResult
    refinement_iterations: int
    residual: float


def inverter_back_solve(v: complex, s: complex, p: InverterParams, variant) -> tuple[dict, InverterParams, dict]:
    """Steady-state inverter states for bus voltage ``v`` and injection ``s``.

    Returns
    -------
    states : dict
        Device-block states by name.
    params : InverterParams
        ``p`` with ``p_ref``, ``q_ref`` and ``v_ref`` set for equilibrium.
    filter_states : dict
        Network-frame filter quantities (``i_cv``, ``v_o``, ``i_g``) as complex.
    """
    i_g = (s / v).conjugate()
    v_o = v + complex(p.r_g, p.l_g) * i_g
    e = v_o + complex(p.r_v, p.l_v) * i_g
    delta, v_olc = cmath.phase(e), abs(e)
    s_e = v_o * i_g.conjugate()
    p_e, q_e = s_e.real, s_e.imag
    st = {"delta": delta}
    if variant.outer == "vsm":
        st.update(omega=1.0, q_m=q_e)
        p_ref = p_e + p.k_omega * (1.0 - p.omega_ref)
    else:
        st.update(p_m=p_e, q_m=q_e)
        p_ref = p_e + (1.0 - p.omega_ref) / p.m_p if p.m_p > 0 else p_e
    p = with_params(p, p_ref=p_ref, q_ref=q_e, v_ref=v_olc)
    if variant.pll == "kaura":
        st.update(v_pll_d=abs(v_o), v_pll_q=0.0, eps_pll=(1.0 - p.omega_ref) / p.ki_pll if p.ki_pll else 0.0,
                  theta_pll=cmath.phase(v_o))
    else:
        st.update(v_w_d=v_o.real, v_w_q=v_o.imag)
    i_cv = i_g + 1j * p.c_f * v_o
    filt = {"i_g": i_g}
    if variant.inner == "full":
        v_cv = v_o + complex(p.r_f, p.l_f) * i_cv
        back = cmath.exp(-1j * delta)
        vo_d, icv_d, ig_d, vcv_d = back * v_o, back * i_cv, back * i_g, back * v_cv
        phi = icv_d - 1j * p.c_f * vo_d - p.k_ffi * ig_d
        gamma = vcv_d - 1j * p.l_f * icv_d - p.k_ffv * vo_d
        st.update(phi_d=phi.real, phi_q=phi.imag, gamma_d=gamma.real, gamma_q=gamma.imag,
                  xi_d=vo_d.real, xi_q=vo_d.imag)
        filt.update(i_cv=i_cv, v_o=v_o)
    return st, p, filt


def _complex_states(owner: str, name: str, z: complex, formulation: str) -> dict:
    if formulation == "abc":
        a, b, c = inverse_park(np.array([z.real, z.imag, 0.0]), 0.0)
        return {(owner, f"{name}_a"): a, (owner, f"{name}_b"): b, (owner, f"{name}_c"): c}
    return {(owner, f"{name}_d"): z.real, (owner, f"{name}_q"): z.imag}


def back_solve(sc, formulation: str, branches=None, params: dict | None = None):
    """Device-by-device and network steady state from the power flow.

    Returns
    -------
    values : dict
        ``(owner, state) -> value`` for every state of the formulation.
    params : dict
        Device parameters with references set for equilibrium.
    pf : PowerFlowResult
    """
    branches = tuple(sc.branches if branches is None else branches)
    pf = power_flow(sc, branches)
    f = formulation
    vals: dict = {}
    out_params = {}
    for d in ordered_devices(sc):
        v, s = pf.voltage(d.bus), pf.injection(d.bus)
        base = (params or {}).get(d.id)
        base = default_params(d, f) if base is None else base
        if d.type == "source":
            out_params[d.id] = np.array([abs(v), cmath.phase(v)])
        elif d.type == "inverter":
            var = d.inverter_variant(f)
            st, p, filt = inverter_back_solve(v, s, base, var)
            out_params[d.id] = p
            vals.update({(d.id, k): val for k, val in st.items()})
            for name, z in filt.items():
                vals.update(_complex_states(d.id, name, z, f))
        else:
            stator = d.machine_stator(f)
            x0, p = machine_initial_state(v, s, base, stator)
            out_params[d.id] = p
            vals.update({(d.id, k): val for k, val in zip(state_names(stator), x0)})
    for k, bus in enumerate(pf.buses):
        vals.update(_complex_states(bus, "v", complex(pf.v[k]), f))
    for br in branches:
        if br.in_service:
            i = (pf.voltage(br.from_bus) - pf.voltage(br.to_bus)) * br.series_admittance()
            vals.update(_complex_states(br.id, "i", i, f))
    for ld in sc.loads:
        if ld.q > 0.0:
            vals.update(_complex_states(ld.id, "i", -1j * ld.q * pf.voltage(ld.bus), f))
    return vals, out_params, pf


def assemble_state(layout, values: dict, default: float | None = None) -> np.ndarray:
    x = np.empty(layout.n)
    for k, key in enumerate(layout.entries):
        if key in values:
            x[k] = values[key]
        elif default is not None:
            x[k] = default
        else:
            raise InitializationError(f"no initial value for {key[0]}.{key[1]}")
    return x


def refine_equilibrium(model: SystemModel, x0, tol: float = 1e-10, max_iter: int = 20):
    """Least-squares Newton on the full residual ``f(x) = 0``.

    Minimum-norm steps handle the rotational zero mode of systems without
    an infinite bus.

    Raises
    ------
    InitializationError
        Listing the worst residual rows by name.
    """
    if model.formulation == "abc":
        raise InitializationError("the abc formulation is time varying and has no equilibrium")
    try:
        res = newton_solve(lambda x: model.rhs(0.0, x), lambda x: model.jacobian(0.0, x), x0, tol=tol,
                           max_iter=max_iter, least_squares=True)
    except MultifidError as exc:
        r = model.rhs(0.0, x0)
        worst = np.argsort(-np.abs(r))[:5]
        rows = ", ".join(f"{model.state_name(k)}={r[k]:.3e}" for k in worst)
        raise InitializationError(f"equilibrium refinement failed ({exc}); worst rows at the initial guess: "
                                  f"{rows}") from None
    return res


def initialize(sc, formulation: str | None = None, branches=None, params: dict | None = None,
               backend=None, tol: float = 1e-10) -> InitialCondition:
    """Initial state of a scenario in the requested formulation.

    dq and QSP are refined to ``‖f(x0)‖_∞ < tol``. The abc state is the
    refined dq equilibrium inverse-Park'd at ``t = 0``.
    """
    f = formulation or sc.formulation
    eq_f = "dq" if f == "abc" else f
    vals, prm, pf = back_solve(sc, eq_f, branches, params)
    model = compile_system(sc, eq_f, branches, prm, backend)
    x0 = assemble_state(model.layout, vals)
    res = refine_equilibrium(model, x0, tol)
    if f != "abc":
        return InitialCondition(res.x, model, prm, pf, res.iterations, res.residual_norm)
    n_circuit = model.layout.n - sum(len(device_state_names(d, eq_f)) for d in model.devices)
    entries = model.layout.entries
    abc_vals = {key: res.x[k] for k, key in enumerate(entries) if k >= n_circuit}
    for k in range(0, n_circuit, 2):
        owner, name = entries[k]
        abc_vals.update(_complex_states(owner, name[:-2], complex(res.x[k], res.x[k + 1]), "abc"))
    abc_model = compile_system(sc, "abc", branches, prm, backend)
    x_abc = assemble_state(abc_model.layout, abc_vals)
    return InitialCondition(x_abc, abc_model, prm, pf, res.iterations, res.residual_norm)
