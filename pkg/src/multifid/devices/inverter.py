"""Grid-forming inverter: outer loop (VSM or droop), PLL, cascaded PI inner
loops and LCL filter, each with an SPT-reduced counterpart.

All functions work on Python complex numbers ``d + jq``. Network-frame
quantities rotate at ω_s; device-frame quantities at the outer-loop angle δ.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import ConfigError

OUTER_KINDS = ("vsm", "droop")
INNER_KINDS = ("full", "reduced")
FILTER_KINDS = ("full", "reduced")
PLL_KINDS = ("kaura", "ideal")
INTERFACE_KINDS = ("thevenin", "norton")

# flat parameter vector consumed by both kernel backends; order is binding
PARAM_NAMES = (
    "T_a", "k_d", "k_omega", "k_q", "omega_f", "m_p", "m_q",
    "p_ref", "q_ref", "v_ref", "omega_ref",
    "k_pv", "k_iv", "k_pc", "k_ic", "k_ffv", "k_ffi", "r_v", "l_v", "k_ad", "omega_ad",
    "l_f", "r_f", "c_f", "l_g", "r_g",
    "kp_pll", "ki_pll", "omega_lp", "omega_w",
)
P = {name: k for k, name in enumerate(PARAM_NAMES)}

# extra outputs reported per device (shared layout with the machine)
OUTPUT_NAMES = ("omega", "p_e", "q_e", "omega_pll", "v_o_d", "v_o_q", "i_g_d", "i_g_q", "pll_hold")


@dataclass(frozen=True)
class InverterParams:
    """Gains, filter data and references in per unit (times in s)."""

    T_a: float = 2.0
    k_d: float = 400.0
    k_omega: float = 20.0
    k_q: float = 0.2
    omega_f: float = 2.0 * math.pi * 5.0
    m_p: float = 0.05
    m_q: float = 0.05
    p_ref: float = 0.0
    q_ref: float = 0.0
    v_ref: float = 1.0
    omega_ref: float = 1.0
    k_pv: float = 0.59
    k_iv: float = 736.0
    k_pc: float = 1.27
    k_ic: float = 14.3
    k_ffv: float = 0.0
    k_ffi: float = 0.0
    r_v: float = 0.0
    l_v: float = 0.0
    k_ad: float = 0.2
    omega_ad: float = 50.0
    l_f: float = 0.08
    r_f: float = 0.003
    c_f: float = 0.074
    l_g: float = 0.2
    r_g: float = 0.01
    kp_pll: float = 0.084
    ki_pll: float = 4.69
    omega_lp: float = 500.0
    omega_w: float = 1000.0

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ConfigError(f"inverter parameter {f.name} is not finite")
        gains = ("T_a", "k_d", "k_omega", "k_q", "omega_f", "m_p", "m_q", "k_pv", "k_iv",
                 "k_pc", "k_ic", "k_ffv", "k_ffi", "r_v", "l_v", "k_ad", "omega_ad",
                 "l_f", "r_f", "c_f", "l_g", "r_g", "kp_pll", "ki_pll", "omega_lp", "omega_w")
        for name in gains:
            if getattr(self, name) < 0:
                raise ConfigError(f"inverter parameter {name} must be >= 0")

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class InverterVariant:
    outer: str = "vsm"
    inner: str = "full"
    filter: str = "full"
    pll: str = "kaura"
    interface: str = "thevenin"

    def __post_init__(self):
        for name, allowed in (("outer", OUTER_KINDS), ("inner", INNER_KINDS), ("filter", FILTER_KINDS),
                              ("pll", PLL_KINDS), ("interface", INTERFACE_KINDS)):
            if getattr(self, name) not in allowed:
                raise ConfigError(f"inverter {name} must be one of {allowed}, got {getattr(self, name)!r}")
        if self.inner == "full" and self.filter == "reduced":
            raise ConfigError("full inner loop requires the full filter "
                              "(it regulates filter states that the reduced filter removes)")

    def flags(self) -> tuple[int, int, int, int, int]:
        return (OUTER_KINDS.index(self.outer), int(self.inner == "full"), int(self.filter == "full"),
                PLL_KINDS.index(self.pll), int(self.interface == "norton"))


def state_names(variant: InverterVariant) -> list[str]:
    """Device-block states (filter states live in the network circuit)."""
    names = ["delta", "omega", "q_m"] if variant.outer == "vsm" else ["delta", "p_m", "q_m"]
    names += ["v_pll_d", "v_pll_q", "eps_pll", "theta_pll"] if variant.pll == "kaura" else ["v_w_d", "v_w_q"]
    if variant.inner == "full":
        names += ["phi_d", "phi_q", "gamma_d", "gamma_q", "xi_d", "xi_q"]
    return names


# -- building blocks -----------------------------------------------------------

def inner_loop_rhs(phi: complex, gamma: complex, xi: complex, v_o: complex, i_cv: complex, i_g: complex,
                   v_o_ref: complex, omega: float, p: InverterParams):
    """Cascaded voltage/current PI loops in the device frame.

    Integrator states hold the integral action: ``φ' = k_iv e_v``,
    ``γ' = k_ic e_i``. ``xi`` is the active-damping low-pass state.

    Returns
    -------
    dphi, dgamma, dxi, i_cv_ref, v_cv_ref : complex
    """
    v_vi = v_o_ref - complex(p.r_v, omega * p.l_v) * i_g
    e_v = v_vi - v_o
    i_cv_ref = p.k_pv * e_v + phi + 1j * omega * p.c_f * v_o + p.k_ffi * i_g
    e_i = i_cv_ref - i_cv
    v_cv_ref = p.k_pc * e_i + gamma + 1j * omega * p.l_f * i_cv + p.k_ffv * v_o - p.k_ad * (v_o - xi)
    return p.k_iv * e_v, p.k_ic * e_i, p.omega_ad * (v_o - xi), i_cv_ref, v_cv_ref


def inner_loop_reduced(v_o_ref: complex, i_g: complex = 0j, omega: float = 1.0,
                       p: InverterParams | None = None) -> complex:
    """SPT limit of the inner loops: the capacitor voltage equals its reference
    (after the virtual impedance drop, when one is configured)."""
    if p is None:
        return v_o_ref
    return v_o_ref - complex(p.r_v, omega * p.l_v) * i_g


def lcl_filter_rhs(i_cv: complex, v_o: complex, i_g: complex, v_cv: complex, v_bus: complex,
                   omega: float, p: InverterParams, omega_b: float):
    """Converter inductor, capacitor and grid inductor in a frame rotating at ω."""
    di_cv = (omega_b / p.l_f) * (v_cv - v_o - complex(p.r_f, omega * p.l_f) * i_cv)
    dv_o = (omega_b / p.c_f) * (i_cv - i_g - 1j * omega * p.c_f * v_o)
    di_g = (omega_b / p.l_g) * (v_o - v_bus - complex(p.r_g, omega * p.l_g) * i_g)
    return di_cv, dv_o, di_g


def vsm_outer_rhs(delta: float, omega: float, q_m: float, p_e: float, q_e: float, omega_pll: float,
                  p: InverterParams, omega_b: float, omega_sys: float = 1.0):
    """Single-inertia virtual synchronous machine with q-V droop.

    Returns
    -------
    ddelta, domega, dq_m, v_olc_ref : float
    """
    ddelta = omega_b * (omega - omega_sys)
    domega = (p.p_ref - p_e - p.k_d * (omega - omega_pll) - p.k_omega * (omega - p.omega_ref)) / p.T_a
    dq_m = p.omega_f * (q_e - q_m)
    return ddelta, domega, dq_m, p.v_ref + p.k_q * (p.q_ref - q_m)


def droop_outer_rhs(delta: float, p_m: float, q_m: float, p_e: float, q_e: float,
                    p: InverterParams, omega_b: float, omega_sys: float = 1.0):
    """P-f and Q-V droop with first-order power filters.

    Returns
    -------
    ddelta, dp_m, dq_m, omega_cmd, v_olc_ref : float
    """
    omega = p.omega_ref + p.m_p * (p.p_ref - p_m)
    return (omega_b * (omega - omega_sys), p.omega_f * (p_e - p_m), p.omega_f * (q_e - q_m),
            omega, p.v_ref + p.m_q * (p.q_ref - q_m))


def pll_rhs(v_pll: complex, v_d_f: float, v_q_f: float, eps: float, p: InverterParams,
            omega_b: float, omega_sys: float = 1.0):
    """Synchronous-frame PLL with low-pass filtered voltage and PI on the angle.

    ``v_pll`` is the measured voltage already expressed in the PLL frame.

    Returns
    -------
    derivs : tuple of 4 floats
        d/dt of (v_d_f, v_q_f, eps, theta_pll).
    omega_pll : float
    hold : bool
        True when the filtered voltage collapsed and the angle error was held.
    """
    hold = math.hypot(v_d_f, v_q_f) <= 1e-6
    err = 0.0 if hold else math.atan2(v_q_f, v_d_f)
    omega_pll = p.omega_ref + p.kp_pll * err + p.ki_pll * eps
    derivs = (p.omega_lp * (v_pll.real - v_d_f), p.omega_lp * (v_pll.imag - v_q_f), err,
              omega_b * (omega_pll - omega_sys))
    return derivs, omega_pll, hold


def washout_frequency(v: complex, w: complex, p: InverterParams, omega_b: float, omega_sys: float = 1.0):
    """Frequency from the bus-frequency formula with ``v̇ ≈ ω_w (v - w)``.

    Returns
    -------
    dw : complex
    omega_meas : float
    hold : bool
    """
    vdot = p.omega_w * (v - w)
    mag2 = v.real * v.real + v.imag * v.imag
    hold = mag2 <= 1e-12
    dw_pu = 0.0 if hold else (v.real * vdot.imag - v.imag * vdot.real) / mag2 / omega_b
    return vdot, omega_sys + dw_pu, hold


def thevenin_source(delta: float, v_olc_ref: float, omega: float, p: InverterParams,
                    omega_s: float = 1.0) -> tuple[complex, complex]:
    """Reduced inner loop and reduced filter as (v_th, z_th) in the network frame."""
    v_th = v_olc_ref * cmath.exp(1j * delta)
    z_th = complex(p.r_g, omega_s * p.l_g) + complex(p.r_v, omega * p.l_v)
    return v_th, z_th


# -- full device evaluation ------------------------------------------------------

def inverter_eval(x, meas, p: InverterParams, variant: InverterVariant, omega_b: float,
                  omega_s: float = 1.0):
    """Evaluate one inverter.

    Parameters
    ----------
    x : sequence of float
        Device-block states in :func:`state_names` order.
    meas : dict
        Network-frame measurements: ``i_cv, v_o, i_g`` for the full filter,
        ``i_g`` for reduced inner with full filter, ``v_bus`` for the
        reduced filter (complex values).

    Returns
    -------
    dx : list of float
    output : complex
        Network-frame converter voltage (full inner), capacitor voltage
        (reduced inner, full filter) or injected current (reduced filter).
    extras : dict
        Values named in ``OUTPUT_NAMES``.
    """
    delta = x[0]
    if variant.outer == "vsm":
        omega, q_m = x[1], x[2]
        v_olc = p.v_ref + p.k_q * (p.q_ref - q_m)
    else:
        p_m, q_m = x[1], x[2]
        omega = p.omega_ref + p.m_p * (p.p_ref - p_m)
        v_olc = p.v_ref + p.m_q * (p.q_ref - q_m)
    fwd = cmath.exp(1j * delta)
    back = fwd.conjugate()

    if variant.filter == "full":
        i_g = meas["i_g"]
        if variant.inner == "full":
            v_o = meas["v_o"]
        else:
            v_o = fwd * inner_loop_reduced(v_olc, back * i_g, omega, p)
    else:
        v_th, z_th = thevenin_source(delta, v_olc, omega, p, omega_s)
        v_bus = meas["v_bus"]
        i_g = (v_th - v_bus) / z_th
        v_o = v_bus + complex(p.r_g, omega_s * p.l_g) * i_g
    s_e = v_o * i_g.conjugate()
    p_e, q_e = s_e.real, s_e.imag

    k = 3
    if variant.pll == "kaura":
        v_d_f, v_q_f, eps, theta = x[3], x[4], x[5], x[6]
        dpll, omega_pll, hold = pll_rhs(v_o * cmath.exp(-1j * theta), v_d_f, v_q_f, eps, p, omega_b, omega_s)
        dpll = list(dpll)
        k = 7
    else:
        w = complex(x[3], x[4])
        dw, omega_pll, hold = washout_frequency(v_o, w, p, omega_b, omega_s)
        dpll = [dw.real, dw.imag]
        k = 5

    if variant.outer == "vsm":
        dd, dw_, dq, _ = vsm_outer_rhs(delta, omega, q_m, p_e, q_e, omega_pll, p, omega_b, omega_s)
        douter = [dd, dw_, dq]
    else:
        dd, dp, dq, _, _ = droop_outer_rhs(delta, p_m, q_m, p_e, q_e, p, omega_b, omega_s)
        douter = [dd, dp, dq]

    dinner = []
    if variant.inner == "full":
        phi, gamma, xi = complex(x[k], x[k + 1]), complex(x[k + 2], x[k + 3]), complex(x[k + 4], x[k + 5])
        dphi, dgamma, dxi, _, v_cv = inner_loop_rhs(phi, gamma, xi, back * v_o, back * meas["i_cv"],
                                                     back * i_g, complex(v_olc, 0.0), omega, p)
        dinner = [dphi.real, dphi.imag, dgamma.real, dgamma.imag, dxi.real, dxi.imag]
        output = fwd * v_cv
    elif variant.filter == "full":
        output = v_o
    elif variant.interface == "norton":
        y_th = 1.0 / z_th
        y_0 = 1.0 / (complex(p.r_g, omega_s * p.l_g) + complex(p.r_v, omega_s * p.l_v))
        output = y_th * v_th - (y_th - y_0) * meas["v_bus"]
    else:
        output = i_g

    extras = dict(omega=omega, p_e=p_e, q_e=q_e, omega_pll=omega_pll, v_o_d=v_o.real, v_o_q=v_o.imag,
                  i_g_d=i_g.real, i_g_q=i_g.imag, pll_hold=float(hold))
    return douter + dpll + dinner, output, extras
