"""Synchronous machine: one-axis rotor, swing equation, and either dynamic
stator fluxes or the algebraic stator obtained by dropping ``Ω_b⁻¹ψ̇``.

Generator current convention. The device frame is the d-axis of the
one-axis model; its angle ``delta`` is the textbook rotor angle minus π/2.
"""
from __future__ import annotations

import cmath
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

from ..errors import ConfigError

STATOR_KINDS = ("fullflux", "algebraic")
PARAM_NAMES = ("r_a", "x_d", "x_q", "xp_d", "Tp_d0", "H", "D", "e_fd", "tau_m")
P = {name: k for k, name in enumerate(PARAM_NAMES)}


@dataclass(frozen=True)
class MachineParams:
    """One-axis machine data in per unit on the system base.

    ``e_fd`` and ``tau_m`` are constant references, normally set from the
    power flow during initialization.
    """

    r_a: float = 0.003
    x_d: float = 1.8
    x_q: float = 1.7
    xp_d: float = 0.3
    Tp_d0: float = 8.0
    H: float = 3.5
    D: float = 0.0
    e_fd: float = 1.0
    tau_m: float = 0.0

    def __post_init__(self):
        for f in fields(self):
            if not math.isfinite(getattr(self, f.name)):
                raise ConfigError(f"machine parameter {f.name} is not finite")
        if self.H <= 0:
            raise ConfigError("machine H must be positive")
        if not self.x_d >= self.xp_d > 0:
            raise ConfigError("machine needs x_d >= x'_d > 0")
        if self.x_q <= 0 or self.Tp_d0 <= 0 or self.r_a < 0 or self.D < 0:
            raise ConfigError("machine needs x_q > 0, T'_d0 > 0, r_a >= 0, D >= 0")

    def vector(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in PARAM_NAMES], dtype=float)

    def as_dict(self) -> dict:
        return asdict(self)


def state_names(stator: str) -> list[str]:
    if stator not in STATOR_KINDS:
        raise ConfigError(f"machine stator must be one of {STATOR_KINDS}, got {stator!r}")
    return (["psi_d", "psi_q"] if stator == "fullflux" else []) + ["eqp", "delta", "omega"]


def airgap_torque(e: complex, i: complex, r_a: float) -> float:
    """``τ_e = e_d i_d + e_q i_q + r_a (i_d² + i_q²)``."""
    return e.real * i.real + e.imag * i.imag + r_a * (i.real * i.real + i.imag * i.imag)


def algebraic_stator_current(e: complex, eqp: float, p: MachineParams) -> complex:
    """Solve ``0 = e + r_a i - jψ`` with ``ψ_d = e'_q - x'_d i_d``, ``ψ_q = -x_q i_q``."""
    det = p.r_a * p.r_a + p.x_q * p.xp_d
    rhs_d, rhs_q = -e.real, eqp - e.imag
    i_d = (p.r_a * rhs_d + p.x_q * rhs_q) / det
    i_q = (-p.xp_d * rhs_d + p.r_a * rhs_q) / det
    return complex(i_d, i_q)


def stator_fluxes(i: complex, eqp: float, p: MachineParams) -> complex:
    return complex(eqp - p.xp_d * i.real, -p.x_q * i.imag)


def machine_rhs(x, v_bus: complex, p: MachineParams, stator: str, omega_b: float, omega_s: float = 1.0):
    """Machine derivatives.

    Parameters
    ----------
    x : sequence of float
        States in :func:`state_names` order.
    v_bus : complex
        Terminal voltage in the network frame.

    Returns
    -------
    dx : list of float
    i_net : complex
        Injected current in the network frame.
    extras : dict
    """
    if stator == "fullflux":
        psi = complex(x[0], x[1])
        eqp, delta, omega = x[2], x[3], x[4]
    else:
        eqp, delta, omega = x[0], x[1], x[2]
    fwd = cmath.exp(1j * delta)
    e = fwd.conjugate() * v_bus
    if stator == "fullflux":
        i = complex((eqp - psi.real) / p.xp_d, -psi.imag / p.x_q)
        tau_e = psi.real * i.imag - psi.imag * i.real
        dpsi = omega_b * (e + p.r_a * i - 1j * psi)
        dx = [dpsi.real, dpsi.imag]
    else:
        i = algebraic_stator_current(e, eqp, p)
        tau_e = airgap_torque(e, i, p.r_a)
        dx = []
    dx += [(-eqp - (p.x_d - p.xp_d) * i.real + p.e_fd) / p.Tp_d0,
           omega_b * (omega - omega_s),
           (p.tau_m - tau_e - p.D * (omega - 1.0)) / (2.0 * p.H)]
    i_net = fwd * i
    s = v_bus * i_net.conjugate()
    extras = dict(omega=omega, p_e=s.real, q_e=s.imag, omega_pll=omega, v_o_d=v_bus.real, v_o_q=v_bus.imag,
                  i_g_d=i_net.real, i_g_q=i_net.imag, pll_hold=0.0)
    return dx, i_net, extras


def machine_initial_state(v_bus: complex, s_inj: complex, p: MachineParams, stator: str):
    """Back-solve states, ``e_fd`` and ``tau_m`` from terminal conditions.

    Returns
    -------
    x0 : list of float
    params : MachineParams
        Copy of ``p`` with ``e_fd`` and ``tau_m`` set for equilibrium.
    """
    i_net = (s_inj / v_bus).conjugate()
    e_int = v_bus + complex(p.r_a, p.x_q) * i_net
    delta = cmath.phase(e_int) - math.pi / 2.0
    back = cmath.exp(-1j * delta)
    e, i = back * v_bus, back * i_net
    eqp = e.imag + p.r_a * i.imag + p.xp_d * i.real
    e_fd = eqp + (p.x_d - p.xp_d) * i.real
    psi = stator_fluxes(i, eqp, p)
    tau_m = psi.real * i.imag - psi.imag * i.real
    params = MachineParams(**{**p.as_dict(), "e_fd": e_fd, "tau_m": tau_m})
    x0 = ([psi.real, psi.imag] if stator == "fullflux" else []) + [eqp, delta, 1.0]
    return x0, params
