"""Device-to-network coupling: Norton/Thevenin equivalents, frame rotation of
injections and the ideal voltage source used for infinite buses."""
from __future__ import annotations

import cmath
from dataclasses import dataclass

from ..errors import ConfigError
from ..transforms import frame_rotate

SOURCE_PARAM_NAMES = ("v_mag", "v_angle")


@dataclass(frozen=True)
class InterfaceEquivalent:
    """Either ``Norton(y_th, i_n)`` or ``Thevenin(z_th, v_th)``; complex values."""

    kind: str
    impedance_or_admittance: complex
    source: complex

    def __post_init__(self):
        if self.kind not in ("norton", "thevenin"):
            raise ConfigError(f"interface kind must be norton or thevenin, got {self.kind!r}")


def to_norton(eq: InterfaceEquivalent) -> InterfaceEquivalent:
    """``y_th = 1/z_th``, ``i_n = v_th/z_th``."""
    if eq.kind == "norton":
        return eq
    z = eq.impedance_or_admittance
    if z == 0:
        raise ConfigError("ideal voltage source (z_th = 0) has no Norton equivalent")
    return InterfaceEquivalent("norton", 1.0 / z, eq.source / z)


def to_thevenin(eq: InterfaceEquivalent) -> InterfaceEquivalent:
    """``z_th = 1/y_th``, ``v_th = i_n/y_th``."""
    if eq.kind == "thevenin":
        return eq
    y = eq.impedance_or_admittance
    if y == 0:
        raise ConfigError("ideal current source (y_th = 0) has no Thevenin equivalent")
    return InterfaceEquivalent("thevenin", 1.0 / y, eq.source / y)


def device_injection(i_device, delta: float):
    """Device-frame current to the network frame: ``frame_rotate(i, -δ)``."""
    if isinstance(i_device, complex):
        return i_device * cmath.exp(1j * delta)
    return frame_rotate(i_device, -delta)


def source_voltage(v_mag: float, v_angle: float) -> complex:
    return cmath.rect(v_mag, v_angle)
