"""π-line branches at three fidelities, admittance assembly and lumped circuits.

Orientation: branch current is positive from ``from_bus`` to ``to_bus`` and
is driven by ``v_from - v_to``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .errors import ConfigError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Branch:
    """Lumped π-line; shunt c and g are totals, split half per end."""

    id: str
    from_bus: str
    to_bus: str
    r: float
    l: float
    c: float = 0.0
    g: float = 0.0
    in_service: bool = True

    def __post_init__(self):
        if self.from_bus == self.to_bus:
            raise ConfigError(f"branch {self.id}: from and to bus are equal")
        if self.r < 0 or self.l <= 0 or self.c < 0 or self.g < 0:
            raise ConfigError(f"branch {self.id}: need r >= 0, l > 0, c >= 0, g >= 0")

    def series_admittance(self, omega_s: float = 1.0) -> complex:
        return 1.0 / complex(self.r, omega_s * self.l)

    def half_shunt_admittance(self, omega_s: float = 1.0) -> complex:
        return 0.5 * complex(self.g, omega_s * self.c)


@dataclass(frozen=True)
class TopologyEvent:
    """Branch status change at a known time."""

    time: float
    branch: str
    in_service: bool = False


def line_rhs_abc(i_l, v1, v2, i1, i2, branch: Branch, omega_b: float):
    """Per-phase π-line derivatives.

    Returns
    -------
    di_l, dv1, dv2 : ndarray, shape (3,)
    """
    if branch.c <= 0:
        raise ConfigError(f"branch {branch.id}: c = 0, use the series r-l form")
    i_l, v1, v2, i1, i2 = (np.asarray(a, dtype=float) for a in (i_l, v1, v2, i1, i2))
    ch, gh = 0.5 * branch.c, 0.5 * branch.g
    di = (omega_b / branch.l) * ((v1 - v2) - branch.r * i_l)
    dv1 = (omega_b / ch) * ((i1 - i_l) - gh * v1)
    dv2 = (omega_b / ch) * ((i_l - i2) - gh * v2)
    return di, dv1, dv2


def line_rhs_dq(i_l, v1, v2, i1, i2, omega_s: float, branch: Branch, omega_b: float):
    """π-line derivatives in a frame rotating at ``omega_s`` (pu).

    ``(l/Ω_b) di/dt = (v1 - v2) - (r + jω_s l) i`` and
    ``(c/2Ω_b) dv/dt = ±(i_in - i_out) - (g/2 + jω_s c/2) v``.
    """
    if branch.c <= 0:
        raise ConfigError(f"branch {branch.id}: c = 0, use the series r-l form")
    il, a, b, ia, ib = (complex(*np.asarray(z, dtype=float)) for z in (i_l, v1, v2, i1, i2))
    ch, gh = 0.5 * branch.c, 0.5 * branch.g
    di = (omega_b / branch.l) * ((a - b) - complex(branch.r, omega_s * branch.l) * il)
    dv1 = (omega_b / ch) * ((ia - il) - complex(gh, omega_s * ch) * a)
    dv2 = (omega_b / ch) * ((il - ib) - complex(gh, omega_s * ch) * b)
    return tuple(np.array([z.real, z.imag]) for z in (di, dv1, dv2))


def assemble_ybus(branches: Sequence[Branch], buses: Sequence[str], omega_s: float = 1.0) -> np.ndarray:
    """Nodal admittance matrix of the in-service branches.

    Off-diagonal ``-y_l``; diagonal ``y_l + y_c/2`` per incident branch.
    """
    pos = {b: k for k, b in enumerate(buses)}
    y = np.zeros((len(buses), len(buses)), dtype=complex)
    for br in branches:
        if not br.in_service:
            continue
        try:
            i, j = pos[br.from_bus], pos[br.to_bus]
        except KeyError as exc:
            raise ConfigError(f"branch {br.id} references unknown bus {exc.args[0]}") from None
        yl = br.series_admittance(omega_s)
        yc = br.half_shunt_admittance(omega_s)
        y[i, i] += yl + yc
        y[j, j] += yl + yc
        y[i, j] -= yl
        y[j, i] -= yl
    return y


def realify(m: np.ndarray) -> np.ndarray:
    """Complex n×n -> real 2n×2n acting on interleaved (d, q) pairs."""
    n = m.shape[0]
    out = np.zeros((2 * n, 2 * n))
    out[0::2, 0::2] = m.real
    out[0::2, 1::2] = -m.imag
    out[1::2, 0::2] = m.imag
    out[1::2, 1::2] = m.real
    return out


def algebraic_network_residual(v, injections, ybus: np.ndarray) -> np.ndarray:
    """``I - Y v`` in stacked (d, q) form.

    Parameters
    ----------
    v, injections : array_like, shape (n_bus, 2)
    """
    vc = np.asarray(v, dtype=float) @ np.array([1.0, 1j])
    ic = np.asarray(injections, dtype=float) @ np.array([1.0, 1j])
    r = ic - ybus @ vc
    return np.column_stack([r.real, r.imag]).ravel()


def apply_topology_event(branches: Sequence[Branch], event: TopologyEvent) -> list[Branch]:
    """Return a new branch list with the event's status applied."""
    out = list(branches)
    for k, br in enumerate(out):
        if br.id == event.branch:
            if br.in_service == event.in_service:
                log.warning("branch %s already %s; event ignored", br.id,
                            "in service" if br.in_service else "out of service")
                return out
            out[k] = replace(br, in_service=event.in_service)
            return out
    raise ConfigError(f"topology event names unknown branch {event.branch!r}")


# -- lumped circuits -----------------------------------------------------------

GROUND = ("ground", None)


def node(k: int):
    return ("node", k)


def port(key: str):
    return ("port", key)


class Circuit:
    """Per-phase lumped circuit built from capacitive nodes and r-l elements.

    Each quantity is either an inductor current or a node voltage. The
    per-phase state matrix ``A0`` (no frame rotation) is returned by
    :meth:`matrix`; external voltage ports and current injections enter
    through :attr:`port_targets` as ``(quantity, gain)`` pairs.
    """

    def __init__(self, omega_b: float):
        self.omega_b = omega_b
        self.quantities: list[tuple[str, str]] = []
        self._nodes: dict[int, tuple[float, float]] = {}
        self._inductors: list[tuple[int, tuple, tuple, float, float]] = []
        self.port_targets: dict[str, list[tuple[int, float]]] = {}

    @property
    def n(self) -> int:
        return len(self.quantities)

    def add_node(self, owner: str, name: str, c: float, g: float = 0.0) -> int:
        if c <= 0:
            raise ConfigError(f"{owner}.{name}: node capacitance must be positive")
        k = len(self.quantities)
        self.quantities.append((owner, name))
        self._nodes[k] = (c, g)
        return k

    def add_inductor(self, owner: str, name: str, a, b, r: float, l: float) -> int:
        """Inductor from terminal ``a`` to ``b``; current positive a -> b."""
        if l <= 0:
            raise ConfigError(f"{owner}.{name}: inductance must be positive")
        for kind, ref in (a, b):
            if kind == "node" and ref not in self._nodes:
                raise ConfigError(f"{owner}.{name}: terminal is not a node")
        k = len(self.quantities)
        self.quantities.append((owner, name))
        self._inductors.append((k, a, b, r, l))
        for (kind, ref), sgn in ((a, 1.0), (b, -1.0)):
            if kind == "port":
                self.port_targets.setdefault(ref, []).append((k, sgn * self.omega_b / l))
        return k

    def add_current_injection(self, key: str, node_index: int, sign: float = 1.0):
        c, _ = self._nodes[node_index]
        self.port_targets.setdefault(key, []).append((node_index, sign * self.omega_b / c))

    def matrix(self) -> np.ndarray:
        wb = self.omega_b
        a0 = np.zeros((self.n, self.n))
        for k, (c, g) in self._nodes.items():
            a0[k, k] -= wb * g / c
        for k, (ka, ra), (kb, rb), r, l in self._inductors:
            a0[k, k] -= wb * r / l
            for kind, ref, sgn in ((ka, ra, 1.0), (kb, rb, -1.0)):
                if kind == "node":
                    a0[k, ref] += sgn * wb / l
                    a0[ref, k] -= sgn * wb / self._nodes[ref][0]
        return a0


def dq_matrix(a0: np.ndarray, omega_b: float, omega_s: float = 1.0) -> np.ndarray:
    """Per-phase matrix -> dq matrix with the ``-jω_s`` rotation term."""
    n = a0.shape[0]
    rot = np.array([[0.0, 1.0], [-1.0, 0.0]])
    return np.kron(a0, np.eye(2)) + omega_s * omega_b * np.kron(np.eye(n), rot)


def abc_matrix(a0: np.ndarray) -> np.ndarray:
    return np.kron(a0, np.eye(3))
