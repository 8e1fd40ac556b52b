"""Per-unit conventions, small value types and the global state layout."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigError, LayoutError

OMEGA_60 = 2.0 * np.pi * 60.0
OMEGA_50 = 2.0 * np.pi * 50.0


@dataclass(frozen=True)
class PerUnitBase:
    """System bases.

    Parameters
    ----------
    s_base : float
        Apparent power base in MVA.
    v_base : float
        Voltage base in kV.
    omega_b : float
        Base angular frequency in rad/s.
    """

    s_base: float = 100.0
    v_base: float = 230.0
    omega_b: float = OMEGA_60

    def __post_init__(self):
        if not (self.omega_b > 0 and np.isfinite(self.omega_b)):
            raise ConfigError(f"omega_b must be positive, got {self.omega_b}")
        if self.s_base <= 0 or self.v_base <= 0:
            raise ConfigError("s_base and v_base must be positive")

    @classmethod
    def from_frequency(cls, f_hz: float, s_base: float = 100.0, v_base: float = 230.0) -> "PerUnitBase":
        return cls(s_base=s_base, v_base=v_base, omega_b=2.0 * np.pi * f_hz)

    @property
    def f_hz(self) -> float:
        return self.omega_b / (2.0 * np.pi)

    @property
    def z_base(self) -> float:
        """Impedance base in ohm."""
        return self.v_base**2 / self.s_base


class Abc3(NamedTuple):
    """Instantaneous phase values."""

    a: float
    b: float
    c: float


class DqPair(NamedTuple):
    """Direct and quadrature components, read as ``d + jq``."""

    d: float
    q: float

    @property
    def complex(self) -> complex:
        return complex(self.d, self.q)

    @classmethod
    def from_complex(cls, z: complex) -> "DqPair":
        return cls(z.real, z.imag)


@dataclass(frozen=True)
class StateLayout:
    """Ordered assignment of (owner, state) pairs to global indices.

    Differential states always precede algebraic ones, so the mass matrix
    of a semi-explicit DAE is ``diag(I, 0)``.
    """

    entries: tuple[tuple[str, str], ...] = ()
    n_diff: int = 0
    _index: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        idx = {}
        for k, key in enumerate(self.entries):
            if key in idx:
                raise LayoutError(f"duplicate state {key[0]}.{key[1]}")
            idx[key] = k
        object.__setattr__(self, "_index", idx)
        if not 0 <= self.n_diff <= len(self.entries):
            raise LayoutError("differential count out of range")

    @property
    def n(self) -> int:
        return len(self.entries)

    @property
    def n_alg(self) -> int:
        return self.n - self.n_diff

    def index(self, owner: str, name: str) -> int:
        try:
            return self._index[(owner, name)]
        except KeyError:
            raise LayoutError(f"unknown state {owner}.{name}") from None

    def get(self, owner: str, name: str, default=None):
        return self._index.get((owner, name), default)

    def __contains__(self, key) -> bool:
        return key in self._index

    def names(self) -> list[str]:
        return [f"{o}.{s}" for o, s in self.entries]

    def name(self, k: int) -> str:
        o, s = self.entries[k]
        return f"{o}.{s}"

    def owner_indices(self, owner: str) -> list[int]:
        return [k for k, (o, _) in enumerate(self.entries) if o == owner]

    def mass_diagonal(self) -> np.ndarray:
        m = np.zeros(self.n)
        m[: self.n_diff] = 1.0
        return m


def build_layout(
    differential: Iterable[tuple[str, Sequence[str]]],
    algebraic: Iterable[tuple[str, Sequence[str]]] = (),
) -> StateLayout:
    """Assign global indices to declared states.

    Parameters
    ----------
    differential, algebraic : iterable of (owner, state names)
        Declarations in the order they should appear.

    Returns
    -------
    StateLayout
        Differential block first, then algebraic block; order within each
        block follows the declarations.
    """
    diff = [(o, s) for o, names in differential for s in names]
    alg = [(o, s) for o, names in algebraic for s in names]
    return StateLayout(entries=tuple(diff + alg), n_diff=len(diff))


def wrap_angle(theta):
    """Wrap angles to (-pi, pi]; applied only when reporting."""
    return np.pi - np.mod(np.pi - np.asarray(theta), 2.0 * np.pi)
