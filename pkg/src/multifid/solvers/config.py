"""Solver configuration and work statistics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

from ..errors import ConfigError

METHODS = ("rk4", "trapezoidal", "adaptive")


@dataclass(frozen=True)
class SolverConfig:
    """Integration settings; times in seconds.

    ``dt_initial`` defaults to ``10 * dt_min``, the same restart rule used
    after every event.
    """

    method: str = "adaptive"
    dt_fixed: float = 5e-6
    abstol: float = 1e-8
    reltol: float = 1e-8
    dt_min: float = 1e-9
    dt_max: float = 0.1
    dt_initial: float | None = None
    newton_tol: float = 1e-10
    newton_max_iter: int = 8
    jacobian_reuse_limit: int = 50
    fd_eps: float = 1.5e-8
    fd_central: bool = False

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"solver method must be one of {METHODS}, got {self.method!r}")
        if not (self.abstol > 0 and self.reltol > 0):
            raise ConfigError("abstol and reltol must be positive")
        if not (0 < self.dt_min <= self.dt_max):
            raise ConfigError("need 0 < dt_min <= dt_max")
        if self.dt_fixed <= 0 or self.newton_tol <= 0 or self.newton_max_iter < 1:
            raise ConfigError("dt_fixed, newton_tol and newton_max_iter must be positive")
        if self.jacobian_reuse_limit < 1:
            raise ConfigError("jacobian_reuse_limit must be >= 1")

    @property
    def first_dt(self) -> float:
        return self.dt_initial if self.dt_initial is not None else 10.0 * self.dt_min

    def replace(self, **kw) -> "SolverConfig":
        return SolverConfig(**{**asdict(self), **{k: v for k, v in kw.items() if v is not None}})

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass
class SolverStats:
    """Work counters, summed over all segments of a run.

    ``rhs_evaluations`` counts calls made by the integration formula
    itself; finite-difference Jacobian calls are in
    ``jacobian_rhs_evaluations``.
    """

    accepted_steps: int = 0
    rejected_steps: int = 0
    rhs_evaluations: int = 0
    jacobian_evaluations: int = 0
    jacobian_rhs_evaluations: int = 0
    lu_factorizations: int = 0
    newton_iterations: int = 0
    min_dt_used: float = math.inf
    max_dt_used: float = 0.0
    steps_below_1ms: int = 0
    step_sizes: list = field(default_factory=list, repr=False)

    def record_step(self, dt: float):
        self.accepted_steps += 1
        self.min_dt_used = min(self.min_dt_used, dt)
        self.max_dt_used = max(self.max_dt_used, dt)
        if dt < 1e-3:
            self.steps_below_1ms += 1
        self.step_sizes.append(dt)

    def record_fixed(self, dt: float, count: int):
        """Account for ``count`` accepted fixed steps of size ``dt`` (sizes are not listed)."""
        if count <= 0:
            return
        self.accepted_steps += count
        self.min_dt_used = min(self.min_dt_used, dt)
        self.max_dt_used = max(self.max_dt_used, dt)
        if dt < 1e-3:
            self.steps_below_1ms += count

    def merge(self, other: "SolverStats") -> "SolverStats":
        for f in fields(self):
            if f.name in ("min_dt_used", "max_dt_used", "step_sizes"):
                continue
            setattr(self, f.name, getattr(self, f.name) + getattr(other, f.name))
        self.min_dt_used = min(self.min_dt_used, other.min_dt_used)
        self.max_dt_used = max(self.max_dt_used, other.max_dt_used)
        self.step_sizes.extend(other.step_sizes)
        return self

    @property
    def total_steps(self) -> int:
        return self.accepted_steps + self.rejected_steps

    def as_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "step_sizes"}
        if d["min_dt_used"] == math.inf:
            d["min_dt_used"] = None
        d["total_steps"] = self.total_steps
        return d
