"""Event-driven simulation, recording and cross-formulation comparison."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, MultifidError, SolverError
from ..network import TopologyEvent, apply_topology_event
from ..solvers.config import SolverConfig, SolverStats
from ..solvers.explicit import step_rk4
from ..solvers.linalg import LU
from ..solvers.newton import newton_solve
from ..solvers.rosenbrock import integrate_adaptive
from .compile import OUTPUT_NAMES, SystemModel, compile_system, with_params
from .initialize import initialize
from .schema import validate

log = logging.getLogger(__name__)


@dataclass
class TimeSeriesResult:
    """Recorded signals on a uniform grid.

    Attributes
    ----------
    t : ndarray
        Output grid (uniform, starting at 0).
    signals : dict
        ``"<owner>.<signal>" -> ndarray``, insertion ordered.
    stats : SolverStats
    events : list of dict
        Applied events (time, kind, target, detail).
    raw_t : ndarray
        Accepted step end times of adaptive runs (empty for fixed-step runs).
    failure : str or None
        Failure context when the run stopped early; the grid then ends at
        the last valid sample.
    """

    formulation: str
    t: np.ndarray
    signals: dict
    stats: SolverStats
    events: list = field(default_factory=list)
    raw_t: np.ndarray = field(default_factory=lambda: np.zeros(0))
    failure: str | None = None
    failure_time: float | None = None
    failure_state: str | None = None
    init_info: dict = field(default_factory=dict)
    final_state: np.ndarray | None = field(default=None, repr=False)
    final_model: object = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.failure is None

    def names(self) -> list[str]:
        return list(self.signals)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.signals[name]
        except KeyError:
            raise ConfigError(f"result has no signal {name!r}") from None

    def to_csv(self, path) -> None:
        """Write ``time_s`` plus one column per signal with 17 significant digits."""
        names = self.names()
        data = np.column_stack([self.t] + [self.signals[n] for n in names])
        header = ",".join(["time_s"] + names)
        np.savetxt(path, data, fmt="%.17g", delimiter=",", header=header, comments="")


def read_csv(path) -> tuple[np.ndarray, dict]:
    """Inverse of :meth:`TimeSeriesResult.to_csv`."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], {name: data[:, k + 1] for k, name in enumerate(header[1:])}


# -- signal extraction ---------------------------------------------------------

def available_signals(model: SystemModel) -> list[str]:
    """All recordable names: states, bus dq voltages and magnitudes, device outputs."""
    names = model.layout.names()
    for bus in model.bus_ids:
        for s in ("v_d", "v_q"):
            if f"{bus}.{s}" not in names:
                names.append(f"{bus}.{s}")
        names.append(f"{bus}.v_mag")
    for d in model.devices:
        if d.type != "source":
            names += [f"{d.id}.{o}" for o in OUTPUT_NAMES]
    return names


def default_record(sc) -> list[str]:
    """Bus dq voltages and magnitudes plus all device outputs; used when
    neither the call nor the scenario lists signals."""
    names = [f"{b}.{s}" for b in sc.bus_ids() for s in ("v_d", "v_q", "v_mag")]
    return names + [f"{d.id}.{o}" for d in sc.devices if d.type != "source" for o in OUTPUT_NAMES]


def extract_signals(model: SystemModel, t: np.ndarray, X: np.ndarray, names: list[str]) -> dict:
    """Evaluate ``names`` at samples ``(t, X)`` of one model."""
    out = {}
    need_v = any(n.endswith((".v_d", ".v_q", ".v_mag")) for n in names)
    v = model.bus_voltages(t, X) if need_v and len(t) else None
    need_dev = any(n.split(".", 1)[1] in OUTPUT_NAMES for n in names)
    dev_out = None
    if need_dev and len(t):
        dev_out = np.empty((len(t), len(model.devices), len(OUTPUT_NAMES)))
        for k in range(len(t)):
            dev_out[k] = model.outputs(t[k], X[k])
    bus_pos = {b: j for j, b in enumerate(model.bus_ids)}
    dev_pos = {d.id: k for k, d in enumerate(model.devices)}
    for name in names:
        owner, sig = name.split(".", 1)
        if owner in bus_pos and sig in ("v_d", "v_q", "v_mag"):
            z = v[:, bus_pos[owner]] if v is not None else np.zeros(0, dtype=complex)
            out[name] = {"v_d": z.real, "v_q": z.imag, "v_mag": np.abs(z)}[sig].copy()
        elif owner in dev_pos and sig in OUTPUT_NAMES:
            out[name] = dev_out[:, dev_pos[owner], OUTPUT_NAMES.index(sig)].copy() if dev_out is not None \
                else np.zeros(0)
        else:
            k = model.layout.get(owner, sig)
            out[name] = X[:, k].copy() if k is not None else np.zeros(len(t))
    return out


# -- events --------------------------------------------------------------------

def _apply_event(ev, branches, params):
    if ev.kind in ("branch_trip", "branch_close"):
        branches = apply_topology_event(branches, TopologyEvent(ev.time, ev.target, ev.kind == "branch_close"))
        detail = "opened" if ev.kind == "branch_trip" else "closed"
    else:
        params = dict(params)
        params[ev.target] = with_params(params[ev.target], **{ev.parameter: ev.value})
        detail = f"{ev.parameter} = {ev.value:.17g}"
    return tuple(branches), params, detail


def remap_state(old: SystemModel, x_old: np.ndarray, new: SystemModel) -> np.ndarray:
    """Carry states across a recompilation by name; new states start at 0."""
    x = np.zeros(new.n)
    for k, (owner, name) in enumerate(new.layout.entries):
        j = old.layout.get(owner, name)
        if j is not None:
            x[k] = x_old[j]
    return x


def solve_algebraic(model: SystemModel, t: float, x: np.ndarray, tol: float = 1e-10) -> np.ndarray:
    """Make algebraic rows consistent with the differential states (Newton)."""
    nd = model.n_diff
    if nd == model.n:
        return x
    xd = x[:nd].copy()

    def g(y):
        return model.rhs(t, np.concatenate([xd, y]))[nd:]

    def jac(y):
        full = np.concatenate([xd, y])
        return model.jacobian(t, full)[nd:, nd:]

    res = newton_solve(g, jac, x[nd:], tol=tol, max_iter=20)
    return np.concatenate([xd, res.x])


def project_algebraic(model: SystemModel, t: np.ndarray, X: np.ndarray, tol: float = 1e-10,
                      max_iter: int = 6) -> np.ndarray:
    """Re-solve the algebraic rows at interpolated output samples.

    Dense output interpolates algebraic variables along with the states, so
    the constraints hold only to the integration tolerance between steps.
    A simplified Newton iteration with a shared ``J_yy`` factorization
    restores them; the factorization is refreshed when it stalls.
    """
    nd = model.n_diff
    if nd == model.n or len(t) == 0:
        return X
    X = X.copy()
    lu = None
    for k in range(len(t)):
        x = X[k]
        for it in range(2 * max_iter):
            r = model.rhs(t[k], x)[nd:]
            if np.max(np.abs(r)) < tol:
                break
            if lu is None or it == max_iter:
                lu = LU(model.jacobian(t[k], x)[nd:, nd:])
            x[nd:] -= lu.solve(r)
        else:
            raise SolverError(f"algebraic projection did not converge at t={t[k]:g}", time=float(t[k]))
    return X


# -- integration per segment ---------------------------------------------------

def _segment_adaptive(model, cfg, ta, tb, x, t_out, stats, first):
    dt0 = cfg.first_dt if first else 10.0 * cfg.dt_min
    seg_stats = SolverStats()
    try:
        x_end, x_out, seg_stats, t_steps, _ = integrate_adaptive(model, ta, x, tb, cfg, t_out=t_out,
                                                                 stats=seg_stats, dt0=dt0)
    finally:
        stats.merge(seg_stats)
    return x_end, project_algebraic(model, t_out, x_out, cfg.newton_tol), t_steps[1:]


def _fixed_counts(cfg, ta, tb, output_dt):
    dt = cfg.dt_fixed
    n_steps = int(round((tb - ta) / dt))
    if abs(n_steps * dt - (tb - ta)) > 1e-9 * max(1.0, tb):
        raise ConfigError(f"segment [{ta:g}, {tb:g}] is not a multiple of dt_fixed = {dt:g}; "
                          "event times must lie on the fixed step grid")
    every = int(round(output_dt / dt))
    if every < 1 or abs(every * dt - output_dt) > 1e-12:
        raise ConfigError(f"output_dt = {output_dt:g} must be a multiple of dt_fixed = {dt:g}")
    if abs(round(ta / output_dt) * output_dt - ta) > 1e-9:
        raise ConfigError(f"event time {ta:g} must lie on the output grid for fixed-step runs")
    return dt, n_steps, every


def _segment_trapezoidal(model, cfg, ta, tb, x, output_dt, stats):
    dt, n_steps, every = _fixed_counts(cfg, ta, tb, output_dt)
    rec = np.zeros((n_steps // every + 1, model.n))
    st = model.kernel.integrate_trapezoidal(ta, np.ascontiguousarray(x), dt, n_steps, every, rec,
                                            cfg.newton_tol, cfg.newton_max_iter, cfg.jacobian_reuse_limit,
                                            cfg.fd_eps)
    stats.record_fixed(dt, st["steps"])
    stats.rhs_evaluations += st["rhs_evaluations"]
    stats.jacobian_evaluations += st["jacobian_evaluations"]
    stats.jacobian_rhs_evaluations += st["jacobian_rhs_evaluations"]
    stats.lu_factorizations += st["lu_factorizations"]
    stats.newton_iterations += st["newton_iterations"]
    t_rec = ta + dt * every * np.arange(rec.shape[0])
    if st["failed_step"] >= 0:
        n_ok = st["failed_step"] // every + 1
        exc = SolverError("trapezoidal Newton iteration did not converge", time=ta + (st["failed_step"] + 1) * dt)
        exc.partial = {"n_out": n_ok - 1, "x_out": rec[1:n_ok], "t": ta + st["failed_step"] * dt}
        raise exc
    return rec[-1].copy(), t_rec[1:], rec[1:]


def _segment_rk4(model, cfg, ta, tb, x, output_dt, stats):
    dt, n_steps, every = _fixed_counts(cfg, ta, tb, output_dt)
    rec = []
    for k in range(n_steps):
        try:
            x = step_rk4(model.rhs, x, ta + k * dt, dt)
        except SolverError as exc:
            exc.partial = {"n_out": len(rec), "x_out": np.array(rec).reshape(-1, model.n), "t": ta + k * dt}
            raise
        stats.rhs_evaluations += 4
        if (k + 1) % every == 0:
            rec.append(x.copy())
    stats.record_fixed(dt, n_steps)
    rec = np.array(rec).reshape(-1, model.n)
    return x, ta + dt * every * np.arange(1, len(rec) + 1), rec


# -- driver ----------------------------------------------------------------------

def output_grid(t_end: float, output_dt: float) -> np.ndarray:
    n = int(math.floor(t_end / output_dt + 1e-9))
    return np.arange(n + 1) * output_dt


def run(sc, formulation: str | None = None, solver: SolverConfig | None = None, backend=None,
        t_end: float | None = None, record=None) -> TimeSeriesResult:
    """Simulate a scenario over ``[0, t_end]``.

    Events split the run into segments. At each event the system is
    recompiled, states are carried over by name, algebraic variables are
    re-solved (QSP) and the adaptive solver restarts at ``10 dt_min``.
    Solver failures do not raise: the partial result carries ``failure``.
    Without an explicit record list, :func:`default_record` is used; pass
    ``available_signals(model)`` to record every state.
    """
    f = formulation or sc.formulation
    validate(sc, f)
    cfg = solver or sc.solver_config(f)
    t_end = sc.t_end if t_end is None else t_end
    ic = initialize(sc, f, backend=backend)
    model, x, params, branches = ic.model, ic.x0, ic.params, tuple(sc.branches)
    model.fd_eps, model.fd_central = cfg.fd_eps, cfg.fd_central
    names = list(record if record is not None else sc.record) or default_record(sc)
    known = set(available_signals(model))
    missing = [n for n in names if n not in known]
    if missing:
        raise ConfigError(f"unknown record signals: {missing}")
    grid = output_grid(t_end, sc.output_dt)
    stats = SolverStats()
    chunks_t, chunks = [grid[:1]], [extract_signals(model, grid[:1], x[None, :], names)]
    raw_t = [np.zeros(1)] if cfg.method == "adaptive" else []
    events_log = []
    boundaries = sorted({e.time for e in sc.events if e.time < t_end})
    seg_edges = [0.0] + boundaries + [t_end]
    result = TimeSeriesResult(f, grid, {}, stats, events_log,
                              init_info={"power_flow_iterations": ic.power_flow.iterations,
                                         "power_flow_mismatch": ic.power_flow.mismatch,
                                         "refinement_iterations": ic.refinement_iterations,
                                         "initial_residual": ic.residual})
    failure = None
    for s in range(len(seg_edges) - 1):
        ta, tb = seg_edges[s], seg_edges[s + 1]
        if s > 0:
            for ev in (e for e in sc.events if e.time == ta):
                branches, params, detail = _apply_event(ev, branches, params)
                events_log.append({"time": ev.time, "kind": ev.kind, "target": ev.target, "detail": detail})
                log.info("t=%g: %s %s (%s)", ev.time, ev.kind, ev.target, detail)
            new = compile_system(sc, f, branches, params, backend)
            new.fd_eps, new.fd_central = cfg.fd_eps, cfg.fd_central
            x = remap_state(model, x, new)
            model = new
            try:
                x = solve_algebraic(model, ta, x, cfg.newton_tol)
            except MultifidError as exc:
                failure = (f"algebraic re-solve after events at t={ta:g} failed: {exc}", ta, None)
                break
        sel = (grid > ta + 1e-12) & (grid <= tb + 1e-12)
        t_seg = grid[sel]
        try:
            if cfg.method == "adaptive":
                x, x_out, steps = _segment_adaptive(model, cfg, ta, tb, x, t_seg, stats, s == 0)
                raw_t.append(steps)
            elif cfg.method == "trapezoidal":
                x, _, x_out = _segment_trapezoidal(model, cfg, ta, tb, x, sc.output_dt, stats)
            else:
                x, _, x_out = _segment_rk4(model, cfg, ta, tb, x, sc.output_dt, stats)
        except SolverError as exc:
            part = getattr(exc, "partial", None) or {"n_out": 0, "x_out": np.zeros((0, model.n))}
            n_ok = part["n_out"]
            if n_ok:
                chunks_t.append(t_seg[:n_ok])
                chunks.append(extract_signals(model, t_seg[:n_ok], part["x_out"][:n_ok], names))
            if "t_steps" in part:
                raw_t.append(part["t_steps"][1:])
            failure = (str(exc), exc.time, exc.state)
            break
        if len(x_out) != len(t_seg):
            raise SolverError(f"recorded {len(x_out)} samples for {len(t_seg)} grid points", time=tb)
        chunks_t.append(t_seg)
        chunks.append(extract_signals(model, t_seg, x_out, names))
    result.t = np.concatenate(chunks_t)
    result.signals = {n: np.concatenate([c[n] for c in chunks]) for n in names}
    result.raw_t = np.concatenate(raw_t) if raw_t else np.zeros(0)
    if failure is not None:
        result.failure, result.failure_time, result.failure_state = failure
        log.error("run stopped: %s", failure[0])
    result.final_state = x
    result.final_model = model
    return result


# -- comparison ------------------------------------------------------------------

@dataclass
class SignalError:
    signal_a: str
    signal_b: str
    max_abs: float
    rms: float


@dataclass
class ComparisonReport:
    label_a: str
    label_b: str
    t_start: float
    t_stop: float
    errors: list

    def get(self, signal: str) -> SignalError:
        for e in self.errors:
            if e.signal_a == signal:
                return e
        raise ConfigError(f"signal {signal!r} was not compared")

    def as_rows(self) -> list[dict]:
        return [{"signal_a": e.signal_a, "signal_b": e.signal_b, "max_abs": e.max_abs, "rms": e.rms}
                for e in self.errors]


def common_signals(a: TimeSeriesResult, b: TimeSeriesResult) -> dict:
    """Signals present in both results with identical names (bus voltages,
    device outputs, shared states)."""
    return {n: n for n in a.signals if n in b.signals}


def compare(a: TimeSeriesResult, b: TimeSeriesResult, signal_map: dict | None = None,
            t_min: float | None = None, t_max: float | None = None) -> ComparisonReport:
    """Max-abs and RMS differences on ``a``'s grid over the common time range.

    ``b`` is linearly interpolated when the grids differ.

    Raises
    ------
    ConfigError
        If the time ranges do not overlap or a mapped signal is missing.
    """
    lo = max(a.t[0], b.t[0], -math.inf if t_min is None else t_min)
    hi = min(a.t[-1], b.t[-1], math.inf if t_max is None else t_max)
    if not hi >= lo or len(a.t) == 0 or len(b.t) == 0:
        raise ConfigError("results do not overlap in time")
    sel = (a.t >= lo - 1e-12) & (a.t <= hi + 1e-12)
    if not np.any(sel):
        raise ConfigError("results do not overlap in time")
    ta = a.t[sel]
    same_grid = len(a.t) == len(b.t) and np.array_equal(a.t, b.t)
    errors = []
    for sa, sb in (signal_map or common_signals(a, b)).items():
        ya = a[sa][sel]
        yb = b[sb][sel] if same_grid else np.interp(ta, b.t, b[sb])
        d = ya - yb
        errors.append(SignalError(sa, sb, float(np.max(np.abs(d))), float(np.sqrt(np.mean(d * d)))))
    return ComparisonReport(a.formulation, b.formulation, float(ta[0]), float(ta[-1]), errors)
