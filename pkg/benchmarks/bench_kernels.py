"""Compiled vs pure-Python kernel timings on the default scenario.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N] [--steps N]``

Times right-hand-side evaluation, a finite-difference Jacobian and a short
fixed-step trapezoidal run for each formulation, and checks that both
backends agree.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from multifid import _pykernels
from multifid.kernels import compiled_available, load_backend
from multifid.scenario import default_scenario, initialize


def best_of(fn, repeat: int) -> float:
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench(formulation: str, backend, repeat: int, steps: int) -> dict:
    sc = default_scenario()
    ic = initialize(sc, formulation, backend=backend)
    m, x = ic.model, ic.x0
    f0 = m.rhs(0.0, x)
    n_rhs = 200
    rhs = best_of(lambda: [m.rhs(1e-3 * k, x) for k in range(n_rhs)], repeat) / n_rhs
    jac = best_of(lambda: m.jacobian(0.0, x, f0), repeat)
    out = {"n": m.n, "rhs_us": 1e6 * rhs, "jac_ms": 1e3 * jac, "x_end": None, "trap_ms": None}
    if m.n_diff == m.n:
        rec = np.zeros((2, m.n))

        def trap():
            m.kernel.integrate_trapezoidal(0.0, x.copy(), 5e-6, steps, steps, rec, 1e-10, 8, 50, 1.5e-8)

        out["trap_ms"] = 1e3 * best_of(trap, repeat)
        out["x_end"] = rec[-1].copy()
    return out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--steps", type=int, default=2000, help="trapezoidal steps per run")
    args = ap.parse_args(argv)
    if not compiled_available():
        print("compiled extension not built; only the Python backend is timed")
    backends = {"python": _pykernels}
    if compiled_available():
        backends["cython"] = load_backend("cython")
    print(f"{'formulation':<12}{'backend':<9}{'n':>4}{'rhs [us]':>12}{'jacobian [ms]':>15}"
          f"{'trapezoidal [ms]':>18}")
    for f in ("qsp", "dq", "abc"):
        res = {name: bench(f, be, args.repeat, args.steps) for name, be in backends.items()}
        for name, r in res.items():
            trap = f"{r['trap_ms']:.1f}" if r["trap_ms"] is not None else "-"
            print(f"{f:<12}{name:<9}{r['n']:>4}{r['rhs_us']:>12.1f}{r['jac_ms']:>15.3f}{trap:>18}")
        if len(res) == 2:
            p, c = res["python"], res["cython"]
            line = f"{'':<12}speedup  rhs x{p['rhs_us'] / c['rhs_us']:.1f}, jacobian x{p['jac_ms'] / c['jac_ms']:.1f}"
            if p["trap_ms"] is not None:
                diff = np.max(np.abs(p["x_end"] - c["x_end"]))
                line += f", trapezoidal x{p['trap_ms'] / c['trap_ms']:.1f} (max state difference {diff:.1e})"
            print(line)


if __name__ == "__main__":
    main()
