import os
import subprocess
import sys

import numpy as np
import pytest

from helpers import smib_inverter, smib_machine
from multifid import _pykernels
from multifid.devices.inverter import PARAM_NAMES as INVERTER_PARAM_NAMES
from multifid.devices.machine import PARAM_NAMES as MACHINE_PARAM_NAMES
from multifid.kernels import compiled_available, load_backend
from multifid.scenario import default_scenario, initialize

needs_ext = pytest.mark.skipif(not compiled_available(), reason="compiled extension not built")

CASES = [
    ("default", lambda: default_scenario(), ("qsp", "dq", "abc")),
    ("reduced inner", lambda: smib_inverter(inner="reduced", outer="vsm"), ("qsp", "dq", "abc")),
    ("ideal pll", lambda: smib_inverter(pll="ideal"), ("qsp", "dq")),
    ("norton", lambda: smib_inverter(interface="norton"), ("qsp",)),
    ("fullflux", lambda: smib_machine("fullflux"), ("dq", "abc")),
    ("algebraic", lambda: smib_machine("algebraic"), ("qsp", "dq")),
]


def test_python_backend_selectable():
    assert load_backend("python") is _pykernels
    assert _pykernels.BACKEND == "python"


def test_env_var_forces_python():
    env = dict(os.environ, MULTIFID_KERNEL="python")
    out = subprocess.run([sys.executable, "-c", "import multifid.kernels as k; print(k.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


def test_param_name_tables_agree():
    assert tuple(_pykernels.INVERTER_PARAMS) == INVERTER_PARAM_NAMES
    assert tuple(_pykernels.MACHINE_PARAMS) == MACHINE_PARAM_NAMES


@needs_ext
def test_compiled_param_name_tables_agree():
    c = load_backend("cython")
    assert c.BACKEND == "cython"
    assert tuple(c.INVERTER_PARAMS) == INVERTER_PARAM_NAMES
    assert tuple(c.MACHINE_PARAMS) == MACHINE_PARAM_NAMES


@needs_ext
@pytest.mark.parametrize("label,make,formulations", CASES, ids=[c[0] for c in CASES])
def test_backends_agree(label, make, formulations):
    sc = make()
    rng = np.random.default_rng(11)
    for f in formulations:
        mp = initialize(sc, f, backend=_pykernels).model
        mc = initialize(sc, f, backend=load_backend("cython")).model
        x0 = initialize(sc, f, backend=_pykernels).x0
        x = x0 + 1e-3 * rng.normal(size=x0.size)
        t = 0.0123
        fp, fc = mp.rhs(t, x), mc.rhs(t, x)
        scale = max(1.0, np.max(np.abs(fp)))
        assert np.max(np.abs(fp - fc)) < 1e-12 * scale, f
        np.testing.assert_allclose(mp.outputs(t, x), mc.outputs(t, x), rtol=1e-12, atol=1e-13)
        jp, jc = mp.jacobian(t, x), mc.jacobian(t, x)
        assert np.max(np.abs(jp - jc)) < 1e-6 * max(1.0, np.max(np.abs(jp))), f


@needs_ext
def test_trapezoidal_kernels_agree():
    sc = default_scenario()
    runs = []
    for be in (_pykernels, load_backend("cython")):
        ic = initialize(sc, "abc", backend=be)
        rec = np.zeros((3, ic.model.n))
        x = ic.x0.copy()
        x[0] += 1e-2
        ic.model.kernel.integrate_trapezoidal(0.0, x, 5e-6, 400, 200, rec, 1e-10, 8, 50, 1.5e-8)
        runs.append(rec)
    assert np.max(np.abs(runs[0] - runs[1])) < 1e-10
