import os
import subprocess
import sys

import numpy as np
import pytest

from waveguide_carleman import kernels, profiles
from waveguide_carleman.forward import solve_forward, wall_probe
from waveguide_carleman.grid import CrossSection, build_grid

needs_numba = pytest.mark.skipif(not kernels.HAS_NUMBA, reason="numba not importable")


@pytest.fixture
def backend():
    prev = kernels.backend()
    yield kernels.set_backend
    kernels.set_backend(prev)


@pytest.fixture(scope="module")
def setup():
    g = build_grid(CrossSection.interval(0.0, 1.0), 3.0, 0.5, (0.02, 0.05), 0.005)
    c = profiles.linear(g, 0.95, 2.0)
    th = profiles.ramp_theta0(g, half_width=1.5, edge=0.5)
    return g, c, th


def test_unknown_backend_rejected(backend):
    with pytest.raises(ValueError):
        backend("fortran")


@needs_numba
def test_flux_divergence_agrees(backend, setup):
    g, c, th = setup
    backend("numpy")
    a = kernels.flux_divergence(c.values, th.values, g.spacing)
    backend("numba")
    b = kernels.flux_divergence(c.values, th.values, g.spacing)
    assert np.allclose(a, b, rtol=0, atol=1e-12 * np.max(np.abs(a)))


@needs_numba
def test_leapfrog_agrees(backend, setup):
    g, c, th = setup
    out = {}
    for name in ("numpy", "numba"):
        backend(name)
        out[name] = solve_forward(c, th, profiles.zero(g), L_obs=1.0, keep_levels=[5, -1])
    a, b = out["numpy"], out["numba"]
    assert np.allclose(a.energy, b.energy, rtol=1e-12)
    assert np.allclose(a.trace.data, b.trace.data, rtol=0, atol=1e-10 * np.max(np.abs(a.trace.data)))
    assert np.allclose(a.level(-1), b.level(-1), rtol=0, atol=1e-12)
    assert a.stored_levels == b.stored_levels == [5, g.nt - 1]


@needs_numba
def test_march_agrees(backend, setup):
    g, c, th = setup
    w = kernels.flux_divergence(c.values, th.values, g.spacing)
    known = np.zeros(g.shape, bool)
    known[:15] = True
    c0 = np.where(known, c.values, np.nan)
    res = {}
    for name in ("numpy", "numba"):
        backend(name)
        res[name] = kernels.march_flux(th.values, w, c0, known, g.spacing)
    assert np.array_equal(np.isnan(res["numpy"]), np.isnan(res["numba"]))
    assert np.allclose(res["numpy"], res["numba"], equal_nan=True, rtol=0, atol=1e-12)


def test_three_axis_uses_numpy(backend):
    g = build_grid(CrossSection.rectangle((0.0, 1.0), (0.0, 1.0)), 1.0, 0.5, 0.25, 0.05)
    c = np.ones(g.shape)
    u = profiles.eigenmode(g).values
    a = kernels.flux_divergence(c, u, g.spacing)
    assert a.shape == g.shape and np.all(a[0] == 0)


def test_probe_shape(setup):
    g, _, _ = setup
    assert wall_probe(g).shape == (2, g.shape[0])


def test_environment_flag_selects_numpy():
    env = dict(os.environ, WAVEGUIDE_BACKEND="numpy")
    out = subprocess.run([sys.executable, "-c", "from waveguide_carleman import kernels; print(kernels.backend())"],
                         env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["WAVEGUIDE_BACKEND"] = "bogus"
    bad = subprocess.run([sys.executable, "-c", "import waveguide_carleman.kernels"], env=env,
                         capture_output=True, text=True)
    assert bad.returncode != 0 and "unknown backend" in bad.stderr
