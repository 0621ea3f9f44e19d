import numpy as np
import pytest

from waveguide_carleman import profiles
from waveguide_carleman.admissibility import (AdmissibilityParams, check_conductivity, check_initial,
                                              h_surrogate, partial_derivatives, w_inf_surrogate)
from waveguide_carleman.errors import GridMismatchError, ParameterError
from waveguide_carleman.grid import ScalarField, build_grid


@pytest.fixture(scope="module")
def grid(unit_interval):
    return build_grid(unit_interval, 4.0, 1.0, (0.01, 0.05), 0.01)


@pytest.fixture(scope="module")
def adm():
    return AdmissibilityParams(0.9, 3.2, 1.8, (1.0,), 1e12, 0.5, 0.3)


def test_params_validation():
    with pytest.raises(ParameterError, match="c_m"):
        AdmissibilityParams(1.5, 3.2, 1.8, (1.0,), 1.0, 1.0, 0.1)
    with pytest.raises(ParameterError, match="unit"):
        AdmissibilityParams(0.5, 3.2, 1.8, (2.0,), 1.0, 1.0, 0.1)
    with pytest.raises(ParameterError, match="collar_width"):
        AdmissibilityParams(0.5, 3.2, 1.8, (1.0,), 1.0, 1.0, 0.0)


def test_linear_conductivity_passes(grid, adm):
    c = profiles.linear(grid, 0.95, 2.0)
    rep = check_conductivity(c, c, adm)
    assert rep.passed, rep.failures()
    assert rep["directional_slope"].margin == pytest.approx(0.2, abs=1e-9)
    assert rep["ellipticity"].margin == pytest.approx(0.05)


def test_failures_carry_witnesses(grid, adm):
    c = profiles.linear(grid, 0.5, 1.0)
    rep = check_conductivity(c, c, adm)
    names = {k.name for k in rep.failures()}
    assert {"ellipticity", "directional_slope"} <= names
    w = rep["ellipticity"].witness
    assert w["index"][0] == 0 and w["x"][0] == 0.0


def test_collar_mismatch_detected(grid, adm):
    c = profiles.linear(grid, 0.95, 2.0)
    rep = check_conductivity(c, c + 0.01, adm)
    assert not rep["collar_match"].passed
    assert rep["collar_match"].margin == pytest.approx(-0.01)


def test_w4inf_ceiling(grid, adm):
    c = profiles.linear(grid, 0.95, 3.0)  # sup c = 3.95 > c_M
    assert not check_conductivity(c, c, adm)["w4inf_ceiling"].passed


def test_grid_mismatch(grid, adm, unit_interval):
    other = build_grid(unit_interval, 4.0, 1.0, 0.05, 0.01)
    with pytest.raises(GridMismatchError):
        check_conductivity(profiles.constant(grid, 1.0), profiles.constant(other, 1.0), adm)


def test_initial_checks(grid, adm):
    th = profiles.ramp_theta0(grid, half_width=2.5, edge=0.5, amplitude=1.0)
    rep = check_initial(th, profiles.zero(grid), adm, L=1.0, delta=75.0)
    assert rep.passed, rep.failures()
    floor = float(profiles.plateau(1.0, 2.5, 0.5))  # plateau minimum on |x_n| <= 1
    assert rep["initial_slope"].margin == pytest.approx(floor - 0.5, rel=1e-9)
    assert rep["mu0_empirical"].informational
    bad = check_initial(th, profiles.constant(grid, 1e-3), adm, L=1.0)
    assert not bad["theta1_zero"].passed
    flipped = check_initial(th * -1.0, profiles.zero(grid), adm, L=1.0)
    assert not flipped["initial_slope"].passed


def test_dirichlet_trace_violation(grid, adm):
    th = profiles.linear(grid, 0.5, -1.0)
    assert not check_initial(th, profiles.zero(grid), adm)["dirichlet_trace"].passed


def test_surrogates_on_polynomial(unit_interval):
    g = build_grid(unit_interval, 1.0, 1.0, 0.05, 0.1)
    f = ScalarField.from_function(g, lambda x, xn: x ** 2 * xn)
    d = partial_derivatives(f.values, g.spacing, 3)
    assert np.allclose(d[(0, 0, 1)], 2.0)
    assert np.allclose(d[(0, 1)], 2 * g.mesh()[0] + 0 * g.mesh()[1])
    val, alpha, _ = w_inf_surrogate(f, 2)
    assert val == pytest.approx(2.0) and len(alpha) == 2
    assert h_surrogate(profiles.zero(g), 4) == 0.0
