import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waveguide_carleman.errors import CFLError, GridError, GridMismatchError, RegionError
from waveguide_carleman.grid import (CrossSection, Grid, Region, ScalarField, SpaceTimeField, build_grid, fit_grid,
                                     integrate, sobolev_norm, trapezoid_weights)


def test_cross_section_geometry():
    cs = CrossSection.rectangle((0.0, 2.0), (-1.0, 1.0))
    assert cs.kind == "rectangle" and cs.dim == 2 and cs.n == 3
    assert cs.radius == pytest.approx(math.sqrt(5.0))
    assert cs.min_sq_dist((3.0, 0.0)) == pytest.approx(1.0)
    assert cs.max_sq_dist((3.0, 0.0)) == pytest.approx(10.0)
    assert cs.wall_distance(np.array([0.5]), np.array([0.9]))[0] == pytest.approx(0.1)


@pytest.mark.parametrize("lo, hi", [((1.0,), (0.0,)), ((0.0,), (0.0,)), ((0.0, 0.0), (1.0,)), ((0.0,), (math.inf,))])
def test_cross_section_rejects_bad_bounds(lo, hi):
    with pytest.raises(GridError):
        CrossSection(lo, hi)


def test_grid_shape_and_axes(unit_interval):
    g = build_grid(unit_interval, 2.0, 1.0, (0.1, 0.5), 0.05)
    assert g.shape == (11, 9) and g.nt == 21
    assert g.axes[-1][0] == -2.0 and g.axes[-1][-1] == 2.0
    assert g.symmetric_times.size == 2 * g.nt - 1 == g.n_symmetric_levels
    assert np.array_equal(g.axial_indices(0.5), [3, 4, 5])


def test_grid_requires_tiling_steps(unit_interval):
    with pytest.raises(GridError, match="does not tile"):
        build_grid(unit_interval, 2.0, 1.0, 0.3, 0.05)
    with pytest.raises(GridError, match="nonpositive"):
        build_grid(unit_interval, 2.0, 1.0, 0.1, 0.0)
    with pytest.raises(GridError, match="zero interior"):
        build_grid(unit_interval, 2.0, 1.0, (1.0, 0.1), 0.05)


def test_cfl_and_truncation_checks(unit_interval):
    g = build_grid(unit_interval, 2.0, 1.0, 0.1, 0.05)
    g.check_cfl(1.0)
    with pytest.raises(CFLError):
        g.check_cfl(4.0)
    with pytest.raises(GridError, match="finite-speed"):
        g.check_truncation(1.5, 1.0)


def test_fit_grid_respects_cfl_and_length(unit_interval):
    g = fit_grid(unit_interval, (0.01, 0.05), 3.3, 7.01, 3.2, 0.9)
    assert g.L_sim >= 7.01 and g.dt <= 0.9 * g.cfl_limit(3.2) * (1 + 1e-12)
    assert g.times[-1] == pytest.approx(3.3)


def test_refined_grid_halves_steps(unit_interval):
    g = build_grid(unit_interval, 1.0, 1.0, 0.1, 0.05).refined()
    assert g.spacing == (0.05, 0.05) and g.dt == 0.025


def test_field_arithmetic_and_mismatch(unit_interval):
    g = build_grid(unit_interval, 1.0, 1.0, 0.1, 0.05)
    f = ScalarField.from_function(g, lambda x, xn: x + xn)
    assert np.allclose((f + f - f * 2).values, 0.0)
    other = build_grid(unit_interval, 1.0, 1.0, 0.05, 0.05)
    with pytest.raises(GridMismatchError):
        f + ScalarField(other, np.zeros(other.shape))
    with pytest.raises(GridError):
        ScalarField(g, np.full(g.shape, np.nan))


def test_space_time_field_level(unit_interval):
    g = build_grid(unit_interval, 1.0, 1.0, 0.1, 0.25)
    f = SpaceTimeField.from_function(g, lambda t, x, xn: t + 0 * x * xn)
    assert np.allclose(f.level(0.0), 0.0)
    with pytest.raises(GridError):
        f.level(0.1)


def test_sobolev_norms_match_closed_forms(unit_interval):
    # u = sin(pi x) cos(pi xn / 2) on (0,1) x (-1,1)
    g = build_grid(unit_interval, 1.0, 1.0, 0.0025, 0.5)
    u = ScalarField.from_function(g, lambda x, xn: np.sin(np.pi * x) * np.cos(0.5 * np.pi * xn))
    l2 = math.sqrt(0.5)
    h1 = math.sqrt(0.5 + 0.5 * np.pi ** 2 + 0.5 * np.pi ** 2 / 4)
    assert sobolev_norm(u, 0) == pytest.approx(l2, rel=1e-5)
    assert sobolev_norm(u, 1) == pytest.approx(h1, rel=1e-4)
    half = sobolev_norm(u, 0, Region.cylinder(0.5))
    exact = math.sqrt(0.5 * (0.5 + 1 / np.pi))
    assert half == pytest.approx(exact, rel=1e-5)


def test_empty_region_raises(unit_interval):
    g = build_grid(unit_interval, 1.0, 1.0, 0.1, 0.5)
    with pytest.raises(RegionError):
        sobolev_norm(ScalarField(g, np.ones(g.shape)), 0, Region.cylinder(0.01))


@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 40), h=st.floats(0.01, 2.0), a=st.floats(-3, 3), b=st.floats(-3, 3))
def test_trapezoid_integrates_affine_exactly(n, h, a, b):
    x = np.arange(n) * h
    assert integrate(a + b * x, [trapezoid_weights(n, h)]) == pytest.approx(a * x[-1] + 0.5 * b * x[-1] ** 2,
                                                                            rel=1e-9, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(k=st.floats(-5, 5))
def test_sobolev_norm_is_homogeneous(k):
    g = Grid(CrossSection.interval(0.0, 1.0), 1.0, 1.0, (0.1, 0.1), 0.5)
    f = ScalarField.from_function(g, lambda x, xn: np.sin(3 * x) + xn ** 2)
    assert sobolev_norm(f * k, 1) == pytest.approx(abs(k) * sobolev_norm(f, 1), rel=1e-12, abs=1e-12)
