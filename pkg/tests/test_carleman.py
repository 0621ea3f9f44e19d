import math

import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from waveguide_carleman import profiles
from waveguide_carleman.carleman import (CarlemanParams, a2_on_weight, vertex_margin, carleman_grid,
                                         carleman_residual, carleman_residual_sweep, g_ell, j_lower_bound,
                                         j_quantity, log_weighted_sq_norm, phi, pseudoconvexity_margin, psi,
                                         random_test_functions, rho_s, select_params, time_trace_check,
                                         transport_weighted_check, weight_bounds_check)
from waveguide_carleman.errors import MembershipError, ParameterError, SamplingError, SelectionError
from waveguide_carleman.grid import CrossSection, SpaceTimeField, build_grid


def test_psi_and_phi():
    x = np.array([[0.5, 2.0]])
    assert psi(x, 1.0, 3.0)[0] == pytest.approx(2.5 ** 2 - 4.0 - 1.0)
    assert phi(x, 1.0, 3.0, 0.1)[0] == pytest.approx(math.exp(0.1 * 1.25))
    with pytest.raises(ParameterError):
        phi(x, 0.0, 3.0, 0.0)


@settings(max_examples=30, deadline=None)
@given(delta=st.floats(1.5, 200.0), ell=st.floats(0.1, 5.0))
def test_g_ell_on_unit_interval(delta, ell):
    cs = CrossSection.interval(0.0, 1.0)
    assert g_ell(delta, cs, ell) == pytest.approx(math.sqrt(2 * delta - 1 + ell ** 2), rel=1e-12)


def test_selection_golden(unit_interval):
    sel = select_params(unit_interval, 1.0, (1.0,), 8.0, 0.25, 1.0, nu=0.1)
    p = sel.params
    assert p.delta == 11.0
    assert p.L == p.T == pytest.approx(math.sqrt(22.0) + 0.1, abs=1e-15)
    assert sel.floor > 0 and sel.vertex > 0 and sel.floor_LT > 0
    # one rung below fails the strengthened vertex-distance inequality
    assert vertex_margin(10.0, unit_interval, 1.0, (1.0,), 0.25, 0.1) < 0
    assert p.beta >= (1 - 0.25) / 0.25 and p.d_tilde < p.d


def test_selection_failures(unit_interval):
    with pytest.raises(SelectionError, match="binding inequality"):
        select_params(unit_interval, 1.0, (1.0,), 8.0, 0.25, 1.0, delta_max=5.0)
    with pytest.raises(SelectionError, match="unit"):
        select_params(unit_interval, 1.0, (0.5,), 8.0, 0.25, 1.0)
    with pytest.raises(SelectionError):
        select_params(unit_interval, 1.0, (1.0,), 0.0, 0.25, 1.0)


def test_params_invariants(unit_interval):
    with pytest.raises(ParameterError, match="eps"):
        CarlemanParams(unit_interval, (1.0,), 1.0, 11.0, 0.02, 0.1, 5.0, 0.25)
    with pytest.raises(ParameterError, match="beta"):
        CarlemanParams(unit_interval, (1.0,), 1.0, 1.5, 0.02, 0.1, 0.1, 0.25)


def test_weight_bounds_minimizer(reference_params):
    m = weight_bounds_check(reference_params, 201)
    assert m.inner_floor == 0.0 and m.time_slab > 0 and m.axial_slab > 0
    assert m.inner_minimizer == (1.0, -1.0)


def _bracket_oracle():
    """Hoermander bracket of p = c(x)|xi|^2 - xi_t^2 with psi, built symbolically."""
    x1, xn, t, d = sp.symbols("x1 xn t delta", real=True)
    k1, kn, kt = sp.symbols("k1 kn kt", real=True)
    c = sp.Function("c")(x1, xn)
    X, K = [x1, xn, t], [k1, kn, kt]
    p = c * (k1 ** 2 + kn ** 2) - kt ** 2
    ps = (x1 - d) ** 2 - xn ** 2 - t ** 2
    J = sum(sp.diff(ps, X[j], X[k]) * sp.diff(p, K[j]) * sp.diff(p, K[k]) for j in range(3) for k in range(3))
    J += sum((sp.diff(p, K[k]) * sp.diff(p, K[j], X[k]) - sp.diff(p, X[k]) * sp.diff(p, K[j], K[k]))
             * sp.diff(ps, X[j]) for j in range(3) for k in range(3))
    a0, a1, a2 = sp.symbols("a0 a1 a2")
    lin = a0 + a1 * x1 + a2 * xn  # J only sees c and grad c at a point
    Jl = sp.simplify(J.subs(c, lin).doit())
    return sp.lambdify((x1, xn, t, d, k1, kn, kt, a0, a1, a2), Jl, "numpy")


def test_j_quantity_matches_symbolic_bracket():
    f = _bracket_oracle()
    rng = np.random.default_rng(3)
    for _ in range(20):
        x1, xn, t = rng.uniform(-2, 2, 3)
        d = rng.uniform(5, 20)
        k = rng.normal(size=3)
        a0, a1, a2 = rng.uniform(0.5, 2), rng.normal(), rng.normal()
        cval = a0 + a1 * x1 + a2 * xn
        mine = j_quantity(np.array([cval]), np.array([[a1, a2]]), np.array([[x1 - d]]), np.array([xn]),
                          np.array([k[:2]]), np.array([k[2]]))[0]
        assert mine == pytest.approx(f(x1, xn, t, d, *k, a0, a1, a2), rel=1e-10, abs=1e-10)


def test_a2_formula():
    assert a2_on_weight(2.0, np.array([3.0]), 1.0, 2.0) == pytest.approx(4 * (2 * 10 - 4))


def test_constant_conductivity_bound_is_negative(reference_params):
    c = np.full(4, 1.3)
    b = j_lower_bound(c, np.zeros((4, 2)), np.ones((4, 2)), 75.0, (1.0,), 12.0, np.ones(4))
    assert np.allclose(b, -4 * (2 * 1.3 + 2))


def test_pseudoconvexity_reference(reference_params, unit_interval):
    g = carleman_grid(reference_params, (0.05, 0.1), 0.1)
    res = pseudoconvexity_margin(profiles.linear(g, 0.95, 2.0), reference_params, n_x=100, n_xi=200)
    assert res.min_A2 > 0 and res.min_J > 0 and res.bound_holds and res.n_samples > 1000
    flat = pseudoconvexity_margin(profiles.constant(g, 1.5), reference_params, n_x=50, n_xi=64)
    assert flat.min_bound < 0


def test_pseudoconvexity_band_mode_and_empty_sample(reference_params):
    g = carleman_grid(reference_params, (0.1, 0.5), 0.5)
    c = profiles.linear(g, 0.95, 2.0)
    res = pseudoconvexity_margin(c, reference_params, n_x=64, n_xi=64, mode="band", tol=1e-2)
    assert res.bound_holds
    with pytest.raises(SamplingError):
        pseudoconvexity_margin(c, reference_params, n_x=8, n_xi=8, mode="band", tol=1e-15)
    with pytest.raises(ParameterError):
        pseudoconvexity_margin(c, reference_params, n_x=2)


def test_log_weighted_norm_is_overflow_safe():
    f2 = np.ones(5)
    w = np.full(5, 0.25)
    assert log_weighted_sq_norm(f2, np.full(5, 2000.0), w) == pytest.approx(2000.0 + math.log(1.25))
    assert log_weighted_sq_norm(np.zeros(5), np.zeros(5), w) == -math.inf
    small = log_weighted_sq_norm(np.arange(5.0), np.linspace(0, 1, 5), w)
    assert small == pytest.approx(math.log(np.sum(w * np.arange(5.0) * np.exp(np.linspace(0, 1, 5)))))


def test_residual_requires_test_space(reference_params):
    g = carleman_grid(reference_params, (0.1, 0.5), 0.5)
    c = profiles.linear(g, 0.95, 2.0)
    ones = SpaceTimeField(g, np.ones((g.n_symmetric_levels,) + g.shape), g.symmetric_times)
    with pytest.raises(MembershipError):
        carleman_residual(ones, c, reference_params, 10.0)
    zero = SpaceTimeField(g, np.zeros((g.n_symmetric_levels,) + g.shape), g.symmetric_times)
    assert carleman_residual(zero, c, reference_params, 10.0).ratio == 0.0
    with pytest.raises(ParameterError):
        carleman_residual(zero, c, reference_params)


def test_residual_on_random_bumps_is_finite(reference_params):
    g = carleman_grid(reference_params, (0.1, 0.2), 0.2)
    c = profiles.linear(g, 0.95, 2.0)
    v = random_test_functions(reference_params, g, 2, seed=1)
    for f in v:
        rows = carleman_residual_sweep(f, c, reference_params, [50.0, 500.0, 1e5])
        assert all(np.isfinite(r.ratio) and r.ratio > 0 for r in rows)
        assert rows[-1].lhs == math.inf or np.isfinite(rows[-1].lhs)


def test_transport_support_check(reference_params, unit_interval):
    g = build_grid(unit_interval, 14.0, 1.0, (0.02, 0.1), 0.1)
    th = profiles.ramp_theta0(g, half_width=20.0)
    inside = profiles.bump(g, (0.5, 0.0), (0.3, 4.0))
    assert transport_weighted_check(inside, th, 100.0, reference_params, 0.3) > 0
    outside = profiles.bump(g, (0.2, 0.0), (0.15, 4.0))
    with pytest.raises(MembershipError):
        transport_weighted_check(outside, th, 100.0, reference_params, 0.3)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10 ** 6), scale=st.floats(1.0, 1e3))
def test_time_trace_inequality(seed, scale):
    g = build_grid(CrossSection.interval(0.0, 1.0), 1.0, 2.0, 0.25, 0.02)
    rng = np.random.default_rng(seed)
    t = g.symmetric_times
    prof = sum(rng.normal() * np.cos(k * np.pi * t / 2.0 + rng.uniform(0, 6)) for k in range(5))
    z = SpaceTimeField(g, prof[:, None, None] * rng.normal(size=g.shape)[None], t)
    s = scale / (2 * g.T)
    lhs, rhs = time_trace_check(z, s)
    assert lhs <= rhs


def test_rho_limits(reference_params):
    x = np.array([1.0, -1.0])
    assert rho_s(x, 0.0, reference_params) == 2 * reference_params.T
    vals = [rho_s(x, s, reference_params) for s in (1.0, 1e2, 1e4, 1e6)]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    # Laplace asymptotics: int exp(-k gamma t^2) dt = sqrt(pi / (k gamma))
    k = 2 * 1e6 * math.exp(reference_params.gamma * psi(x, 0.0, reference_params.delta))
    assert vals[-1] == pytest.approx(math.sqrt(math.pi / (k * reference_params.gamma)), rel=1e-3)
    with pytest.raises(ParameterError):
        rho_s(x, -1.0, reference_params)
