"""Closed-form field constructors used by configs, tests and experiments.

Every constructor takes the grid first and keyword parameters after it, and
returns a :class:`ScalarField`. ``CONSTRUCTORS`` maps config names to them.
"""
from __future__ import annotations

import inspect
import math

import numpy as np

from .errors import ConfigError
from .grid import Grid, Region, ScalarField, sobolev_norm
from .stencils import flat_step


def _unit_axis(a_prime, dim: int) -> tuple[int, float]:
    a = np.asarray(a_prime, dtype=float).reshape(-1)
    if a.size != dim:
        raise ValueError(f"a_prime needs {dim} component(s)")
    k = int(np.argmax(np.abs(a)))
    if not math.isclose(abs(a[k]), 1.0, abs_tol=1e-12) or np.sum(np.abs(a)) > 1 + 1e-12:
        raise ValueError("only axis-aligned a_prime is supported by this constructor")
    return k, float(np.sign(a[k]))


def constant(grid: Grid, value: float = 1.0) -> ScalarField:
    return ScalarField(grid, np.full(grid.shape, float(value)))


def zero(grid: Grid) -> ScalarField:
    return constant(grid, 0.0)


def linear(grid: Grid, c0: float = 1.0, slope: float = 0.0, a_prime=(1.0,)) -> ScalarField:
    """``c0 + slope * (a' . x')``."""
    a = np.asarray(a_prime, float).reshape(-1)
    mesh = grid.mesh()
    v = c0 + slope * sum(ak * xk for ak, xk in zip(a, mesh[:-1]))
    return ScalarField(grid, np.broadcast_to(v, grid.shape))


def plateau(xn, half_width: float, edge: float):
    """Smooth axial plateau: 0.5 (tanh((x+a)/e) - tanh((x-a)/e))."""
    return 0.5 * (np.tanh((xn + half_width) / edge) - np.tanh((xn - half_width) / edge))


def wall_window(xi, width: float = 0.14):
    """Window on [0, 1] equal to 1 beyond ``width`` from both ends, vanishing to seventh order at them."""
    return flat_step(xi / width) * flat_step((1.0 - xi) / width)


def ramp_theta0(grid: Grid, width: float = 0.14, half_width: float = 10.0,
                edge: float = 1.5, amplitude: float = 1.0, a_prime=(1.0,)) -> ScalarField:
    """Initial displacement with slope -amplitude along a' away from the wall.

    Along the a' axis the profile is ``(1/2 - xi) * wall_window(xi)``; other
    cross axes get ``wall_window`` alone and the axial factor is
    :func:`plateau`. The field vanishes to seventh order at the lateral wall, so
    div(c grad) and its first powers applied to it have zero wall trace.
    """
    cs = grid.cross_section
    k, sgn = _unit_axis(a_prime, cs.dim)
    mesh = grid.mesh()
    v = amplitude * plateau(mesh[-1], half_width, edge)
    for q in range(cs.dim):
        xi = (mesh[q] - cs.lower[q]) / (cs.upper[q] - cs.lower[q])
        win = wall_window(xi, width)
        if q == k:
            v = v * (cs.upper[q] - cs.lower[q]) * sgn * (0.5 - xi) * win
        else:
            v = v * win
    return ScalarField(grid, np.broadcast_to(v, grid.shape))


def bump(grid: Grid, center=(0.5, 0.0), half_widths=(0.2, 1.0), amplitude: float = 1.0,
         power: int = 6) -> ScalarField:
    """Product of cos^power(pi r / 2) bumps, r the scaled offset (zero for |r| >= 1)."""
    mesh = grid.mesh()
    center = np.asarray(center, float).reshape(-1)
    hw = np.asarray(half_widths, float).reshape(-1)
    if center.size != grid.n or hw.size != grid.n:
        raise ValueError(f"center and half_widths need {grid.n} entries")
    v = amplitude
    for x, c0, w in zip(mesh, center, hw):
        r = (x - c0) / w
        v = v * np.where(np.abs(r) < 1.0, np.cos(0.5 * np.pi * r) ** power, 0.0)
    return ScalarField(grid, np.broadcast_to(v, grid.shape))


def eigenmode(grid: Grid, amplitude: float = 1.0) -> ScalarField:
    """Lowest Dirichlet mode of the Laplacian on the truncated box."""
    cs = grid.cross_section
    mesh = grid.mesh()
    v = amplitude * np.sin(np.pi * (mesh[-1] + grid.L_sim) / (2 * grid.L_sim))
    for q in range(cs.dim):
        v = v * np.sin(np.pi * (mesh[q] - cs.lower[q]) / (cs.upper[q] - cs.lower[q]))
    return ScalarField(grid, np.broadcast_to(v, grid.shape))


def eigenvalue(grid: Grid) -> float:
    cs = grid.cross_section
    lam = (np.pi / (2 * grid.L_sim)) ** 2
    for a, b in zip(cs.lower, cs.upper):
        lam += (np.pi / (b - a)) ** 2
    return float(lam)


def normalize_h1(field: ScalarField, half_length: float, target: float = 1.0) -> ScalarField:
    """Rescale so the H^1 norm over Omega_{half_length} equals ``target``."""
    nrm = sobolev_norm(field, 1, Region.cylinder(half_length))
    if nrm == 0:
        raise ValueError("cannot normalize a field that vanishes on the region")
    return field * (target / nrm)


CONSTRUCTORS = {
    "constant": constant,
    "zero": zero,
    "linear": linear,
    "ramp_theta0": ramp_theta0,
    "bump": bump,
    "eigenmode": eigenmode,
}


def constructor_params(name: str) -> list[str]:
    return [p for p in inspect.signature(CONSTRUCTORS[name]).parameters if p != "grid"]


def make_field(grid: Grid, name: str, **params) -> ScalarField:
    """Build a registered field; unknown names or parameters raise ConfigError."""
    if name not in CONSTRUCTORS:
        raise ConfigError(f"unknown field constructor {name!r}; accepted: {', '.join(sorted(CONSTRUCTORS))}")
    allowed = constructor_params(name)
    bad = sorted(set(params) - set(allowed))
    if bad:
        raise ConfigError(f"unknown parameter(s) {', '.join(bad)} for {name!r}; accepted: {', '.join(allowed)}")
    return CONSTRUCTORS[name](grid, **params)
