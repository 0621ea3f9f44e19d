"""Truncated waveguide geometry, uniform grids, nodal fields and discrete norms.

Spatial arrays are indexed ``[x_1, ..., x_{n-1}, x_n]``: the cross-section axes
come first and the axial coordinate is last. Space-time arrays prepend the time
axis.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Sequence

import numpy as np

from .errors import CFLError, GridError, GridMismatchError, RegionError

TILE_TOL = 1e-9
_COORD_TOL = 1e-9


@dataclass(frozen=True)
class CrossSection:
    """Axis-aligned box ``omega``: an interval (n=2) or a rectangle (n=3)."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lower))
        hi = tuple(float(v) for v in np.atleast_1d(self.upper))
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise GridError("cross-section needs one or two axes with matching bounds")
        for a, b in zip(lo, hi):
            if not (math.isfinite(a) and math.isfinite(b)):
                raise GridError("cross-section bounds must be finite")
            if not a < b:
                raise GridError(f"cross-section lower bound {a} must be below upper bound {b}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def interval(cls, a: float, b: float) -> "CrossSection":
        return cls((a,), (b,))

    @classmethod
    def rectangle(cls, ab1, ab2) -> "CrossSection":
        return cls((ab1[0], ab2[0]), (ab1[1], ab2[1]))

    @property
    def kind(self) -> str:
        return "interval" if len(self.lower) == 1 else "rectangle"

    @property
    def dim(self) -> int:
        """Number of cross-section axes (n - 1)."""
        return len(self.lower)

    @property
    def n(self) -> int:
        return self.dim + 1

    def corners(self) -> np.ndarray:
        return np.array(list(itertools.product(*zip(self.lower, self.upper))), dtype=float)

    @property
    def radius(self) -> float:
        """sup |x'| over the closure, attained at a corner."""
        return float(np.max(np.linalg.norm(self.corners(), axis=1)))

    def clip(self, point) -> np.ndarray:
        """Nearest point of the closed box."""
        return np.clip(np.asarray(point, float), self.lower, self.upper)

    def min_sq_dist(self, point) -> float:
        p = np.asarray(point, float)
        return float(np.sum((self.clip(p) - p) ** 2))

    def max_sq_dist(self, point) -> float:
        p = np.asarray(point, float)
        return float(np.max(np.sum((self.corners() - p) ** 2, axis=1)))

    def wall_distance(self, *coords):
        """Distance to the box boundary for interior points (broadcasting)."""
        d = None
        for x, a, b in zip(coords, self.lower, self.upper):
            dk = np.minimum(np.asarray(x) - a, b - np.asarray(x))
            d = dk if d is None else np.minimum(d, dk)
        return d


def _count(extent: float, step: float, what: str) -> int:
    if not step > 0:
        raise GridError(f"nonpositive step for {what}: {step}")
    r = extent / step
    k = round(r)
    if abs(r - k) > TILE_TOL * max(1.0, r):
        raise GridError(f"step {step} does not tile extent {extent} of {what}")
    return int(k) + 1


@dataclass(frozen=True, eq=False)
class Grid:
    """Uniform tensor grid on ``omega x [-L_sim, L_sim]`` with time axis [0, T]."""

    cross_section: CrossSection
    L_sim: float
    T: float
    spacing: tuple
    dt: float

    def __post_init__(self):
        if len(self.spacing) != self.cross_section.n:
            raise GridError("spacing needs one entry per spatial axis")
        object.__setattr__(self, "spacing", tuple(float(h) for h in self.spacing))
        counts = []
        for k, (a, b) in enumerate(zip(self.cross_section.lower, self.cross_section.upper)):
            counts.append(_count(b - a, self.spacing[k], f"cross axis {k + 1}"))
        if not self.L_sim > 0:
            raise GridError("L_sim must be positive")
        counts.append(_count(2 * self.L_sim, self.spacing[-1], "axial axis"))
        if not self.T > 0:
            raise GridError("T must be positive")
        nt = _count(self.T, self.dt, "time axis")
        if min(counts) < 3 or nt < 3:
            raise GridError("zero interior nodes: every axis needs at least 3 nodes")
        object.__setattr__(self, "shape", tuple(counts))
        object.__setattr__(self, "nt", nt)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (self.cross_section == other.cross_section and self.shape == other.shape
                and self.nt == other.nt
                and np.allclose(self.spacing, other.spacing, rtol=1e-12, atol=0)
                and math.isclose(self.L_sim, other.L_sim, rel_tol=1e-12)
                and math.isclose(self.dt, other.dt, rel_tol=1e-12))

    __hash__ = object.__hash__

    @property
    def n(self) -> int:
        return self.cross_section.n

    @cached_property
    def axes(self) -> tuple:
        out = [np.linspace(a, b, m) for a, b, m in
               zip(self.cross_section.lower, self.cross_section.upper, self.shape[:-1])]
        out.append(np.linspace(-self.L_sim, self.L_sim, self.shape[-1]))
        return tuple(out)

    @cached_property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.nt)

    @cached_property
    def symmetric_times(self) -> np.ndarray:
        return np.linspace(-self.T, self.T, 2 * self.nt - 1)

    @property
    def n_symmetric_levels(self) -> int:
        return 2 * self.nt - 1

    @property
    def h_min(self) -> float:
        return min(self.spacing)

    def mesh(self) -> tuple:
        """Broadcastable (sparse) coordinate arrays."""
        return tuple(np.meshgrid(*self.axes, indexing="ij", sparse=True))

    def cfl_limit(self, c_M: float) -> float:
        return self.h_min / (math.sqrt(self.n) * math.sqrt(c_M))

    def check_cfl(self, c_M: float) -> None:
        lim = self.cfl_limit(c_M)
        if self.dt > lim * (1 + 1e-12):
            raise CFLError(f"CFL violation: dt={self.dt:.6g} exceeds h_min/(sqrt(n) sqrt(c_M))={lim:.6g}")

    def check_truncation(self, L: float, c_M: float) -> None:
        need = L + self.T * math.sqrt(c_M)
        if self.L_sim < need * (1 - 1e-12):
            raise GridError(f"L_sim={self.L_sim:.6g} below finite-speed bound L + T sqrt(c_M)={need:.6g}")

    def refined(self, factor: int = 2) -> "Grid":
        return Grid(self.cross_section, self.L_sim, self.T,
                    tuple(h / factor for h in self.spacing), self.dt / factor)

    def axial_indices(self, half_length: float) -> np.ndarray:
        """Indices of axial nodes with |x_n| <= half_length."""
        xn = self.axes[-1]
        return np.nonzero(np.abs(xn) <= half_length + _COORD_TOL * max(1.0, half_length))[0]


def build_grid(cross_section: CrossSection, L_sim: float, T: float, h, dt: float) -> Grid:
    """Build a grid; ``h`` is one step for all axes or a per-axis sequence."""
    if not dt > 0:
        raise GridError(f"nonpositive step: dt={dt}")
    hs = np.atleast_1d(np.asarray(h, dtype=float))
    if hs.size == 1:
        hs = np.repeat(hs, cross_section.n)
    if np.any(hs <= 0):
        raise GridError(f"nonpositive step: h={tuple(hs)}")
    return Grid(cross_section, float(L_sim), float(T), tuple(hs), float(dt))


def fit_grid(cross_section: CrossSection, h, T: float, L_sim_min: float, c_M: float,
             cfl_fraction: float = 0.9) -> Grid:
    """Smallest tiled grid with L_sim >= L_sim_min and a CFL-safe dt dividing T."""
    hs = np.atleast_1d(np.asarray(h, dtype=float))
    if hs.size == 1:
        hs = np.repeat(hs, cross_section.n)
    hn = hs[-1]
    L_sim = math.ceil(L_sim_min / hn - 1e-9) * hn
    dt_max = cfl_fraction * float(hs.min()) / (math.sqrt(cross_section.n) * math.sqrt(c_M))
    dt = T / math.ceil(T / dt_max)
    return build_grid(cross_section, L_sim, T, hs, dt)


@dataclass(frozen=True)
class Region:
    """Box selector: ``None`` on an axis means the whole axis.

    ``cross`` holds (lo, hi) per cross axis, ``axial`` bounds x_n and ``time``
    bounds t. Bounds snap inward to grid nodes.
    """

    cross: tuple | None = None
    axial: tuple | None = None
    time: tuple | None = None

    @classmethod
    def cylinder(cls, d: float, time=None) -> "Region":
        """Omega_d (or Q_d when ``time`` is given)."""
        return cls(axial=(-d, d), time=time)


def _axis_slice(coord: np.ndarray, bounds) -> slice:
    if bounds is None:
        return slice(0, len(coord))
    lo, hi = bounds
    tol = _COORD_TOL * max(1.0, abs(lo), abs(hi))
    idx = np.nonzero((coord >= lo - tol) & (coord <= hi + tol))[0]
    if idx.size < 2:
        raise RegionError(f"empty region: bounds {bounds} select {idx.size} node(s)")
    return slice(int(idx[0]), int(idx[-1]) + 1)


def trapezoid_weights(n: int, h: float) -> np.ndarray:
    w = np.full(n, h, dtype=float)
    w[0] = w[-1] = 0.5 * h
    return w


def integrate(a: np.ndarray, weights: Sequence[np.ndarray]) -> float:
    """Tensor-product quadrature of ``a`` with per-axis weight vectors."""
    r = np.asarray(a, dtype=float)
    for w in reversed(weights):
        r = r @ w
    return float(r)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Nodal values of a space-only function."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape != self.grid.shape:
            raise GridMismatchError(f"value array shape {v.shape} does not match grid {self.grid.shape}")
        if not np.all(np.isfinite(v)):
            raise GridError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: Grid, f: Callable) -> "ScalarField":
        return cls(grid, np.broadcast_to(f(*grid.mesh()), grid.shape))

    def with_values(self, values) -> "ScalarField":
        return ScalarField(self.grid, values)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other, self.grid))

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other, self.grid))

    def __mul__(self, k: float):
        return self.with_values(self.values * float(k))

    __rmul__ = __mul__


def _vals(other, grid):
    if isinstance(other, ScalarField):
        if other.grid != grid:
            raise GridMismatchError("fields live on different grids")
        return other.values
    return other


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Nodal values on a uniform time axis times the spatial grid."""

    grid: Grid
    values: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        t = np.array(self.times, dtype=float)
        if v.shape[1:] != self.grid.shape or v.shape[0] != t.size:
            raise GridMismatchError(f"value array shape {v.shape} does not match {t.size} x {self.grid.shape}")
        if t.size < 2 or not np.allclose(np.diff(t), t[1] - t[0], rtol=1e-9, atol=1e-12):
            raise GridError("time axis must be uniform with at least two levels")
        if not np.all(np.isfinite(v)):
            raise GridError("field contains non-finite values")
        v.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "times", t)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @classmethod
    def from_function(cls, grid: Grid, f: Callable, times=None) -> "SpaceTimeField":
        t = grid.symmetric_times if times is None else np.asarray(times, float)
        shape = (t.size,) + grid.shape
        tt = t.reshape((-1,) + (1,) * grid.n)
        return cls(grid, np.broadcast_to(f(tt, *grid.mesh()), shape), t)

    def level(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise GridError(f"no time level at t={t}")
        return self.values[k]


def _coords_and_steps(field):
    g = field.grid
    if isinstance(field, SpaceTimeField):
        return (field.times,) + g.axes, (field.dt,) + g.spacing
    return g.axes, g.spacing


def region_slices(field, region: Region | None) -> tuple:
    coords, _ = _coords_and_steps(field)
    region = region or Region()
    bounds = list(region.cross) if region.cross is not None else [None] * field.grid.cross_section.dim
    bounds.append(region.axial)
    if isinstance(field, SpaceTimeField):
        bounds = [region.time] + bounds
    return tuple(_axis_slice(x, b) for x, b in zip(coords, bounds))


def sobolev_norm(field, order: int = 0, region: Region | None = None) -> float:
    """Discrete H^0 or H^1 norm over a box region (trapezoid quadrature).

    For space-time fields the gradient includes the time derivative.
    """
    if order not in (0, 1):
        raise ValueError("order must be 0 or 1")
    coords, steps = _coords_and_steps(field)
    sl = region_slices(field, region)
    v = field.values
    w = [trapezoid_weights(s.stop - s.start, h) for s, h in zip(sl, steps)]
    total = integrate(v[sl] ** 2, w)
    if order == 1:
        for ax, h in enumerate(steps):
            d = np.gradient(v, h, axis=ax, edge_order=2)
            total += integrate(d[sl] ** 2, w)
    return math.sqrt(total)
