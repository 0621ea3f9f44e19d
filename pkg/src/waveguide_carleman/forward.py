"""Leapfrog solver for u_tt = div(c grad u) with homogeneous Dirichlet walls.

The spatial operator is the flux form with arithmetic face averages of c. The
observation recorded on the lateral wall is the outward normal derivative of
u (the value trace vanishes identically under the Dirichlet condition),
sampled at every time level for |x_n| <= L_obs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .admissibility import AdmissibilityReport
from .errors import AdmissibilityError, GridError, GridMismatchError, SolverError
from .grid import Grid, ScalarField, SpaceTimeField, trapezoid_weights
from .stencils import derivative

WALLS = ("lower", "upper")
MIN_TIME_LEVELS = 5


def wall_probe(grid: Grid) -> np.ndarray:
    """Weights over cross-axis rows giving the outward normal derivative.

    One-sided second-order stencils at both walls of cross axis 1; the wall
    value is zero and drops out.
    """
    if grid.n != 2:
        raise NotImplementedError("wall observations are implemented for one cross-section axis")
    m = grid.shape[0]
    h = grid.spacing[0]
    P = np.zeros((2, m))
    # lower wall: outward normal is -e_1
    P[0, :3] = -np.array([-3.0, 4.0, -1.0]) / (2 * h)
    P[1, -3:] = np.array([1.0, -4.0, 3.0]) / (2 * h)
    return P


@dataclass(frozen=True, eq=False)
class ObservationTrace:
    """Normal-derivative trace on both walls for |x_n| <= L over [0, T].

    ``data`` has shape (2, n_t, n_x): wall, time level, axial node.
    """

    times: np.ndarray
    xn: np.ndarray
    data: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.data, float)
        if d.shape != (2, np.size(self.times), np.size(self.xn)):
            raise GridMismatchError("trace data must have shape (2, n_t, n_x)")
        if not np.all(np.isfinite(d)):
            raise SolverError("trace contains non-finite values")
        object.__setattr__(self, "data", d)
        object.__setattr__(self, "times", np.asarray(self.times, float))
        object.__setattr__(self, "xn", np.asarray(self.xn, float))

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    @property
    def hn(self) -> float:
        return float(self.xn[1] - self.xn[0])

    def _compatible(self, other: "ObservationTrace"):
        if self.data.shape != other.data.shape or not (
                np.allclose(self.times, other.times) and np.allclose(self.xn, other.xn)):
            raise GridMismatchError("traces sampled on different windows")

    def __sub__(self, other: "ObservationTrace") -> "ObservationTrace":
        self._compatible(other)
        return ObservationTrace(self.times, self.xn, self.data - other.data)

    def __mul__(self, k: float) -> "ObservationTrace":
        return ObservationTrace(self.times, self.xn, self.data * float(k))

    __rmul__ = __mul__

    def restrict(self, L: float) -> "ObservationTrace":
        keep = np.abs(self.xn) <= L + 1e-9 * max(1.0, L)
        return ObservationTrace(self.times, self.xn[keep], self.data[:, :, keep])

    def time_derivatives(self, max_order: int = 4) -> list[np.ndarray]:
        """[g, g_t, ..., d^k g/dt^k] on [0, T] via the even extension in t."""
        if self.times.size < MIN_TIME_LEVELS or self.xn.size < 3:
            raise GridError(f"trace too short for stencils: need >= {MIN_TIME_LEVELS} time levels "
                            f"and >= 3 axial nodes, got {self.times.size} and {self.xn.size}")
        ext = np.concatenate([self.data[:, :0:-1], self.data], axis=1)
        nt = self.times.size
        return [derivative(ext, self.dt, k, axis=1)[:, nt - 1:] for k in range(max_order + 1)]

    def tangential(self, a: np.ndarray) -> np.ndarray:
        return np.gradient(a, self.hn, axis=-1, edge_order=2)

    def rows(self):
        """(t, wall-id, x_n, value) rows in a fixed order."""
        for w, name in enumerate(WALLS):
            for k, t in enumerate(self.times):
                for j, x in enumerate(self.xn):
                    yield (float(t), name, float(x), float(self.data[w, k, j]))


def observation_norm(trace: ObservationTrace, L: float | None = None) -> float:
    """sqrt(||g||^2_{H^4(0,T; L^2)} + ||g||^2_{H^3(0,T; H^1)}) over both walls."""
    tr = trace if L is None else trace.restrict(L)
    ders = tr.time_derivatives(4)
    wt = trapezoid_weights(tr.times.size, tr.dt)
    wx = trapezoid_weights(tr.xn.size, tr.hn)

    def q(a):
        return float(np.einsum("wtx,t,x->", a * a, wt, wx))

    total = sum(q(d) for d in ders)
    total += sum(q(d) + q(tr.tangential(d)) for d in ders[:4])
    return math.sqrt(total)


@dataclass(frozen=True, eq=False)
class WaveSolution:
    grid: Grid
    c: ScalarField
    theta0: ScalarField
    theta1: ScalarField
    energy: np.ndarray
    trace: ObservationTrace | None
    kept: dict = field(default_factory=dict)

    @property
    def energy_times(self) -> np.ndarray:
        return 0.5 * (self.grid.times[1:] + self.grid.times[:-1])

    @property
    def energy_drift(self) -> float:
        e0 = self.energy[0]
        if e0 == 0:
            return float(np.max(np.abs(self.energy)))
        return float(np.max(np.abs(self.energy - e0)) / abs(e0))

    def level(self, k: int) -> np.ndarray:
        k = k % self.grid.nt
        if k not in self.kept:
            raise KeyError(f"time level {k} was not stored; pass keep_levels or keep_every")
        return self.kept[k]

    @property
    def stored_levels(self) -> list[int]:
        return sorted(self.kept)

    def field(self) -> SpaceTimeField:
        """Full field on [0, T]; requires every level to be stored."""
        if len(self.kept) != self.grid.nt:
            raise KeyError("not every level was stored; solve with keep_every=1")
        return SpaceTimeField(self.grid, np.stack([self.kept[k] for k in range(self.grid.nt)]), self.grid.times)

    def subsampled(self, every: int) -> SpaceTimeField:
        """Stored levels 0, every, 2 every, ... as a field on [0, T_k]."""
        ks = list(range(0, self.grid.nt, every))
        missing = [k for k in ks if k not in self.kept]
        if missing:
            raise KeyError(f"levels {missing[:3]}... not stored")
        return SpaceTimeField(self.grid, np.stack([self.kept[k] for k in ks]), self.grid.times[ks])


def _zero_ring(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    ring = np.ones(out.shape, bool)
    ring[(slice(1, -1),) * out.ndim] = False
    out[ring] = 0.0
    return out


def solve_forward(c: ScalarField, theta0: ScalarField, theta1: ScalarField, grid: Grid | None = None,
                  c_M: float | None = None, L_obs: float | None = None, keep_every: int | None = None,
                  keep_levels=(), admissibility: AdmissibilityReport | None = None,
                  allow_inadmissible: bool = False) -> WaveSolution:
    """Leapfrog solve on [0, T].

    Args:
        c, theta0, theta1: fields on ``grid`` (defaults to c.grid).
        c_M: bound used in the CFL check; max c is used when it is larger.
        L_obs: half-length of the recorded wall window (n=2 only; default:
            whole axis). Set to ``False``-like ``0`` to skip recording.
        keep_every: store every k-th level (plus the last one).
        keep_levels: extra level indices to store.
        admissibility: optional report; a failing report raises unless
            ``allow_inadmissible`` is set.
    """
    grid = grid or c.grid
    for name, f in (("c", c), ("theta0", theta0), ("theta1", theta1)):
        if f.grid != grid:
            raise GridMismatchError(f"{name} is not defined on the solver grid")
    if admissibility is not None and not admissibility.passed and not allow_inadmissible:
        names = ", ".join(k.name for k in admissibility.failures())
        raise AdmissibilityError(f"inputs are not admissible ({names}); pass allow_inadmissible=True to override")
    grid.check_cfl(max(float(np.max(c.values)), c_M or 0.0))

    dt = grid.dt
    u0 = _zero_ring(theta0.values)
    lap0 = kernels.flux_divergence(c.values, u0, grid.spacing)
    u1 = _zero_ring(u0 + dt * theta1.values + 0.5 * dt * dt * lap0)

    nsteps = grid.nt - 1
    keep = set(int(k) % grid.nt for k in keep_levels)
    if keep_every:
        keep.update(range(0, grid.nt, int(keep_every)))
        keep.add(nsteps)
    record = grid.n == 2 and L_obs != 0
    if record:
        probe = wall_probe(grid)
        cols = grid.axial_indices(grid.L_sim if L_obs is None else L_obs)
        j0, j1 = int(cols[0]), int(cols[-1]) + 1
    else:
        probe = np.zeros((1, grid.shape[0]))
        j0, j1 = 0, 1
    energy, rec, kept, bad = kernels.leapfrog(u0, u1, c.values, grid.spacing, dt, nsteps,
                                              probe, j0, j1, sorted(keep))
    if bad >= 0:
        raise SolverError(f"NaN detected at step {bad}")
    trace = None
    if record:
        trace = ObservationTrace(grid.times, grid.axes[-1][j0:j1], np.moveaxis(rec, 1, 0))
    return WaveSolution(grid, c, theta0, theta1, energy, trace,
                        {k: kept[i] for i, k in enumerate(sorted(keep))})


def symmetrize_levels(a: np.ndarray, axis: int = 0) -> np.ndarray:
    """Even extension of levels on [0, T] to [-T, T] along ``axis``."""
    a = np.moveaxis(np.asarray(a), axis, 0)
    return np.moveaxis(np.concatenate([a[:0:-1], a], axis=0), 0, axis)


def time_symmetrize(sol: WaveSolution) -> SpaceTimeField:
    """u(x, -t) := u(x, t) on the mirrored levels."""
    f = sol.field()
    return SpaceTimeField(sol.grid, symmetrize_levels(f.values), sol.grid.symmetric_times)


def derivative_mismatch_at_zero(sol: WaveSolution) -> dict:
    """Centred d/dt at t=0 of the symmetrized field against the forward difference.

    The centred value vanishes by symmetry; the forward difference
    approximates theta1. Their gap measures the kink introduced by the even
    extension when theta1 is nonzero.
    """
    u0, u1 = sol.level(0), sol.level(1)
    dt = sol.grid.dt
    ext = symmetrize_levels(np.stack([u0, u1]))  # levels -dt, 0, dt
    centred = (ext[2] - ext[0]) / (2 * dt)
    forward = (u1 - u0) / dt
    scale = max(float(np.max(np.abs(u0))), 1e-300)
    return {"centred_max": float(np.max(np.abs(centred))),
            "forward_max": float(np.max(np.abs(forward))),
            "theta1_max": float(np.max(np.abs(sol.theta1.values))),
            "mismatch": float(np.max(np.abs(forward - centred))),
            "relative_centred": float(np.max(np.abs(centred))) / scale}
