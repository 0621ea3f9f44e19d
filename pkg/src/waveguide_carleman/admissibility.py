"""Admissibility checks for the conductivity and the initial data.

Each check produces a signed margin (nonnegative means satisfied) and the grid
node where the margin is attained. Norms that would live on the infinite
cylinder are replaced by finite-difference surrogates on the truncated grid and
labelled as such in the report.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, ParameterError
from .grid import Grid, ScalarField, integrate, trapezoid_weights


@dataclass(frozen=True)
class AdmissibilityParams:
    c_m: float
    c_M: float
    a0: float
    a_prime: tuple
    M0: float
    eta0: float
    collar_width: float

    def __post_init__(self):
        a = tuple(float(v) for v in np.atleast_1d(self.a_prime))
        object.__setattr__(self, "a_prime", a)
        errs = []
        if not 0 < self.c_m < 1:
            errs.append(f"c_m={self.c_m} must lie in (0, 1)")
        if not self.c_M > self.c_m:
            errs.append(f"c_M={self.c_M} must exceed c_m")
        if not math.isclose(float(np.linalg.norm(a)), 1.0, rel_tol=0, abs_tol=1e-12):
            errs.append("a' must be a unit vector")
        for name in ("a0", "M0", "eta0", "collar_width"):
            if not getattr(self, name) > 0:
                errs.append(f"{name} must be positive")
        if errs:
            raise ParameterError("; ".join(errs))

    def collar_mask(self, grid: Grid) -> np.ndarray:
        """Nodes within the boundary layer dist(x', wall) < w (full grid shape)."""
        d = grid.cross_section.wall_distance(*grid.mesh()[:-1])
        return np.broadcast_to(d < self.collar_width, grid.shape)

    def interior_mask(self, grid: Grid) -> np.ndarray:
        """Nodes of omega* = {dist(x', wall) > w/2}."""
        d = grid.cross_section.wall_distance(*grid.mesh()[:-1])
        return np.broadcast_to(d > 0.5 * self.collar_width, grid.shape)


@dataclass(frozen=True)
class Condition:
    name: str
    passed: bool
    margin: float
    witness: dict | None = None
    detail: str = ""
    informational: bool = False

    def to_dict(self) -> dict:
        return {"name": self.name, "passed": self.passed, "margin": self.margin,
                "witness": self.witness, "detail": self.detail, "informational": self.informational}


@dataclass(frozen=True)
class AdmissibilityReport:
    conditions: tuple = field(default_factory=tuple)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions if not c.informational)

    def __getitem__(self, name: str) -> Condition:
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    def failures(self) -> list[Condition]:
        return [c for c in self.conditions if not c.passed and not c.informational]

    def to_dict(self) -> dict:
        return {"passed": self.passed, "conditions": [c.to_dict() for c in self.conditions]}

    def __add__(self, other: "AdmissibilityReport") -> "AdmissibilityReport":
        return AdmissibilityReport(self.conditions + other.conditions)


def _witness(grid: Grid, flat_or_idx) -> dict:
    idx = np.unravel_index(flat_or_idx, grid.shape) if np.isscalar(flat_or_idx) else flat_or_idx
    idx = tuple(int(i) for i in idx)
    return {"index": idx, "x": tuple(float(ax[i]) for ax, i in zip(grid.axes, idx))}


def _masked_extreme(values: np.ndarray, mask: np.ndarray, grid: Grid, kind: str):
    if not mask.any():
        return math.nan, None
    arr = np.where(mask, values, np.inf if kind == "min" else -np.inf)
    k = int(np.argmin(arr) if kind == "min" else np.argmax(arr))
    return float(arr.flat[k]), _witness(grid, k)


def partial_derivatives(values: np.ndarray, spacing, max_order: int) -> dict:
    """All mixed partials up to ``max_order`` keyed by sorted axis tuples.

    Built by repeated second-order ``np.gradient`` (one-sided at the edges).
    """
    out = {(): np.asarray(values, float)}
    frontier = [()]
    for _ in range(max_order):
        nxt = []
        for alpha in frontier:
            start = alpha[-1] if alpha else 0
            for q in range(start, len(spacing)):
                beta = alpha + (q,)
                out[beta] = np.gradient(out[alpha], spacing[q], axis=q, edge_order=2)
                nxt.append(beta)
        frontier = nxt
    return out


def w_inf_surrogate(field: ScalarField, order: int):
    """max over |alpha| <= order of sup |d^alpha v|; returns (value, alpha, flat index)."""
    best = (-1.0, (), 0)
    for alpha, d in partial_derivatives(field.values, field.grid.spacing, order).items():
        k = int(np.argmax(np.abs(d)))
        v = float(abs(d.flat[k]))
        if v > best[0]:
            best = (v, alpha, k)
    return best


def h_surrogate(field: ScalarField, order: int) -> float:
    """Discrete H^order norm over the whole grid (all mixed partials)."""
    g = field.grid
    w = [trapezoid_weights(m, h) for m, h in zip(g.shape, g.spacing)]
    total = 0.0
    # sorted axis tuples enumerate each multi-index exactly once
    for d in partial_derivatives(field.values, g.spacing, order).values():
        total += integrate(d ** 2, w)
    return math.sqrt(total)


def _same_grid(a: ScalarField, b: ScalarField, what: str):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch between {what}")


def directional_derivative(field: ScalarField, a_prime) -> np.ndarray:
    g = field.grid
    a = np.asarray(a_prime, float)
    out = np.zeros(g.shape)
    for q in range(g.cross_section.dim):
        if a[q] != 0:
            out += a[q] * np.gradient(field.values, g.spacing[q], axis=q, edge_order=2)
    return out


def check_conductivity(c: ScalarField, c_star: ScalarField, params: AdmissibilityParams,
                       tol: float = 1e-12) -> AdmissibilityReport:
    """Ellipticity, W^{4,inf} ceiling, directional slope and collar agreement.

    ``c_star`` is given on the full grid; only its collar values are used.
    """
    _same_grid(c, c_star, "c and c*")
    g = c.grid
    everywhere = np.ones(g.shape, bool)
    conds = []

    cmin, wit = _masked_extreme(c.values, everywhere, g, "min")
    conds.append(Condition("ellipticity", cmin - params.c_m >= 0, cmin - params.c_m, wit,
                           f"min c = {cmin:.6g}, floor c_m = {params.c_m:.6g}"))

    wmax, alpha, k = w_inf_surrogate(c, 4)
    conds.append(Condition("w4inf_ceiling", params.c_M - wmax >= 0, params.c_M - wmax, _witness(g, k),
                           f"discrete surrogate: max |d^alpha c| = {wmax:.6g} at alpha={alpha}"))

    slope = directional_derivative(c, params.a_prime)
    smin, wit = _masked_extreme(slope, everywhere, g, "min")
    conds.append(Condition("directional_slope", smin - params.a0 >= 0, smin - params.a0, wit,
                           f"min a'.grad' c = {smin:.6g}, floor a0 = {params.a0:.6g}"))

    collar = params.collar_mask(g)
    if collar.any():
        dev, wit = _masked_extreme(np.abs(c.values - c_star.values), collar, g, "max")
        scale = max(1.0, float(np.max(np.abs(c_star.values[collar]))))
        conds.append(Condition("collar_match", dev <= tol * scale, -dev, wit,
                               f"max |c - c*| on the collar = {dev:.3g}"))
        sm, wit = _masked_extreme(c_star.values, collar, g, "min")
        conds.append(Condition("collar_floor", sm - params.c_m >= 0, sm - params.c_m, wit,
                               f"min c* on the collar = {sm:.6g}"))
        ss, wit = _masked_extreme(directional_derivative(c_star, params.a_prime), collar, g, "min")
        conds.append(Condition("collar_slope", ss - params.a0 >= 0, ss - params.a0, wit,
                               f"min a'.grad' c* on the collar = {ss:.6g}"))
    else:
        conds.append(Condition("collar_match", False, -math.inf, None,
                               "collar contains no grid nodes; refine the grid or widen the collar"))
    return AdmissibilityReport(tuple(conds))


def initial_surrogate(theta0: ScalarField, theta1: ScalarField) -> dict:
    """Components of the discrete stand-in for the initial-data norm bound."""
    w3, _, _ = w_inf_surrogate(theta0, 3)
    h5 = h_surrogate(theta0, 5)
    h4 = h_surrogate(theta1, 4)
    return {"w3inf_theta0": w3, "h5_theta0": h5, "h4_theta1": h4, "total": w3 + h5 + h4}


def check_initial(theta0: ScalarField, theta1: ScalarField, params: AdmissibilityParams,
                  L: float | None = None, delta: float | None = None,
                  tol: float = 1e-12) -> AdmissibilityReport:
    """Checks on (theta0, theta1).

    Args:
        L: half-length of the slab on which the slope floor is enforced
            (whole grid when omitted).
        delta: when given, also report min |grad theta0 . (x' - delta a', -x_n)|
            over the same slab as an informational entry.
    """
    _same_grid(theta0, theta1, "theta0 and theta1")
    g = theta0.grid
    conds = []

    t1 = float(np.max(np.abs(theta1.values)))
    k1 = int(np.argmax(np.abs(theta1.values)))
    conds.append(Condition("theta1_zero", t1 == 0.0, -t1, _witness(g, k1) if t1 else None,
                           "θ₁ = 0 required" if t1 else "θ₁ vanishes identically"))

    slab = params.interior_mask(g)
    if L is not None:
        slab = slab & np.broadcast_to(np.abs(g.mesh()[-1]) <= L * (1 + 1e-12), g.shape)
    slope = -directional_derivative(theta0, params.a_prime)
    smin, wit = _masked_extreme(slope, slab, g, "min")
    if math.isnan(smin):
        conds.append(Condition("initial_slope", False, -math.inf, None, "slope region has no grid nodes"))
    else:
        conds.append(Condition("initial_slope", smin - params.eta0 >= 0, smin - params.eta0, wit,
                               f"min -a'.grad' theta0 on omega* x [-L, L] = {smin:.6g}, floor eta0 = {params.eta0:.6g}"))

    parts = initial_surrogate(theta0, theta1)
    conds.append(Condition("initial_norm_bound", parts["total"] <= params.M0, params.M0 - parts["total"], None,
                           "discrete surrogate: W3inf(theta0) {w3inf_theta0:.6g} + H5(theta0) {h5_theta0:.6g}"
                           " + H4(theta1) {h4_theta1:.6g}".format(**parts)))

    wall = np.ones(g.shape, bool)
    wall[(slice(1, -1),) * g.cross_section.dim + (slice(None),)] = False
    tw, wit = _masked_extreme(np.abs(theta0.values), wall, g, "max")
    scale = max(1.0, float(np.max(np.abs(theta0.values))))
    conds.append(Condition("dirichlet_trace", tw <= tol * scale, -tw, wit,
                           f"max |theta0| on the lateral wall = {tw:.3g}"))

    if delta is not None:
        grads = [np.gradient(theta0.values, h, axis=q, edge_order=2) for q, h in enumerate(g.spacing)]
        mesh = g.mesh()
        a = np.asarray(params.a_prime, float)
        dot = sum(gq * (mesh[q] - delta * a[q]) for q, gq in enumerate(grads[:-1])) - grads[-1] * mesh[-1]
        mu, wit = _masked_extreme(np.abs(dot), slab, g, "min")
        conds.append(Condition("mu0_empirical", True, mu, wit,
                               "empirical min |grad theta0 . (x' - delta a', -x_n)| on omega* x [-L, L]",
                               informational=True))
    return AdmissibilityReport(tuple(conds))
