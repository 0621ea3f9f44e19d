"""Linearisation, cut-offs, conductivity reconstruction and the stability sweep.

Reconstruction reads the identity ``div(c grad theta0) = w`` (with w the
second time derivative of the solution at t=0) as a first-order transport
equation for c and marches it away from the wall where c is known.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats

from . import kernels
from .admissibility import AdmissibilityParams, check_conductivity
from .carleman import CarlemanParams, log_weighted_sq_norm
from .errors import AdmissibilityError, GridError, GridMismatchError, ParameterError, ReconstructionError
from .forward import ObservationTrace, WaveSolution, observation_norm, solve_forward, symmetrize_levels
from .grid import Grid, Region, ScalarField, SpaceTimeField, sobolev_norm, trapezoid_weights
from .stencils import derivative, smoothstep, smoothstep_d1, smoothstep_d2

log = logging.getLogger(__name__)


def _same(a, b, what):
    if a.grid != b.grid:
        raise GridMismatchError(f"grid mismatch between {what}")


def linearized_source(c: ScalarField, u2: SpaceTimeField) -> SpaceTimeField:
    """div(c grad u2) at every time level, same stencil as the solver."""
    _same(c, u2, "c and u2")
    vals = kernels._numpy.flux_divergence(c.values, u2.values, c.grid.spacing)
    return SpaceTimeField(u2.grid, vals, u2.times)


def second_time_derivative_at_zero(c: ScalarField, theta0: ScalarField, grid: Grid | None = None) -> ScalarField:
    """div(c grad theta0) by the flux stencil (zero on the boundary ring)."""
    _same(c, theta0, "c and theta0")
    if grid is not None and grid != c.grid:
        raise GridMismatchError("fields are not on the requested grid")
    return ScalarField(c.grid, kernels.flux_divergence(c.values, theta0.values, c.grid.spacing))


def second_time_derivative_from_solution(sol: WaveSolution) -> ScalarField:
    """u_tt(., 0) from stored levels 0..4 by a 9-point stencil on the even extension."""
    levels = np.stack([sol.level(k) for k in range(5)])
    ext = symmetrize_levels(levels)
    w = derivative(ext, sol.grid.dt, 2, axis=0, width=9)[4]
    return ScalarField(sol.grid, w)


# ---------------------------------------------------------------------------
# cut-offs


@dataclass(frozen=True)
class CutoffPair:
    """C^2 cut-offs: chi in x_n (half-length L) and eta in t (horizon T).

    Both equal 1 up to ``R - 2 eps`` and 0 from ``R - eps`` on, joined by the
    quintic smoothstep.
    """

    L: float
    T: float
    eps: float

    def _prof(self, x, R, k):
        x = np.asarray(x, dtype=float)
        y = (np.abs(x) - (R - 2 * self.eps)) / self.eps
        if k == 0:
            return 1.0 - smoothstep(y)
        if k == 1:
            return -np.sign(x) * smoothstep_d1(y) / self.eps
        return -smoothstep_d2(y) / self.eps ** 2

    def chi(self, x):
        return self._prof(x, self.L, 0)

    def chi_d1(self, x):
        return self._prof(x, self.L, 1)

    def chi_d2(self, x):
        return self._prof(x, self.L, 2)

    def eta(self, t):
        return self._prof(t, self.T, 0)

    def eta_d1(self, t):
        return self._prof(t, self.T, 1)

    def eta_d2(self, t):
        return self._prof(t, self.T, 2)


def build_cutoffs(params: CarlemanParams) -> CutoffPair:
    if not 0 < params.eps < (params.L - params.ell) / 2:
        raise ParameterError("eps must lie in (0, (L - ell)/2)")
    return CutoffPair(params.L, params.T, params.eps)


def assemble_g(c1: ScalarField, c: ScalarField, u_k: np.ndarray, u2_k: np.ndarray, cut: CutoffPair) -> np.ndarray:
    """Commutator source for chi u^(k).

    Expanded by the product rule with grad chi = chi'(x_n) e_n:
    (d_n c1 chi' + c1 chi'') u + 2 c1 chi' d_n u + c chi' d_n u2. Arrays may
    carry a leading time axis.
    """
    g = c1.grid
    hn = g.spacing[-1]
    xn = g.axes[-1]
    d1, d2 = cut.chi_d1(xn), cut.chi_d2(xn)
    dn_c1 = np.gradient(c1.values, hn, axis=-1, edge_order=2)
    dn_u = np.gradient(u_k, hn, axis=-1, edge_order=2)
    dn_u2 = np.gradient(u2_k, hn, axis=-1, edge_order=2)
    return (dn_c1 * d1 + c1.values * d2) * u_k + 2 * c1.values * d1 * dn_u + c.values * d1 * dn_u2


# ---------------------------------------------------------------------------
# reconstruction


def _axis_of(a_prime) -> tuple[int, int]:
    a = np.asarray(a_prime, float).reshape(-1)
    k = int(np.argmax(np.abs(a)))
    if not math.isclose(abs(a[k]), 1.0, abs_tol=1e-12) or np.sum(np.abs(a)) > 1 + 1e-12:
        raise ParameterError("reconstruction marches along a coordinate axis; a' must be +-e_k")
    return k, int(np.sign(a[k]))


def restrict_axial(field: ScalarField, half_length: float) -> ScalarField:
    """Field on the sub-grid |x_n| <= half_length (snapped inward to nodes)."""
    g = field.grid
    idx = g.axial_indices(half_length)
    sub = Grid(g.cross_section, float(g.axes[-1][idx[-1]]), g.T, g.spacing, g.dt)
    return ScalarField(sub, field.values[..., idx[0]:idx[-1] + 1])


@dataclass(frozen=True, eq=False)
class Reconstruction:
    """Result on Omega_ell plus the raw marched array (NaN where undetermined)."""

    field: ScalarField
    raw: np.ndarray
    method: str
    window: tuple


def transport_residual(c: np.ndarray, theta0: ScalarField) -> np.ndarray:
    """Discrete operator inverted exactly by the first-order upwind march (a' = +e_1, n=2).

    Row i: b1 (c_{i+1} - c_i)/h1 + b_n D_up c_i + q c_i, with b = grad theta0,
    q the flux Laplacian of theta0 and D_up the upwind difference in x_n.
    """
    b1, bn, q, h1, hn = _transport_coeffs(theta0)
    out = np.full(c.shape, np.nan)
    for i in range(c.shape[0] - 1):
        out[i] = b1[i] * (c[i + 1] - c[i]) / h1 + bn[i] * _upwind(c[i], bn[i] / b1[i], hn) + q[i] * c[i]
    return out


def _transport_coeffs(theta0: ScalarField):
    g = theta0.grid
    if g.n != 2:
        raise NotImplementedError("upwind marching is implemented for one cross-section axis")
    h1, hn = g.spacing
    b1 = np.gradient(theta0.values, h1, axis=0, edge_order=2)
    bn = np.gradient(theta0.values, hn, axis=1, edge_order=2)
    q = kernels._numpy.flux_divergence(np.ones(g.shape), theta0.values, g.spacing)
    return b1, bn, q, h1, hn


def _upwind(row: np.ndarray, speed: np.ndarray, hn: float) -> np.ndarray:
    back = np.full(row.shape, np.nan)
    fwd = np.full(row.shape, np.nan)
    back[1:] = (row[1:] - row[:-1]) / hn
    fwd[:-1] = (row[1:] - row[:-1]) / hn
    return np.where(speed > 0, back, fwd)


def _march_upwind(theta0: ScalarField, w: np.ndarray, c: np.ndarray, known: np.ndarray, heun: bool) -> np.ndarray:
    b1, bn, q, h1, hn = _transport_coeffs(theta0)

    def F(i, row):
        return (w[i] - bn[i] * _upwind(row, bn[i] / b1[i], hn) - q[i] * row) / b1[i]

    for i in range(c.shape[0] - 1):
        target = ~known[i + 1]
        if not target.any():
            continue
        k1 = F(i, c[i])
        new = c[i] + h1 * k1
        if heun:
            new = c[i] + 0.5 * h1 * (k1 + F(i + 1, new))
        c[i + 1] = np.where(target, new, c[i + 1])
    return c


def reconstruct_conductivity(w: ScalarField, theta0: ScalarField, c_star: ScalarField, params: CarlemanParams,
                             adm: AdmissibilityParams, method: str = "flux", heun: bool = False,
                             grid: Grid | None = None) -> Reconstruction:
    """Recover c on Omega_ell from w = div(c grad theta0) and collar data c*.

    ``method="flux"`` inverts the solver's flux stencil exactly (discrete
    round trip); ``method="upwind"`` integrates grad theta0 . grad c +
    (Lap theta0) c = w with a first-order upwind march (optionally a Heun
    corrector). Marching starts at the wall where a' points inward and runs
    along a', where theta0 must strictly decrease.
    """
    for f, nm in ((theta0, "theta0"), (c_star, "c*")):
        _same(w, f, f"w and {nm}")
    g = w.grid
    if grid is not None and grid != g:
        raise GridMismatchError("fields are not on the requested grid")
    k, sgn = _axis_of(adm.a_prime)
    known = np.array(adm.collar_mask(g))
    if not known.any():
        raise ReconstructionError("collar data missing: no grid node lies within the collar")

    # axial window: Omega_ell grown by one node per marching step
    n_steps = g.shape[k]
    xn = g.axes[-1]
    half = min(params.ell + (n_steps + 2) * g.spacing[-1], params.L, g.L_sim)
    cols = np.nonzero(np.abs(xn) <= half + 1e-9)[0]
    win = (slice(None),) * (g.n - 1) + (slice(int(cols[0]), int(cols[-1]) + 1),)

    def to_march(a):
        a = np.moveaxis(np.asarray(a)[win], k, 0)
        return a[::-1] if sgn < 0 else a

    def from_march(a):
        a = a[::-1] if sgn < 0 else a
        return np.moveaxis(a, 0, k)

    th, ww, kn = to_march(theta0.values), to_march(w.values), to_march(known)
    cs_ = to_march(c_star.values)
    if not kn[0].all() or not kn[1].all():
        raise ReconstructionError("collar data missing: the first two rows along the march are not all known")
    # slope sign along the march (the row below each unknown node)
    for i in range(th.shape[0] - 1):
        tgt = ~kn[i + 1]
        if not tgt.any():
            continue
        d = th[i + 1] - th[i]
        bad = tgt & ~(d < 0)
        inner = np.zeros_like(bad)
        inner[(slice(1, -1),) * bad.ndim] = True
        bad &= inner
        if bad.any():
            j = np.unravel_index(int(np.argmax(bad)), bad.shape)
            mark = np.zeros(th.shape, bool)
            mark[(i,) + tuple(j)] = True
            node = np.argwhere(from_march(mark))[0]
            node[-1] += int(cols[0])
            x = tuple(float(ax[q]) for ax, q in zip(g.axes, node))
            raise ReconstructionError(f"slope sign lost at node {tuple(int(q) for q in node)} (x={x}): "
                                      f"theta0 step {float(d[tuple(j)]):.3g} along the march is not negative")
    c0 = np.where(kn, cs_, np.nan)
    if method == "flux":
        spacing = (g.spacing[k],) + tuple(h for q, h in enumerate(g.spacing) if q != k)
        raw = kernels.march_flux(th, ww, c0, kn, spacing)
    elif method == "upwind":
        if g.n != 2:
            raise NotImplementedError("upwind marching is implemented for one cross-section axis")
        # coefficients are computed in marching orientation
        mgrid = Grid(g.cross_section, float(xn[cols[-1]]), g.T, g.spacing, g.dt)
        raw = _march_upwind(ScalarField(mgrid, th), ww, c0.copy(), kn, heun)
    else:
        raise ValueError(f"unknown method {method!r}")
    raw = from_march(raw)
    full = np.full(g.shape, np.nan)
    full[win] = raw
    ell_cols = g.axial_indices(params.ell)
    sub = full[..., ell_cols[0]:ell_cols[-1] + 1]
    if not np.all(np.isfinite(sub)):
        raise ReconstructionError("reconstruction undetermined on Omega_ell: the marching window is too narrow")
    out = restrict_axial(ScalarField(g, np.nan_to_num(full)), params.ell).with_values(sub)
    return Reconstruction(out, full, method, (float(xn[cols[0]]), float(xn[cols[-1]])))


# ---------------------------------------------------------------------------
# boundary functional


@dataclass(frozen=True, eq=False)
class BoundaryTraces:
    """Traces on Sigma_L over t in [-T, T]: value and outward normal derivative.

    Arrays have shape (2, n_t, n_x) (wall, time, axial node).
    """

    times: np.ndarray
    xn: np.ndarray
    value: np.ndarray
    normal: np.ndarray | None
    x_wall: tuple = (0.0, 1.0)

    def __mul__(self, k):
        return BoundaryTraces(self.times, self.xn, self.value * k, None if self.normal is None else self.normal * k,
                              self.x_wall)

    __rmul__ = __mul__


def traces_from_observation(trace: ObservationTrace, k: int, cut: CutoffPair, x_wall=(0.0, 1.0)) -> BoundaryTraces:
    """Traces of chi d_t^k u on the walls from a normal-derivative observation.

    The value trace vanishes (Dirichlet); the normal derivative is
    chi(x_n) d_t^k (d_nu u), extended to t < 0 with parity (-1)^k.
    """
    d = trace.time_derivatives(max(k, 0))[k]
    ext = np.concatenate([(-1) ** k * d[:, :0:-1], d], axis=1)
    times = np.concatenate([-trace.times[:0:-1], trace.times])
    normal = ext * cut.chi(trace.xn)[None, None, :]
    return BoundaryTraces(times, trace.xn, np.zeros_like(normal), normal, tuple(x_wall))


def _sigma_phi(tr: BoundaryTraces, params: CarlemanParams) -> np.ndarray:
    a = params.a_prime[0]
    out = np.empty(tr.value.shape)
    for w, xw in enumerate(tr.x_wall):
        ps = (xw - params.delta * a) ** 2 - tr.xn[None, :] ** 2 - tr.times[:, None] ** 2
        out[w] = np.exp(params.gamma * ps)
    return out


def log_boundary_functional(tr: BoundaryTraces, s: float, params: CarlemanParams) -> float:
    if tr.normal is None:
        raise ParameterError("missing derivative traces: the normal derivative is required")
    dt = float(tr.times[1] - tr.times[0])
    hn = float(tr.xn[1] - tr.xn[0])
    w = np.multiply.outer(trapezoid_weights(tr.times.size, dt), trapezoid_weights(tr.xn.size, hn))[None]
    ph = 2 * s * _sigma_phi(tr, params)
    grad2 = (np.gradient(tr.value, dt, axis=1, edge_order=2) ** 2
             + np.gradient(tr.value, hn, axis=2, edge_order=2) ** 2 + tr.normal ** 2)
    l0 = 2 * math.log(s) + log_weighted_sq_norm(tr.value ** 2, ph, w) if s > 0 else -math.inf
    l1 = log_weighted_sq_norm(grad2, ph, w)
    return float(np.logaddexp(l0, l1))


def boundary_functional(tr: BoundaryTraces, s: float, params: CarlemanParams) -> float:
    """s^2 ||e^{s phi} v||^2 + ||e^{s phi} grad_{x,t} v||^2 over Sigma_L."""
    lg = log_boundary_functional(tr, s, params)
    return 0.0 if lg == -math.inf else math.exp(min(lg, 709.0)) if lg < 709 else math.inf


def doubling_bound(tr: BoundaryTraces, s: float, params: CarlemanParams) -> float:
    """Upper bound of h(2s)/h(s): max over Sigma_L of e^{2 s phi}, times 4 if the value trace is nonzero."""
    E = float(np.exp(2 * s * np.max(_sigma_phi(tr, params))))
    return E if not np.any(tr.value) else 4 * E


# ---------------------------------------------------------------------------
# stability experiment


@dataclass(frozen=True)
class StabilityRecord:
    eps: float
    norm_dc: float
    norm_du: float
    kappa: float

    @property
    def log_dc(self) -> float:
        return math.log(self.norm_dc) if self.norm_dc > 0 else -math.inf

    @property
    def log_du(self) -> float:
        return math.log(self.norm_du) if self.norm_du > 0 else -math.inf

    @property
    def C_empirical(self) -> float:
        if self.norm_du == 0:
            return math.nan
        return self.norm_dc / self.norm_du ** self.kappa

    def as_row(self) -> tuple:
        return (self.eps, self.norm_dc, self.norm_du, self.log_dc, self.log_du, self.kappa, self.C_empirical)


STABILITY_COLUMNS = ("eps", "norm_dc_H1", "norm_du_H", "log_dc", "log_du", "kappa", "C_empirical")


@dataclass(frozen=True)
class StabilitySweep:
    records: tuple
    slope: float
    intercept: float
    r2: float
    C: float
    kappa: float
    excluded: tuple = ()

    def holds_by_construction(self) -> bool:
        return all(r.norm_dc <= self.C * r.norm_du ** self.kappa * (1 + 1e-12)
                   for r in self.records if 0 < r.norm_du <= 1)

    def monotone(self) -> bool:
        rs = [r for r in self.records if r.norm_du > 0]
        return all(b.norm_dc > a.norm_dc and b.norm_du > a.norm_du for a, b in zip(rs, rs[1:]))

    def to_dict(self) -> dict:
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2, "C": self.C,
                "kappa": self.kappa, "excluded_eps": list(self.excluded),
                "records": [dict(zip(STABILITY_COLUMNS, r.as_row())) for r in self.records]}


def fit_loglog(records, kappa: float) -> StabilitySweep:
    use = [r for r in records if r.norm_dc > 0 and r.norm_du > 0]
    excluded = tuple(r.eps for r in records if not (r.norm_dc > 0 and r.norm_du > 0))
    for e in excluded:
        log.info("excluding eps=%g from the fit (zero norms)", e)
    if len(use) >= 2:
        res = stats.linregress([r.log_du for r in use], [r.log_dc for r in use])
        slope, icpt, r2 = float(res.slope), float(res.intercept), float(res.rvalue ** 2)
    else:
        slope = icpt = r2 = math.nan
    C = max((r.C_empirical for r in use), default=math.nan)
    return StabilitySweep(tuple(records), slope, icpt, r2, C, kappa, excluded)


def stability_sweep(c_base: ScalarField, p: ScalarField, eps_list, theta0: ScalarField, params: CarlemanParams,
                    adm: AdmissibilityParams | None = None, grid: Grid | None = None, kappa: float = 0.5,
                    theta1: ScalarField | None = None, base: WaveSolution | None = None,
                    check: bool = True) -> StabilitySweep:
    """Hoelder-stability experiment for c_base + eps p against c_base.

    Each entry runs one forward solve (the base solve is shared) and measures
    ||eps p||_{H^1(Omega_ell)} against the observation-norm difference on
    the walls over |x_n| <= L.
    """
    if not 0 < kappa < 1:
        raise ParameterError("kappa must lie in (0, 1)")
    grid = grid or c_base.grid
    _same(c_base, p, "c_base and p")
    theta1 = theta1 or ScalarField(grid, np.zeros(grid.shape))
    if adm is not None:
        collar = adm.collar_mask(grid)
        if np.any(p.values[collar] != 0):
            raise AdmissibilityError("perturbation must vanish on the collar")
    eps_sorted = sorted(float(e) for e in eps_list)
    if base is None:
        if adm is not None and check:
            rep = check_conductivity(c_base, c_base, adm)
            if not rep.passed:
                raise AdmissibilityError("base conductivity not admissible: "
                                         + ", ".join(c.name for c in rep.failures()))
        base = solve_forward(c_base, theta0, theta1, c_M=adm.c_M if adm else None, L_obs=params.L)
    region = Region.cylinder(params.ell)
    recs = []
    for e in eps_sorted:
        if e == 0:
            recs.append(StabilityRecord(0.0, 0.0, 0.0, kappa))
            continue
        ce = c_base + p * e
        if adm is not None and check:
            rep = check_conductivity(ce, c_base, adm)
            if not rep.passed:
                raise AdmissibilityError(f"c_base + {e:g} p not admissible: "
                                         + ", ".join(c.name for c in rep.failures()))
        sol = solve_forward(ce, theta0, theta1, c_M=adm.c_M if adm else None, L_obs=params.L)
        dc = sobolev_norm(p * e, 1, region)
        du = observation_norm(sol.trace - base.trace)
        recs.append(StabilityRecord(e, dc, du, kappa))
    return fit_loglog(recs, kappa)


# ---------------------------------------------------------------------------
# step-by-step weighted chain (diagnostic)


@dataclass(frozen=True)
class ChainRow:
    name: str
    log_lhs: float
    log_rhs: float

    @property
    def ratio(self) -> float:
        if self.log_lhs == -math.inf:
            return 0.0
        return math.exp(self.log_lhs - self.log_rhs)

    def as_row(self) -> tuple:
        return (self.name, self.log_lhs, self.log_rhs, self.ratio)


CHAIN_COLUMNS = ("inequality", "log_lhs", "log_rhs", "ratio")


def _lse(*terms) -> float:
    vals = [t for t in terms if t > -math.inf]
    if not vals:
        return -math.inf
    m = max(vals)
    return m + math.log(sum(math.exp(v - m) for v in vals))


def chain_diagnostics(sol1: WaveSolution, sol2: WaveSolution, params: CarlemanParams, s: float,
                      every: int = 1) -> list[ChainRow]:
    """Both sides of each inequality of the weighted chain at one value of s.

    Uses levels 0, every, 2 every, ... of both solutions (solve with
    ``keep_every=every``), the window |x_n| <= L and the symmetric time axis.
    Constants are not applied: rows report raw lhs, rhs and their ratio.
    """
    g = sol1.grid
    if sol2.grid != g:
        raise GridMismatchError("solutions live on different grids")
    cut = build_cutoffs(params)
    f1, f2 = sol1.subsampled(every), sol2.subsampled(every)
    if f1.times.size < 9:
        raise GridError("need at least 9 stored levels for the time derivatives")
    cols = g.axial_indices(params.L)
    sl = (Ellipsis, slice(int(cols[0]), int(cols[-1]) + 1))
    xn = g.axes[-1][sl[1]]
    dtk = f1.dt
    times = np.concatenate([-f1.times[:0:-1], f1.times])
    u = symmetrize_levels(f1.values[sl] - f2.values[sl])
    u2 = symmetrize_levels(f2.values[sl])
    c1v = sol1.c.values[sl]
    cd = (sol1.c.values - sol2.c.values)[sl]
    chi = cut.chi(xn)
    steps = g.spacing
    ders = {k: derivative(u, dtk, k, axis=0) for k in (2, 3)}
    ders2 = {k: derivative(u2, dtk, k, axis=0) for k in (2, 3)}

    a = params.a_prime[0]
    mesh = np.meshgrid(*g.axes[:-1], xn, indexing="ij", sparse=True)
    r2 = (mesh[0] - params.delta * a) ** 2 - mesh[-1] ** 2
    ph0 = np.exp(params.gamma * r2)
    phQ = np.exp(params.gamma * (r2[None] - times.reshape(-1, 1, 1) ** 2))
    wx = np.multiply.outer(trapezoid_weights(g.shape[0], steps[0]), trapezoid_weights(xn.size, steps[-1]))
    wQ = trapezoid_weights(times.size, dtk)[:, None, None] * wx[None]
    two0, twoQ = 2 * s * ph0, 2 * s * phQ

    def grad_sq(a_, lead):
        return sum(np.gradient(a_, h, axis=lead + q, edge_order=2) ** 2 for q, h in enumerate(steps))

    def h1_log(a_, weight, w, lead):
        return _lse(log_weighted_sq_norm(a_ ** 2, weight, w), log_weighted_sq_norm(grad_sq(a_, lead), weight, w))

    c_chi = chi * cd
    k0 = times.size // 2
    uchi = {k: chi * ders[k] for k in (2, 3)}
    # left sides
    L_c0 = h1_log(c_chi, two0, wx, 0)  # sum_j ||e^{s phi0} grad^j c_chi||^2 over Omega_L
    L_u0 = h1_log(uchi[2][k0], two0, wx, 0)
    log_s = math.log(s)
    two_dt = 2 * s * params.d_tilde
    rows = [ChainRow("weighted_coefficient_by_initial_slice", L_c0, -log_s + _lse(L_u0, two_dt))]
    rhs10 = math.log(2) + _lse(log_s + h1_log(uchi[2], twoQ, wQ, 1), -log_s + h1_log(uchi[3], twoQ, wQ, 1))
    rows.append(ChainRow("initial_slice_by_time_trace", L_u0, rhs10))

    f_terms, g_terms, u_terms, h_terms = [], [], [], []
    c_chi_f = ScalarField(Grid(g.cross_section, float(xn[-1]), g.T, g.spacing, g.dt), c_chi)
    c1_f = c_chi_f.with_values(c1v)
    cd_f = c_chi_f.with_values(cd)
    for k in (2, 3):
        fck = kernels._numpy.flux_divergence(c_chi, ders2[k], steps)
        gk = assemble_g(c1_f, cd_f, ders[k], ders2[k], cut)
        f_terms.append(log_weighted_sq_norm(fck ** 2, twoQ, wQ))
        g_terms.append(log_weighted_sq_norm(gk ** 2, twoQ, wQ))
        un = math.log(max(float(np.sum(wQ * (uchi[k] ** 2 + grad_sq(uchi[k], 1)))), 1e-300))
        u_terms.append(3 * log_s + two_dt + un)
        tr = ObservationTrace(sol1.trace.times[::every], sol1.trace.xn,
                              (sol1.trace - sol2.trace).data[:, ::every])
        bt = traces_from_observation(tr.restrict(params.L), k, cut, (g.cross_section.lower[0], g.cross_section.upper[0]))
        h_terms.append(log_s + log_boundary_functional(bt, s, params))
    rows.append(ChainRow("initial_slice_by_sources_and_boundary", L_u0, _lse(*f_terms, *g_terms, *u_terms, *h_terms)))
    cQ = _lse(log_weighted_sq_norm(c_chi[None] ** 2, twoQ, wQ),
              log_weighted_sq_norm(grad_sq(c_chi, 0)[None], twoQ, wQ))
    u_full = []
    for k in (2, 3):
        un = math.log(max(float(np.sum(wQ * (ders[k] ** 2 + grad_sq(ders[k], 1)))), 1e-300))
        u_full.append(3 * log_s + two_dt + un)
    rows.append(ChainRow("coefficient_before_decay", log_s + L_c0, _lse(cQ, two_dt, *u_full, *h_terms)))
    rows.append(ChainRow("coefficient_after_decay", log_s + L_c0, _lse(two_dt, *u_full, *h_terms)))
    plain = math.log(max(float(np.sum(wx * (c_chi ** 2 + grad_sq(c_chi, 0)))), 1e-300))
    hk = [h - log_s for h in h_terms]
    decay = 2 * log_s - 2 * s * (params.d - params.d_tilde)
    rows.append(ChainRow("unweighted_coefficient_bound", plain, _lse(decay, decay, *hk)))
    return rows
