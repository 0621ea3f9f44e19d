"""Weight functions, parameter selection and weighted-inequality checks.

The weight is ``phi = exp(gamma * psi)`` with
``psi(x, t) = |x' - delta a'|^2 - x_n^2 - t^2``. Weighted norms
``||e^{s phi} f||^2`` are accumulated in log space so that large ``s phi``
never overflows; ratios are formed from log differences.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate as spi
from scipy.special import logsumexp

from .errors import MembershipError, ParameterError, SamplingError, SelectionError
from .grid import CrossSection, Grid, ScalarField, SpaceTimeField, build_grid, trapezoid_weights

DEFAULT_GAMMA = 0.02
CHAR_TOL = 1e-3


def _unit(a_prime) -> np.ndarray:
    a = np.asarray(a_prime, dtype=float).reshape(-1)
    if not math.isclose(float(np.linalg.norm(a)), 1.0, rel_tol=0, abs_tol=1e-12):
        raise ParameterError("a′ must be a unit vector")
    return a


def psi(x, t, delta: float, a_prime=(1.0,)):
    """psi = |x' - delta a'|^2 - x_n^2 - t^2 for points ``x`` of shape (..., n)."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a_prime, dtype=float).reshape(-1)
    xp = x[..., :-1] - delta * a
    return np.sum(xp * xp, axis=-1) - x[..., -1] ** 2 - np.asarray(t, float) ** 2


def phi(x, t, delta: float, gamma: float, a_prime=(1.0,)):
    """exp(gamma * psi)."""
    if not gamma > 0:
        raise ParameterError("gamma must be positive")
    return np.exp(gamma * psi(x, t, delta, a_prime))


def g_ell(delta: float, cross_section: CrossSection, ell: float, a_prime=(1.0,)) -> float:
    """(sup - inf of |x' - delta a'|^2 over omega + ell^2)^{1/2}, exact for boxes."""
    if not delta > 0:
        raise ParameterError("delta must be positive")
    p = delta * np.asarray(a_prime, float).reshape(-1)
    return math.sqrt(cross_section.max_sq_dist(p) - cross_section.min_sq_dist(p) + ell * ell)


def floor_margin(delta, cross_section, ell, a_prime, a0, c_m, c_M) -> float:
    """delta a0 - ((1 + 2/sqrt(c_m)) g_ell + |omega| + 2) c_M - 2."""
    g = g_ell(delta, cross_section, ell, a_prime)
    return delta * a0 - (((1 + 2 / math.sqrt(c_m)) * g + cross_section.radius + 2) * c_M + 2)


def vertex_margin(delta, cross_section, ell, a_prime, c_m, nu) -> float:
    """Strengthened form: sqrt(c_m) inf|x' - delta a'| - (g_ell(delta) + nu)."""
    g = g_ell(delta, cross_section, ell, a_prime)
    p = delta * np.asarray(a_prime, float).reshape(-1)
    return math.sqrt(c_m) * math.sqrt(cross_section.min_sq_dist(p)) - (g + nu)


def floor_LT_margin(delta, cross_section, ell, a_prime, a0, c_m, c_M, nu) -> float:
    """delta a0 - (L + |omega| + 2(1 + T/sqrt(c_m))) c_M - 2 at L = T = g_ell + nu."""
    LT = g_ell(delta, cross_section, ell, a_prime) + nu
    return delta * a0 - (LT + cross_section.radius + 2 * (1 + LT / math.sqrt(c_m))) * c_M - 2


@dataclass(frozen=True)
class CarlemanParams:
    """Weight parameters; derived quantities are filled in on construction."""

    cross_section: CrossSection
    a_prime: tuple
    ell: float
    delta: float
    gamma: float
    nu: float
    eps: float
    c_m: float
    s: float | None = None
    g: float = field(init=False)
    L: float = field(init=False)
    T: float = field(init=False)
    beta: float = field(init=False)
    d: float = field(init=False)
    d_tilde: float = field(init=False)

    def __post_init__(self):
        a = _unit(self.a_prime)
        object.__setattr__(self, "a_prime", tuple(float(v) for v in a))
        for name in ("ell", "delta", "gamma", "nu"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not 0 < self.c_m < 1:
            raise ParameterError("c_m must lie in (0, 1)")
        g = g_ell(self.delta, self.cross_section, self.ell, a)
        LT = g + self.nu
        beta = self.cross_section.min_sq_dist(self.delta * a) - self.ell ** 2
        d = math.exp(self.gamma * beta)
        d_tilde = d * math.exp(-self.gamma * self.nu ** 2)
        for k, v in dict(g=g, L=LT, T=LT, beta=beta, d=d, d_tilde=d_tilde).items():
            object.__setattr__(self, k, v)
        if not 0 < self.eps < (LT - self.ell) / 2:
            raise ParameterError(f"eps={self.eps} must lie in (0, (L - ell)/2) = (0, {(LT - self.ell) / 2:.6g})")
        floor = (1 - self.c_m) / self.c_m * self.ell ** 2
        if not beta >= floor:
            raise ParameterError(f"beta_ell={beta:.6g} below ((1 - c_m)/c_m) ell^2 = {floor:.6g}")
        if not d_tilde < d:
            raise ParameterError("d_tilde must be strictly below d")
        if self.s is not None and not self.s > 0:
            raise ParameterError("s must be positive")

    def with_s(self, s: float) -> "CarlemanParams":
        return replace(self, s=s)

    def to_dict(self) -> dict:
        cs = self.cross_section
        return {"lower": cs.lower, "upper": cs.upper, "a_prime": self.a_prime, "ell": self.ell,
                "delta": self.delta, "gamma": self.gamma, "nu": self.nu, "eps": self.eps,
                "c_m": self.c_m, "s": self.s, "g_ell": self.g, "L": self.L, "T": self.T,
                "beta_ell": self.beta, "d_ell": self.d, "d_tilde_ell": self.d_tilde}


@dataclass(frozen=True)
class WeightMargins:
    """Weight-bound margins on the sample.

    inner_floor: min phi(., 0) on Omega_ell minus d_ell (zero at the minimizer).
    time_slab: d_tilde_ell minus max phi on |x_n| <= L, |t| in [T - 2 eps, T].
    axial_slab: d_tilde_ell minus max phi on |x_n| in [L - 2 eps, L], |t| <= T.
    """
    inner_floor: float
    time_slab: float
    axial_slab: float
    inner_minimizer: tuple

    @property
    def passed(self) -> bool:
        return self.inner_floor >= 0 and self.time_slab > 0 and self.axial_slab > 0


def _cross_samples(cs: CrossSection, n: int) -> np.ndarray:
    axes = [np.linspace(a, b, n) for a, b in zip(cs.lower, cs.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, cs.dim)


def _bounds_on_sample(cs, a, delta, gamma, ell, L, T, eps, n):
    xp = _cross_samples(cs, n)
    r2 = np.sum((xp - delta * a) ** 2, axis=1)
    xl = np.linspace(-ell, ell, n)
    xL = np.linspace(-L, L, n)
    tT = np.linspace(-T, T, n)
    slab_t = np.linspace(T - 2 * eps, T, n)  # |t| in [T - 2eps, T]; psi even in t
    slab_x = np.linspace(L - 2 * eps, L, n)
    k = int(np.argmin(r2))
    j = int(np.argmax(xl ** 2))
    min_inner = math.exp(gamma * (r2[k] - xl[j] ** 2))
    max_time_slab = math.exp(gamma * (r2.max() - np.min(xL ** 2) - np.min(slab_t ** 2)))
    max_axial_slab = math.exp(gamma * (r2.max() - np.min(slab_x ** 2) - np.min(tT ** 2)))
    return min_inner, max_time_slab, max_axial_slab, tuple(xp[k]) + (float(xl[j]),)


def weight_bounds_check(params: CarlemanParams, n_sample: int = 201) -> WeightMargins:
    """Margins of the three weight bounds on an ``n_sample``-per-axis sample.

    psi is a sum of separate functions of x', x_n and t, so extrema over the
    full tensor sample are computed axis by axis.
    """
    p = params
    a = np.asarray(p.a_prime)
    m5, m6, m7, arg = _bounds_on_sample(p.cross_section, a, p.delta, p.gamma, p.ell, p.L, p.T, p.eps, n_sample)
    return WeightMargins(inner_floor=m5 - p.d, time_slab=p.d_tilde - m6, axial_slab=p.d_tilde - m7,
                         inner_minimizer=arg)


@dataclass(frozen=True)
class Selection:
    params: CarlemanParams
    floor: float
    vertex: float
    floor_LT: float
    margins: WeightMargins
    ladder_steps: int

    def to_dict(self) -> dict:
        m = self.margins
        return {**self.params.to_dict(), "margin_floor": self.floor, "margin_vertex": self.vertex,
                "margin_floor_LT": self.floor_LT, "margin_inner_floor": m.inner_floor,
                "margin_time_slab": m.time_slab, "margin_axial_slab": m.axial_slab, "ladder_steps": self.ladder_steps}


def select_params(cross_section: CrossSection, ell: float, a_prime, a0: float, c_m: float, c_M: float,
                  gamma: float = DEFAULT_GAMMA, nu: float = 0.1, delta_step: float = 1.0,
                  delta_start: float | None = None, delta_max: float = 1e4,
                  n_sample: int = 201) -> Selection:
    """Smallest delta on the ladder delta_start + k * delta_step meeting all conditions.

    Conditions: the delta-floor inequality, the strengthened vertex-distance
    inequality and the simultaneous inequality at L = T = g_ell + nu. Then
    eps is the largest (L - ell)/2 * 2^-k (k >= 1) whose weight-bound margins
    are positive on the sample.
    """
    if not a0 > 0:
        raise SelectionError("directional floor must be positive")
    a = np.asarray(a_prime, dtype=float).reshape(-1)
    if a.size != cross_section.dim or not math.isclose(float(np.linalg.norm(a)), 1.0, rel_tol=0, abs_tol=1e-12):
        raise SelectionError("a′ must be a unit vector")
    if not 0 < c_m < 1:
        raise SelectionError("c_m must lie in (0, 1)")
    for name, v in dict(ell=ell, c_M=c_M, gamma=gamma, nu=nu, delta_step=delta_step).items():
        if not v > 0:
            raise SelectionError(f"{name} must be positive")
    delta = delta_step if delta_start is None else delta_start
    k = 0
    worst = None
    while delta <= delta_max:
        m = {"floor": floor_margin(delta, cross_section, ell, a, a0, c_m, c_M),
             "vertex": vertex_margin(delta, cross_section, ell, a, c_m, nu),
             "floor_LT": floor_LT_margin(delta, cross_section, ell, a, a0, c_m, c_M, nu)}
        if min(m.values()) > 0:
            break
        worst = min(m.items(), key=lambda kv: kv[1])
        k += 1
        delta = (delta_step if delta_start is None else delta_start) + k * delta_step
    else:
        name, val = worst if worst else ("floor", float("nan"))
        raise SelectionError(f"no delta found below ceiling delta_max={delta_max:g}; "
                             f"binding inequality: {name} (margin {val:.6g})")
    g = g_ell(delta, cross_section, ell, a)
    half = (g + nu - ell) / 2
    for j in range(1, 64):
        eps = half * 2.0 ** -j
        params = CarlemanParams(cross_section, tuple(a), ell, delta, gamma, nu, eps, c_m)
        margins = weight_bounds_check(params, n_sample)
        if margins.time_slab > 0 and margins.axial_slab > 0:
            return Selection(params, m["floor"], m["vertex"], m["floor_LT"], margins, k)
    raise SelectionError("no dyadic eps satisfies the weight bounds on the sample")


# ---------------------------------------------------------------------------
# pseudoconvexity


def a2_on_weight(c, xp_shift, xn, t):
    """A_2(x, grad psi) = 4 (c (|x' - delta a'|^2 + x_n^2) - t^2)."""
    return 4.0 * (c * (np.sum(xp_shift ** 2, axis=-1) + xn ** 2) - t ** 2)


def j_quantity(c, grad_c, xp_shift, xn, xi, xi_t):
    """Bracket quantity for the principal symbol c|xi|^2 - xi_t^2 and weight psi.

    Args:
        c: conductivity at the sample points, shape (m,).
        grad_c: shape (m, n).
        xp_shift: x' - delta a', shape (m, n-1).
        xn: axial coordinate, shape (m,).
        xi: spatial covector, shape (m, n).
        xi_t: time covector component, shape (m,).
    """
    grad_psi = np.concatenate([2 * xp_shift, -2 * xn[:, None]], axis=1)
    xi2 = np.sum(xi ** 2, axis=1)
    hess = 8 * (c ** 2 * (np.sum(xi[:, :-1] ** 2, axis=1) - xi[:, -1] ** 2) - xi_t ** 2)
    gc_xi = np.sum(grad_c * xi, axis=1)
    gp_xi = np.sum(grad_psi * xi, axis=1)
    gc_gp = np.sum(grad_c * grad_psi, axis=1)
    return hess + 4 * c * gc_xi * gp_xi - 2 * c * xi2 * gc_gp


def j_lower_bound(c, grad_c, x, delta, a_prime, T, xi_t, c_floor: float | None = None):
    """Closed-form lower bound of the bracket quantity on the characteristic set.

    4[delta a'.grad'c - (x'.grad'c - x_n d_n c + 2c + 2T|grad c|/sqrt(c) + 2)] xi_t^2,
    with sqrt(c_floor) replacing sqrt(c) when ``c_floor`` is given.
    """
    a = np.asarray(a_prime, float)
    gp = grad_c[:, :-1]
    radial = np.sum(x[:, :-1] * gp, axis=1) - x[:, -1] * grad_c[:, -1]
    root = np.sqrt(c) if c_floor is None else math.sqrt(c_floor)
    gnorm = np.linalg.norm(grad_c, axis=1)
    return 4 * (delta * (gp @ a) - (radial + 2 * c + 2 * T * gnorm / root + 2)) * xi_t ** 2


def _sphere(n_dir: int, dim: int) -> np.ndarray:
    if dim == 2:
        ang = (np.arange(n_dir) + 0.5) * (2 * np.pi / n_dir)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    # Fibonacci lattice on S^2
    k = np.arange(n_dir) + 0.5
    z = 1 - 2 * k / n_dir
    r = np.sqrt(1 - z * z)
    th = np.pi * (1 + 5 ** 0.5) * k
    return np.column_stack([r * np.cos(th), r * np.sin(th), z])


@dataclass(frozen=True)
class PseudoconvexityResult:
    min_A2: float
    min_J: float
    min_bound: float
    n_samples: int
    min_gap: float
    scale: float
    worst_J_point: tuple

    @property
    def bound_holds(self) -> bool:
        """Bound <= J on every sample within 1e-6 relative tolerance."""
        return self.min_gap >= -1e-6 * self.scale

    def to_dict(self) -> dict:
        return {"min_A2": self.min_A2, "min_J": self.min_J, "min_bound": self.min_bound,
                "n_samples": self.n_samples, "min_gap": self.min_gap, "scale": self.scale,
                "bound_holds": self.bound_holds, "worst_J_point": self.worst_J_point}


def pseudoconvexity_margin(c: ScalarField, params: CarlemanParams, n_x: int = 400, n_xi: int = 1000,
                           seed: int = 0, mode: str = "solve", tol: float = CHAR_TOL,
                           c_floor: float | None = None) -> PseudoconvexityResult:
    """Minima of A_2(x, grad psi), of J on characteristic samples and of its bound.

    ``mode="solve"``: for each sampled node and unit direction xi, set
    xi_t = +-sqrt(c)|xi| and solve the orthogonality condition for t; keep
    |t| <= T. ``mode="band"``: sample t on a uniform grid and keep pairs whose
    orthogonality residual is below ``tol * |xi~| * max(1, |x|)``.
    Covectors are normalised to unit length in R^{n+1}.
    """
    if n_x < 8 or n_xi < 8:
        raise ParameterError("sample counts must be at least 8")
    g = c.grid
    p = params
    a = np.asarray(p.a_prime)
    rng = np.random.default_rng(seed)
    grads = np.stack([np.gradient(c.values, h, axis=q, edge_order=2) for q, h in enumerate(g.spacing)], axis=-1)
    idx_n = g.axial_indices(p.L)
    mesh = np.stack(np.meshgrid(*g.axes, indexing="ij"), axis=-1)
    sub = (slice(None),) * (g.n - 1) + (idx_n,)
    pts = mesh[sub].reshape(-1, g.n)
    cv = c.values[sub].reshape(-1)
    gv = grads[sub].reshape(-1, g.n)
    if n_x < pts.shape[0]:
        pick = np.sort(rng.choice(pts.shape[0], n_x, replace=False))
        pts, cv, gv = pts[pick], cv[pick], gv[pick]
    m = pts.shape[0]
    shift = pts[:, :-1] - p.delta * a

    ts = np.linspace(-p.T, p.T, max(2 * n_xi + 1, 3))
    A2 = a2_on_weight(cv[:, None], shift[:, None, :], pts[:, -1][:, None], ts[None, :])
    min_A2 = float(A2.min())

    dirs = _sphere(n_xi, g.n)
    # broadcast over (node, direction, sign)
    X = np.repeat(np.arange(m), n_xi * 2)
    D = np.tile(np.repeat(np.arange(n_xi), 2), m)
    S = np.tile(np.array([1.0, -1.0]), m * n_xi)
    cc = cv[X]
    xi = dirs[D]
    xi_t = S * np.sqrt(cc)
    orth_x = np.sum(xi[:, :-1] * shift[X], axis=1) - xi[:, -1] * pts[X, -1]
    if mode == "solve":
        t = -cc * orth_x / xi_t
        keep = np.abs(t) <= p.T
    elif mode == "band":
        t = rng.choice(ts, size=X.size)
        resid = cc * orth_x + xi_t * t
        norm = np.sqrt(1.0 + cc)
        keep = np.abs(resid) <= tol * norm * np.maximum(1.0, np.linalg.norm(pts[X], axis=1))
    else:
        raise ValueError(f"unknown sampling mode {mode!r}")
    if not keep.any():
        raise SamplingError(f"no characteristic sample passed the orthogonality filter "
                            f"(mode={mode}, tol={tol:g}, candidates={keep.size}); increase n_xi")
    X, xi, xi_t, t, cc = X[keep], xi[keep], xi_t[keep], t[keep], cc[keep]
    nrm = np.sqrt(1.0 + cc)  # |xi~| with |xi| = 1
    xi = xi / nrm[:, None]
    xi_t = xi_t / nrm
    J = j_quantity(cc, gv[X], shift[X], pts[X, -1], xi, xi_t)
    B = j_lower_bound(cc, gv[X], pts[X], p.delta, a, p.T, xi_t, c_floor)
    gap = J - B
    kmin = int(np.argmin(J))
    scale = float(max(np.max(np.abs(J)), np.max(np.abs(B)), 1e-300))
    return PseudoconvexityResult(min_A2=min_A2, min_J=float(J.min()), min_bound=float(B.min()),
                                 n_samples=int(J.size), min_gap=float(gap.min()), scale=scale,
                                 worst_J_point=tuple(float(v) for v in pts[X[kmin]]) + (float(t[kmin]),))


# ---------------------------------------------------------------------------
# weighted residual checks


def log_weighted_sq_norm(f2: np.ndarray, two_s_phi: np.ndarray, w: np.ndarray) -> float:
    """log of sum(w * f2 * exp(two_s_phi)); -inf when the sum is zero."""
    b = np.broadcast_to(w * f2, np.broadcast_shapes(np.shape(f2), np.shape(two_s_phi), np.shape(w)))
    if not np.any(b):
        return -math.inf
    return float(logsumexp(np.broadcast_to(two_s_phi, b.shape), b=b))


def _ratio(log_num: float, log_den: float) -> float:
    if log_num == -math.inf:
        return 0.0
    if log_den == -math.inf:
        return math.inf
    return math.exp(log_num - log_den)


def carleman_grid(params: CarlemanParams, h, dt: float) -> Grid:
    """Grid whose axial extent is exactly [-L, L] and time axis [0, T].

    ``h`` and ``dt`` are upper bounds; the actual steps tile the extents.
    """
    cs = params.cross_section
    hs = np.atleast_1d(np.asarray(h, float))
    if hs.size == 1:
        hs = np.repeat(hs, cs.n)
    steps = [(b - a) / math.ceil((b - a) / hk - 1e-9) for a, b, hk in zip(cs.lower, cs.upper, hs[:-1])]
    steps.append(2 * params.L / math.ceil(2 * params.L / hs[-1] - 1e-9))
    dts = params.T / math.ceil(params.T / dt - 1e-9)
    return build_grid(cs, params.L, params.T, steps, dts)


def _space_time_weights(field: SpaceTimeField) -> np.ndarray:
    g = field.grid
    ws = [trapezoid_weights(field.times.size, field.dt)] + [trapezoid_weights(m, h) for m, h in zip(g.shape, g.spacing)]
    out = ws[0]
    for w in ws[1:]:
        out = np.multiply.outer(out, w)
    return out


def _phi_space_time(field: SpaceTimeField, params: CarlemanParams) -> np.ndarray:
    g = field.grid
    a = np.asarray(params.a_prime)
    mesh = g.mesh()
    r2 = sum((x - params.delta * ak) ** 2 for x, ak in zip(mesh[:-1], a))
    sp = r2 - mesh[-1] ** 2
    tt = field.times.reshape((-1,) + (1,) * g.n)
    return np.exp(params.gamma * (sp[None] - tt ** 2))


def second_difference(a: np.ndarray, h: float, axis: int) -> np.ndarray:
    """Centred second difference, one-sided second-order at the two ends."""
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    out[1:-1] = (a[2:] - 2 * a[1:-1] + a[:-2]) / h ** 2
    out[0] = (2 * a[0] - 5 * a[1] + 4 * a[2] - a[3]) / h ** 2
    out[-1] = (2 * a[-1] - 5 * a[-2] + 4 * a[-3] - a[-4]) / h ** 2
    return np.moveaxis(out, 0, axis)


def _check_membership(v: SpaceTimeField, params: CarlemanParams, tol: float):
    g = v.grid
    if not (math.isclose(g.L_sim, params.L, rel_tol=1e-9) and math.isclose(v.times[0], -params.T, rel_tol=1e-9)
            and math.isclose(v.times[-1], params.T, rel_tol=1e-9)):
        raise MembershipError("v must be sampled on [-L, L] axially and [-T, T] in time")
    vals = v.values
    scale = float(np.max(np.abs(vals)))
    if scale == 0:
        return
    grads = [np.gradient(vals, v.dt, axis=0, edge_order=2)] + [
        np.gradient(vals, h, axis=q + 1, edge_order=2) for q, h in enumerate(g.spacing)]
    worst = 0.0
    for arr in [vals] + grads:
        for ax in (0, vals.ndim - 1):
            for end in (0, -1):
                worst = max(worst, float(np.max(np.abs(np.take(arr, end, axis=ax)))))
    if worst > tol * scale:
        raise MembershipError(f"v not in the test space: worst trace magnitude {worst:.3g} "
                              f"at x_n = +-L or t = +-T (relative {worst / scale:.3g})")


@dataclass(frozen=True)
class CarlemanResidual:
    s: float
    lhs: float
    rhs_interior: float
    rhs_boundary: float
    ratio: float
    log_lhs: float
    log_rhs_interior: float
    log_rhs_boundary: float

    def as_row(self) -> tuple:
        return (self.s, self.lhs, self.rhs_interior, self.rhs_boundary, self.ratio)


def _apply_operator(v: SpaceTimeField, c: ScalarField, R) -> np.ndarray:
    g = v.grid
    vals = v.values
    Av = second_difference(vals, v.dt, 0)
    cvals = c.values[None]
    for q, h in enumerate(g.spacing):
        ax = q + 1
        dc = np.gradient(c.values, h, axis=q, edge_order=2)[None]
        Av -= cvals * second_difference(vals, h, ax) + dc * np.gradient(vals, h, axis=ax, edge_order=2)
    if R is not None:
        # R = (b_t, b_1, ..., b_n, q): first-order coefficients, broadcastable
        steps = (v.dt,) + g.spacing
        for ax, b in enumerate(R[:-1]):
            if b is not None:
                Av += np.asarray(b) * np.gradient(vals, steps[ax], axis=ax, edge_order=2)
        if R[-1] is not None:
            Av += np.asarray(R[-1]) * vals
    return Av


def _boundary_logs(vals, grads, two_phi_fn, field: SpaceTimeField):
    """log surface integrals of |v|^2 and |grad v|^2 weighted by exp(2 s phi), per face."""
    g = field.grid
    steps = (field.dt,) + g.spacing
    sizes = vals.shape
    faces = []
    for ax in range(vals.ndim):
        ws = [trapezoid_weights(sizes[k], steps[k]) for k in range(vals.ndim) if k != ax]
        w = ws[0]
        for wk in ws[1:]:
            w = np.multiply.outer(w, wk)
        for end in (0, -1):
            v2 = np.take(vals, end, axis=ax) ** 2
            gr2 = sum(np.take(d, end, axis=ax) ** 2 for d in grads)
            faces.append((ax, end, v2, gr2, w))
    return faces


def carleman_residual_sweep(v: SpaceTimeField, c: ScalarField, params: CarlemanParams, s_values,
                            R=None, tol: float = 1e-8) -> list[CarlemanResidual]:
    """Both sides of the weighted estimate for each s in ``s_values``.

    lhs = s^3 ||e^{s phi} v||^2 + s ||e^{s phi} grad_{x,t} v||^2 over Q_L,
    rhs_interior = ||e^{s phi} A v||^2 with A v = v_tt - div(c grad v) + R v,
    rhs_boundary = the same s-weighted combination as lhs on the boundary of Q_L.
    """
    _check_membership(v, params, tol)
    if c.grid != v.grid:
        raise MembershipError("c and v must share the spatial grid")
    g = v.grid
    vals = v.values
    steps = (v.dt,) + g.spacing
    grads = [np.gradient(vals, h, axis=ax, edge_order=2) for ax, h in enumerate(steps)]
    Av = _apply_operator(v, c, R)
    w = _space_time_weights(v)
    ph = _phi_space_time(v, params)
    v2 = vals ** 2
    g2 = sum(d ** 2 for d in grads)
    a2 = Av ** 2
    faces = _boundary_logs(vals, grads, None, v)
    out = []
    for s in s_values:
        s = float(s)
        if not s > 0:
            raise ParameterError("s must be positive")
        tsp = 2 * s * ph
        l0 = log_weighted_sq_norm(v2, tsp, w)
        l1 = log_weighted_sq_norm(g2, tsp, w)
        log_lhs = np.logaddexp(3 * math.log(s) + l0, math.log(s) + l1)
        log_ri = log_weighted_sq_norm(a2, tsp, w)
        blogs = []
        for ax, end, fv2, fg2, fw in faces:
            fphi = np.take(tsp, end, axis=ax)
            blogs.append(3 * math.log(s) + log_weighted_sq_norm(fv2, fphi, fw))
            blogs.append(math.log(s) + log_weighted_sq_norm(fg2, fphi, fw))
        log_rb = float(logsumexp(blogs)) if any(b > -math.inf for b in blogs) else -math.inf
        log_rhs = np.logaddexp(log_ri, log_rb)
        out.append(CarlemanResidual(
            s=s, lhs=_safe_exp(log_lhs), rhs_interior=_safe_exp(log_ri), rhs_boundary=_safe_exp(log_rb),
            ratio=_ratio(float(log_lhs), float(log_rhs)), log_lhs=float(log_lhs),
            log_rhs_interior=float(log_ri), log_rhs_boundary=float(log_rb)))
    return out


def _safe_exp(x: float) -> float:
    if x == -math.inf:
        return 0.0
    return math.exp(x) if x < 709.0 else math.inf


def carleman_residual(v: SpaceTimeField, c: ScalarField, params: CarlemanParams, s: float | None = None,
                      R=None) -> CarlemanResidual:
    s = params.s if s is None else s
    if s is None:
        raise ParameterError("s must be given either directly or via params.s")
    return carleman_residual_sweep(v, c, params, [s], R)[0]


@dataclass(frozen=True)
class TransportCheck:
    s: float
    lhs: float
    rhs: float
    ratio: float
    log_lhs: float
    log_rhs: float


def transport_weighted_sweep(v: ScalarField, theta0: ScalarField, s_values, params: CarlemanParams,
                             collar_width: float, tol: float = 1e-12) -> list[TransportCheck]:
    """s ||e^{s phi(.,0)} v||^2 against ||e^{s phi(.,0)} div((grad theta0) v)||^2.

    ``v`` must vanish outside omega* x (-L, L), omega* = {dist(x', wall) > w/2}.
    """
    g = v.grid
    if theta0.grid != g:
        raise MembershipError("v and theta0 must share the grid")
    mesh = g.mesh()
    inside = (g.cross_section.wall_distance(*mesh[:-1]) > 0.5 * collar_width) & (np.abs(mesh[-1]) < params.L)
    vals = v.values
    scale = float(np.max(np.abs(vals)))
    outside = float(np.max(np.abs(np.where(inside, 0.0, vals))))
    if scale > 0 and outside > tol * scale:
        raise MembershipError(f"support check failed: |v| = {outside:.3g} outside omega* x (-L, L)")
    Pv = np.zeros(g.shape)
    for q, h in enumerate(g.spacing):
        dth = np.gradient(theta0.values, h, axis=q, edge_order=2)
        Pv += np.gradient(dth * vals, h, axis=q, edge_order=2)
    a = np.asarray(params.a_prime)
    r2 = sum((x - params.delta * ak) ** 2 for x, ak in zip(mesh[:-1], a))
    ph = np.exp(params.gamma * (r2 - mesh[-1] ** 2))
    ph = np.broadcast_to(ph, g.shape)
    ws = [trapezoid_weights(m, h) for m, h in zip(g.shape, g.spacing)]
    w = ws[0]
    for wk in ws[1:]:
        w = np.multiply.outer(w, wk)
    out = []
    for s in s_values:
        s = float(s)
        ll = math.log(s) + log_weighted_sq_norm(vals ** 2, 2 * s * ph, w)
        lr = log_weighted_sq_norm(Pv ** 2, 2 * s * ph, w)
        out.append(TransportCheck(s, _safe_exp(ll), _safe_exp(lr), _ratio(ll, lr), ll, lr))
    return out


def transport_weighted_check(v: ScalarField, theta0: ScalarField, s: float, params: CarlemanParams,
                             collar_width: float) -> float:
    """Ratio lhs/rhs of the weighted first-order estimate (0 when v = 0)."""
    return transport_weighted_sweep(v, theta0, [s], params, collar_width)[0].ratio


def time_trace_check(z: SpaceTimeField, s: float) -> tuple[float, float]:
    """(||z(.,0)||^2, 2 (s ||z||^2 + ||dz/dt||^2 / s)) over the sampled cylinder."""
    if not s > 0:
        raise ParameterError("s must be positive")
    g = z.grid
    w = _space_time_weights(z)
    ws = [trapezoid_weights(m, h) for m, h in zip(g.shape, g.spacing)]
    wx = ws[0]
    for wk in ws[1:]:
        wx = np.multiply.outer(wx, wk)
    z0 = z.level(0.0)
    dz = np.gradient(z.values, z.dt, axis=0, edge_order=2)
    lhs = float(np.sum(wx * z0 ** 2))
    rhs = 2 * (s * float(np.sum(w * z.values ** 2)) + float(np.sum(w * dz ** 2)) / s)
    return lhs, rhs


def rho_s(x, s: float, params: CarlemanParams, gamma: float | None = None) -> float:
    """Integral over (-T, T) of exp(-2 s phi(x, 0) (1 - exp(-gamma t^2))), abs tol 1e-10."""
    if s < 0:
        raise ParameterError("s must be nonnegative")
    gam = params.gamma if gamma is None else gamma
    T = params.T
    if s == 0:
        return 2 * T
    p0 = float(np.exp(gam * psi(np.asarray(x, float), 0.0, params.delta, params.a_prime)))
    k = 2 * s * p0

    def f(t):
        return math.exp(-k * -math.expm1(-gam * t * t))

    width = 1.0 / math.sqrt(max(k * gam, 1e-300))
    pts = [p for p in (width, 4 * width, 16 * width) if p < T]
    half, _ = spi.quad(f, 0.0, T, epsabs=5e-11, epsrel=1e-12, limit=500, points=pts or None)
    return 2 * half


def random_test_functions(params: CarlemanParams, grid: Grid, n: int, seed: int = 0,
                          power: int = 6) -> list[SpaceTimeField]:
    """``n`` smooth bumps compactly supported inside Q_L, sampled on t in [-T, T].

    Each bump is a product of cos^power profiles with random centre and
    half-width per axis, chosen so the support stays inside the open
    cylinder (-L, L) x (-T, T) and inside the cross-section.
    """
    rng = np.random.default_rng(seed)
    times = grid.symmetric_times
    axes = list(grid.axes[:-1]) + [grid.axes[-1], times]
    bounds = [(a, b) for a, b in zip(grid.cross_section.lower, grid.cross_section.upper)]
    bounds += [(-params.L, params.L), (-params.T, params.T)]
    out = []
    for _ in range(n):
        factors = []
        for x, (a, b) in zip(axes, bounds):
            span = b - a
            hw = rng.uniform(0.15, 0.35) * span
            c0 = rng.uniform(a + hw + 0.02 * span, b - hw - 0.02 * span)
            r = (x - c0) / hw
            factors.append(np.where(np.abs(r) < 1, np.cos(0.5 * np.pi * r) ** power, 0.0))
        v = factors[-1].reshape((-1,) + (1,) * grid.n)
        for q, f in enumerate(factors[:-1]):
            shape = [1] * grid.n
            shape[q] = -1
            v = v * f.reshape(shape)
        out.append(SpaceTimeField(grid, np.ascontiguousarray(v), times))
    return out
