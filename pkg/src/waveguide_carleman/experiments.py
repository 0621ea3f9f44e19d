"""Command runners behind the CLI.

Each runner takes a parsed :class:`ExperimentConfig` and an output directory,
writes its artifacts there and returns a JSON-ready summary. A runner raises
a :class:`WaveguideError` subclass when the experiment itself fails (for
example an inadmissible input), after writing whatever report it produced.
"""
from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from . import plots, profiles
from .admissibility import check_conductivity, check_initial
from .carleman import (floor_LT_margin, vertex_margin, carleman_grid, carleman_residual_sweep, floor_margin,
                       pseudoconvexity_margin, random_test_functions, rho_s, time_trace_check,
                       transport_weighted_sweep)
from .config import ExperimentConfig
from .errors import AdmissibilityError, WaveguideError
from .forward import observation_norm, solve_forward
from .grid import Grid, SpaceTimeField, sobolev_norm
from .inverse import (CHAIN_COLUMNS, STABILITY_COLUMNS, chain_diagnostics, reconstruct_conductivity,
                      restrict_axial, second_time_derivative_at_zero, second_time_derivative_from_solution,
                      stability_sweep)
from .io import save_field, write_csv, write_json

log = logging.getLogger(__name__)


class CheckFailed(WaveguideError):
    """A check command completed but at least one condition failed."""
    code = "check_failed"


def _grid_summary(g: Grid) -> dict:
    return {"shape": g.shape, "spacing": g.spacing, "dt": g.dt, "nt": g.nt, "L_sim": g.L_sim, "T": g.T}


# ---------------------------------------------------------------------------
# check


def run_check(cfg: ExperimentConfig, out: Path) -> dict:
    """Admissibility of c, c*, (theta0, theta1) and of every c + eps p."""
    p = cfg.selection.params
    adm = cfg.admissibility_params
    g = cfg.solver_grid()
    c, c_star = cfg.field("c", g), cfg.field("c_star", g)
    th0, th1 = cfg.field("theta0", g), cfg.field("theta1", g)
    report = check_conductivity(c, c_star, adm) + check_initial(th0, th1, adm, L=p.L, delta=p.delta)
    perturbed = {}
    eps_max = max(cfg.run["eps"])
    for name in cfg.perturbations:
        pf = cfg.field(name, g)
        rep = check_conductivity(c + pf * eps_max, c_star, adm)
        perturbed[name] = {"eps": eps_max, **rep.to_dict()}
        if not rep.passed:
            report = report + type(rep)(tuple(
                type(k)(f"{name}:{k.name}", k.passed, k.margin, k.witness, k.detail) for k in rep.failures()))
    summary = {"grid": _grid_summary(g), "params": p.to_dict(), **report.to_dict(), "perturbed": perturbed}
    write_json(out / "check.json", summary)
    if not report.passed:
        names = ", ".join(k.name for k in report.failures())
        raise CheckFailed(f"admissibility failed: {names} (see {out / 'check.json'})")
    return summary


# ---------------------------------------------------------------------------
# select

LADDER_COLUMNS = ("step", "delta", "margin_floor", "margin_vertex", "margin_floor_LT", "accepted")


def selection_ladder(cfg: ExperimentConfig) -> list[tuple]:
    """Margins of the three selection inequalities on every rung up to the chosen delta."""
    a, k, geo = cfg.admissibility, cfg.carleman, cfg.geometry
    chosen = cfg.selection.params.delta
    start = k["delta_step"] if k["delta_start"] is None else k["delta_start"]
    ap = np.asarray(a["a_prime"], float)
    rows = []
    j = 0
    while True:
        d = start + j * k["delta_step"]
        m = (floor_margin(d, cfg.cross_section, geo["ell"], ap, a["a0"], a["c_m"], a["c_M"]),
             vertex_margin(d, cfg.cross_section, geo["ell"], ap, a["c_m"], k["nu"]),
             floor_LT_margin(d, cfg.cross_section, geo["ell"], ap, a["a0"], a["c_m"], a["c_M"], k["nu"]))
        rows.append((j, float(d)) + tuple(float(v) for v in m) + (int(min(m) > 0),))
        if d >= chosen - 1e-12 * max(1.0, chosen):
            return rows
        j += 1


def run_select(cfg: ExperimentConfig, out: Path) -> dict:
    sel = cfg.selection
    p = sel.params
    write_csv(out / "ladder.csv", LADDER_COLUMNS, selection_ladder(cfg))
    n = 201
    xn = np.linspace(-p.L, p.L, n)
    t = np.linspace(-p.T, p.T, n)
    r2max = max(float(np.sum((np.asarray(v) - p.delta * np.asarray(p.a_prime)) ** 2))
                for v in _corners(p.cross_section))
    log_phi_max = p.gamma * (r2max - xn[:, None] ** 2 - t[None, :] ** 2)
    plots.margin_map(out / "weight_margins.svg", xn, t, log_phi_max, p.L, p.T, p.eps, math.log(p.d_tilde))
    summary = {**sel.to_dict(), "inner_minimizer": sel.margins.inner_minimizer,
               "weight_bounds_pass": sel.margins.passed}
    write_json(out / "select.json", summary)
    return summary


def _corners(cs):
    grids = np.meshgrid(*[(a, b) for a, b in zip(cs.lower, cs.upper)], indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=-1)


# ---------------------------------------------------------------------------
# verify-carleman


def random_time_profiles(grid: Grid, n: int, seed: int = 0, modes: int = 4) -> list[SpaceTimeField]:
    """``n`` smooth fields on [-T, T]: random trigonometric polynomials in t times random bumps."""
    rng = np.random.default_rng(seed)
    t = grid.symmetric_times
    T = grid.T
    out = []
    for _ in range(n):
        k = np.arange(modes + 1)
        a, b = rng.normal(size=modes + 1), rng.normal(size=modes + 1)
        shift = rng.uniform(-T, T)
        arg = np.pi * np.outer(t - shift, k) / T
        prof = np.cos(arg) @ a + np.sin(arg) @ b
        center = [rng.uniform(lo, hi) for lo, hi in zip(grid.cross_section.lower, grid.cross_section.upper)]
        center.append(rng.uniform(-0.5 * grid.L_sim, 0.5 * grid.L_sim))
        widths = [0.5 * (hi - lo) for lo, hi in zip(grid.cross_section.lower, grid.cross_section.upper)]
        widths.append(0.5 * grid.L_sim)
        space = profiles.bump(grid, center, widths, power=2).values
        out.append(SpaceTimeField(grid, prof.reshape((-1,) + (1,) * grid.n) * space[None], t))
    return out


def transport_test_function(grid: Grid, collar_width: float, L: float):
    """Bump centred in the cross-section, supported in omega* x (-L/2, L/2)."""
    cs = grid.cross_section
    center = [0.5 * (a + b) for a, b in zip(cs.lower, cs.upper)] + [0.0]
    hw = [0.5 * (b - a) - 0.5 * collar_width - 0.05 * (b - a) for a, b in zip(cs.lower, cs.upper)] + [0.4 * L]
    return profiles.bump(grid, center, hw)


def _knee_monotone(ratios) -> tuple[int, bool]:
    """Index of the largest entry and whether the entries strictly decrease after it.

    Pass log ratios: the ratios themselves underflow to zero at large s.
    """
    r = np.asarray(ratios, float)
    k = int(np.argmax(r))
    return k, bool(np.all(np.diff(r[k:]) < 0))


def run_verify_carleman(cfg: ExperimentConfig, out: Path) -> dict:
    """Pseudoconvexity, weighted-estimate residuals and the auxiliary inequalities."""
    sel = cfg.selection
    p = sel.params
    k = cfg.carleman
    adm = cfg.admissibility_params
    seed = cfg.run["seed"]
    summary: dict = {"params": p.to_dict()}

    # pseudoconvexity on the test grid
    tg = carleman_grid(p, k["test_h"] or cfg.geometry["h"], k["test_dt"] or min(k["test_h"] or cfg.geometry["h"]))
    c_t = cfg.field("c", tg)
    pc = pseudoconvexity_margin(c_t, p, n_x=k["n_x"], n_xi=k["n_xi"], seed=seed)
    summary["pseudoconvexity"] = {**pc.to_dict(), "passed": pc.min_A2 > 0 and pc.min_J > 0 and pc.bound_holds}
    write_json(out / "pseudoconvexity.json", summary["pseudoconvexity"])

    # weighted residual over random bumps
    s_vals = [float(s) for s in k["s_values"]]
    vs = random_test_functions(p, tg, k["n_test_functions"], seed=seed)
    ratios = np.array([[r.ratio for r in carleman_residual_sweep(v, c_t, p, s_vals)] for v in vs])
    rows = [(i, s, float(ratios[i, j])) for i in range(len(vs)) for j, s in enumerate(s_vals)]
    write_csv(out / "carleman_ratios.csv", ("function", "s", "ratio"), rows)
    per_s = ratios.max(axis=0)
    plots.ratio_plot(out / "carleman_ratios.svg", s_vals, ratios, "weighted estimate: lhs / rhs")
    finite = bool(np.all(np.isfinite(per_s)))
    summary["carleman"] = {"s_values": s_vals, "max_ratio_per_s": per_s.tolist(),
                           "max_ratio": float(per_s.max()), "finite": finite,
                           "variation": float(per_s.max() / per_s.min()) if finite and per_s.min() > 0 else math.inf}

    # auxiliary inequalities on the solver grid
    aux = [float(s) for s in (k["aux_s_values"] or np.logspace(0, 6, 25))]
    g = cfg.solver_grid()
    th0 = cfg.field("theta0", g)
    v = transport_test_function(g, adm.collar_width, p.L)
    tr = transport_weighted_sweep(v, th0, aux, p, adm.collar_width)
    log_ratio = [r.log_lhs - r.log_rhs for r in tr]
    write_csv(out / "transport.csv", ("s", "log_lhs", "log_rhs", "log_ratio", "ratio"),
              [(r.s, r.log_lhs, r.log_rhs, lr, r.ratio) for r, lr in zip(tr, log_ratio)])
    knee, mono = _knee_monotone(log_ratio)
    summary["transport"] = {"knee_s": tr[knee].s, "monotone_after_knee": mono}

    x0 = np.asarray(sel.margins.inner_minimizer, float)
    rho = [(s, rho_s(x0, s, p), rho_s(x0, s, p) / (2 * p.T)) for s in aux]
    write_csv(out / "rho.csv", ("s", "rho", "fraction_of_2T"), rho)
    hit = [s for s, _, f in rho if f < 0.01]
    summary["rho"] = {"point": x0.tolist(), "first_s_below_1pct": hit[0] if hit else None}

    s_min = 1.0 / (2 * p.T)
    zs = random_time_profiles(tg, 50, seed=seed)
    tt_rows = []
    for i, z in enumerate(zs):
        for s in [s_min] + [s for s in aux if s >= s_min]:
            lhs, rhs = time_trace_check(z, s)
            tt_rows.append((i, s, lhs, rhs, int(lhs <= rhs * (1 + 1e-12))))
    write_csv(out / "time_trace.csv", ("function", "s", "lhs", "rhs", "holds"), tt_rows)
    summary["time_trace"] = {"checks": len(tt_rows), "violations": sum(1 - r[-1] for r in tt_rows)}
    write_json(out / "verify.json", summary)
    return summary


# ---------------------------------------------------------------------------
# forward


def run_forward(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.selection.params
    adm = cfg.admissibility_params
    g = cfg.solver_grid()
    c, th0, th1 = cfg.field("c", g), cfg.field("theta0", g), cfg.field("theta1", g)
    sol = solve_forward(c, th0, th1, c_M=adm.c_M, L_obs=p.L)
    every = cfg.run["trace_every"]
    tr = sol.trace
    rows = ((float(tr.times[k]), w, float(tr.xn[j]), float(tr.data[i, k, j]))
            for i, w in enumerate(("lower", "upper"))
            for k in range(0, tr.times.size, every) for j in range(0, tr.xn.size, every))
    write_csv(out / "trace.csv", ("t", "wall", "xn", "normal_derivative"), rows)
    write_csv(out / "energy.csv", ("t", "energy"), zip(sol.energy_times.tolist(), sol.energy.tolist()))
    summary = {"grid": _grid_summary(g), "energy_drift": sol.energy_drift,
               "observation_norm": observation_norm(tr), "trace_every": every, "L_obs": p.L}
    write_json(out / "forward.json", summary)
    return summary


# ---------------------------------------------------------------------------
# reconstruct


def run_reconstruct(cfg: ExperimentConfig, out: Path) -> dict:
    p = cfg.selection.params
    adm = cfg.admissibility_params
    g = cfg.solver_grid()
    c, c_star, th0 = cfg.field("c", g), cfg.field("c_star", g), cfg.field("theta0", g)
    if cfg.run["w_source"] == "solver":
        sol = solve_forward(c, th0, cfg.field("theta1", g), c_M=adm.c_M, L_obs=0, keep_levels=range(5))
        w = second_time_derivative_from_solution(sol)
    else:
        w = second_time_derivative_at_zero(c, th0)
    rec = reconstruct_conductivity(w, th0, c_star, p, adm, method=cfg.run["method"], heun=cfg.run["heun"])
    save_field(out / "reconstruction.csv", rec.field)
    truth = restrict_axial(c, p.ell)
    diff = rec.field - truth
    summary = {"method": rec.method, "w_source": cfg.run["w_source"], "window": rec.window,
               "max_abs_error": float(np.max(np.abs(diff.values))),
               "h1_error": sobolev_norm(diff, 1), "h1_truth": sobolev_norm(truth, 1)}
    write_json(out / "reconstruct.json", summary)
    return summary


# ---------------------------------------------------------------------------
# sweep


def run_sweep(cfg: ExperimentConfig, out: Path) -> dict:
    """Stability sweep along every configured perturbation, sharing one base solve."""
    p = cfg.selection.params
    adm = cfg.admissibility_params
    names = cfg.perturbations
    if not names:
        raise AdmissibilityError("sweep needs at least one perturbation (p = ...) in [fields]")
    g = cfg.solver_grid()
    c, th0, th1 = cfg.field("c", g), cfg.field("theta0", g), cfg.field("theta1", g)
    rep = check_conductivity(c, cfg.field("c_star", g), adm) + check_initial(th0, th1, adm, L=p.L)
    if not rep.passed:
        raise AdmissibilityError("inputs not admissible: " + ", ".join(k.name for k in rep.failures()))
    chain_s = cfg.carleman["chain_s"]
    every = cfg.carleman["chain_every"]
    base = solve_forward(c, th0, th1, c_M=adm.c_M, L_obs=p.L, keep_every=every if chain_s else None)
    kappa, eps = cfg.run["kappa"], cfg.run["eps"]
    sweeps = {}
    pfields = {}
    for name in names:
        pf = cfg.field(name, g)
        pfields[name] = pf
        sw = stability_sweep(c, pf, eps, th0, p, adm=adm, kappa=kappa, theta1=th1, base=base)
        sweeps[name] = sw
        write_csv(out / f"stability_{name}.csv", STABILITY_COLUMNS, (r.as_row() for r in sw.records))
    plots.stability_plot(out / "stability.svg", sweeps, kappa)
    Cs = [sw.C for sw in sweeps.values()]
    summary = {name: sw.to_dict() | {"holds_by_construction": sw.holds_by_construction(),
                                     "monotone": sw.monotone()} for name, sw in sweeps.items()}
    summary = {"directions": summary, "kappa": kappa, "C_spread": max(Cs) / min(Cs) if min(Cs) > 0 else math.inf}
    if chain_s:
        first = names[0]
        e = max(eps)
        sol1 = solve_forward(c + pfields[first] * e, th0, th1, c_M=adm.c_M, L_obs=p.L, keep_every=every)
        rows = []
        for s in chain_s:
            rows.extend((float(s),) + r.as_row() for r in chain_diagnostics(sol1, base, p, float(s), every))
        write_csv(out / "chain.csv", ("s",) + CHAIN_COLUMNS, rows)
        summary["chain"] = {"direction": first, "eps": e, "s_values": list(chain_s)}
    write_json(out / "sweep.json", summary)
    return summary


RUNNERS = {
    "check": run_check,
    "select": run_select,
    "verify-carleman": run_verify_carleman,
    "forward": run_forward,
    "reconstruct": run_reconstruct,
    "sweep": run_sweep,
}
