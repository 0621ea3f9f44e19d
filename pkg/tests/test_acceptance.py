"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Criteria 3, 5 and 6 share one ``verify-carleman`` run on configs/reference.ini;
criterion 8 runs the full reference sweep plus a half-step check of C
(about five minutes on one core).
"""
import filecmp
import math
import time
from pathlib import Path

import numpy as np
import pytest

from waveguide_carleman import profiles
from waveguide_carleman.admissibility import AdmissibilityParams
from waveguide_carleman.carleman import (vertex_margin, carleman_grid, floor_margin, pseudoconvexity_margin,
                                         select_params, weight_bounds_check)
from waveguide_carleman.cli import main
from waveguide_carleman.config import COMMANDS
from waveguide_carleman.experiments import run_sweep, run_verify_carleman
from waveguide_carleman.forward import solve_forward
from waveguide_carleman.grid import build_grid
from waveguide_carleman.inverse import (reconstruct_conductivity, restrict_axial, second_time_derivative_at_zero,
                                        stability_sweep)

from test_forward import _eigen_error
from test_inverse import C_EXPR, TH_EXPR, _fields

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def verify_summary(reference_config, tmp_path_factory):
    out = tmp_path_factory.mktemp("verify")
    t0 = time.perf_counter()
    summary = run_verify_carleman(reference_config, out)
    return summary, time.perf_counter() - t0


@pytest.fixture(scope="module")
def selection_1(unit_interval):
    t0 = time.perf_counter()
    sel = select_params(unit_interval, 1.0, (1.0,), 8.0, 0.25, 1.0, nu=0.1)
    return sel, time.perf_counter() - t0


def test_criterion_1_parameter_selection(selection_1, unit_interval, record_criterion):
    sel, elapsed = selection_1
    p = sel.params
    checks = {
        "golden delta 11": p.delta == 11.0,
        "floor margin > 0": sel.floor > 0 and floor_margin(p.delta, unit_interval, 1.0, (1.0,), 8.0, 0.25, 1.0) > 0,
        "vertex margin > 0": sel.vertex > 0,
        "ladder minimal": vertex_margin(p.delta - 1, unit_interval, 1.0, (1.0,), 0.25, 0.1) < 0,
        "beta >= (1-c_m)/c_m ell^2": p.beta >= (1 - 0.25) / 0.25 * 1.0 ** 2,
        "d_tilde < d": p.d_tilde < p.d,
        "L = T = g + nu": p.L == p.T == pytest.approx(math.sqrt(22.0) + 0.1, abs=1e-15),
        "runtime < 1 s": elapsed < 1.0,
    }
    record_criterion(1, checks, f"delta={p.delta:g} floor={sel.floor:.4g} vertex={sel.vertex:.4g} L=T={p.L:.6f} "
                                f"({elapsed:.2f} s)")


def test_criterion_2_weight_bounds(selection_1, record_criterion):
    p = selection_1[0].params
    t0 = time.perf_counter()
    m = weight_bounds_check(p, 201)
    elapsed = time.perf_counter() - t0
    x0 = tuple(float(v) for v in m.inner_minimizer)
    checks = {
        "inner_floor margin >= 0": m.inner_floor >= 0,
        "inner_floor equality at minimizer": m.inner_floor == 0.0 and x0[0] == 1.0 and abs(x0[1]) == p.ell,
        "time_slab margin > 0": m.time_slab > 0,
        "axial_slab margin > 0": m.axial_slab > 0,
        "runtime < 5 s": elapsed < 5.0,
    }
    record_criterion(2, checks, f"inner_floor={m.inner_floor:.3g} at {x0} time_slab={m.time_slab:.4g} axial_slab={m.axial_slab:.4g} ({elapsed:.2f} s)")


def test_criterion_3_pseudoconvexity(verify_summary, reference_params, record_criterion):
    pc = verify_summary[0]["pseudoconvexity"]
    g = carleman_grid(reference_params, (0.1, 0.5), 0.5)
    t0 = time.perf_counter()
    flat = pseudoconvexity_margin(profiles.constant(g, 1.5), reference_params, n_x=50, n_xi=64)
    checks = {
        "min A2 > 0": pc["min_A2"] > 0,
        "min J > 0": pc["min_J"] > 0,
        ">= 1e4 samples": pc["n_samples"] >= 10_000,
        "bound <= J (1e-6 rel)": pc["bound_holds"] and pc["min_gap"] >= -1e-6 * pc["scale"],
        "constant c bound < 0": flat.min_bound < 0,
    }
    record_criterion(3, checks, f"min A2={pc['min_A2']:.4g} min J={pc['min_J']:.4g} samples={pc['n_samples']} "
                                f"constant-c bound={flat.min_bound:.3g} ({time.perf_counter() - t0:.1f} s extra)")


def test_criterion_4_forward_solver(reference_config, reference_adm, unit_interval, record_criterion):
    t0 = time.perf_counter()
    errs = [_eigen_error(h)[0] for h in (0.1, 0.05, 0.025)]
    orders = np.log2(np.array(errs[:-1]) / errs[1:])

    cfg = reference_config
    g = cfg.solver_grid()
    sol = solve_forward(cfg.field("c", g), cfg.field("theta0", g), cfg.field("theta1", g),
                        c_M=reference_adm.c_M, L_obs=cfg.selection.params.L)

    gl = build_grid(unit_interval, 10.0, 2.5, (0.02, 0.05), 0.005)
    c = profiles.linear(gl, 0.95, 2.0)
    lk = solve_forward(c, profiles.bump(gl, (0.5, 0.0), (0.4, 2.0)), profiles.zero(gl), L_obs=0, keep_levels=[-1])
    uT = lk.level(-1)
    outside = np.abs(gl.axes[-1]) > 2.0 + gl.T * math.sqrt(float(c.values.max()))
    leak = float(np.max(np.abs(uT[:, outside])) / np.max(np.abs(uT)))
    elapsed = time.perf_counter() - t0
    checks = {
        "eigen order >= 1.9": bool(np.all(orders >= 1.9)),
        "energy drift <= 1e-6": sol.energy_drift <= 1e-6,
        "leakage <= 1e-10": leak <= 1e-10,
        "runtime < 2 min": elapsed < 120,
    }
    record_criterion(4, checks, f"orders={np.round(orders, 3).tolist()} drift={sol.energy_drift:.2e} "
                                f"leak={leak:.2e} ({elapsed:.1f} s)")


def test_criterion_5_carleman_residual(verify_summary, record_criterion):
    k = verify_summary[0]["carleman"]
    s = k["s_values"]
    per_s = np.array(k["max_ratio_per_s"])
    checks = {
        "20 functions, one decade of s": s[-1] / s[0] >= 10,
        "finite": k["finite"] and bool(np.all(np.isfinite(per_s))),
        "variation < 10x": k["variation"] < 10,
    }
    record_criterion(5, checks, f"s in [{s[0]:g}, {s[-1]:g}] max ratio={k['max_ratio']:.4g} "
                                f"variation={k['variation']:.3g}x")


def test_criterion_6_auxiliary_inequalities(verify_summary, reference_config, record_criterion):
    summary, elapsed = verify_summary
    tt, tr, rho = summary["time_trace"], summary["transport"], summary["rho"]
    checks = {
        "time trace: 50 z, zero violations": tt["checks"] >= 50 and tt["violations"] == 0,
        "transport monotone after knee": tr["monotone_after_knee"],
        "rho < 1% of 2T": rho["first_s_below_1pct"] is not None,
        "verify run < 3.5 min": elapsed < 210,
    }
    assert reference_config.carleman["n_test_functions"] == 20
    record_criterion(6, checks, f"time-trace checks={tt['checks']} violations={tt['violations']} "
                                f"knee s={tr['knee_s']:g} rho<1% at s={rho['first_s_below_1pct']} "
                                f"(verify run {elapsed:.0f} s)")


def test_criterion_7_reconstruction(unit_interval, reference_params, record_criterion):
    adm = AdmissibilityParams(0.9, 3.2, 1.8, (1.0,), 1e12, 0.5, 0.3)
    t0 = time.perf_counter()
    g = build_grid(unit_interval, 4.0, 1.0, (0.02, 0.02), 0.005)
    c, th, _ = _fields(g, C_EXPR, TH_EXPR)
    rec = reconstruct_conductivity(second_time_derivative_at_zero(c, th), th, c, reference_params, adm)
    round_trip = float(np.max(np.abs(rec.field.values - restrict_axial(c, 1.0).values)))
    errs = []
    for h in (0.04, 0.02, 0.01):
        gh = build_grid(unit_interval, 4.0, 1.0, (h, h), h / 4)
        ch, thh, wh = _fields(gh, C_EXPR, TH_EXPR)
        r = reconstruct_conductivity(wh, thh, ch, reference_params, adm, method="upwind")
        errs.append(float(np.max(np.abs(r.field.values - restrict_axial(ch, 1.0).values))))
    orders = np.log2(np.array(errs[:-1]) / errs[1:])
    zero = profiles.zero(g)
    zeros = [reconstruct_conductivity(zero, th, zero, reference_params, adm, method=m).field.values
             for m in ("flux", "upwind")]
    elapsed = time.perf_counter() - t0
    checks = {
        "round trip <= 1e-10": round_trip <= 1e-10,
        "refinement order >= 0.9": bool(np.all(orders >= 0.9)),
        "zero data gives zero": all(np.all(z == 0.0) for z in zeros),
        "runtime < 30 s": elapsed < 30,
    }
    record_criterion(7, checks, f"round trip={round_trip:.2e} orders={np.round(orders, 3).tolist()} "
                                f"({elapsed:.1f} s)")


@pytest.mark.slow
def test_criterion_8_stability(reference_config, tmp_path, record_criterion):
    cfg = reference_config
    t0 = time.perf_counter()
    summary = run_sweep(cfg, tmp_path)
    dirs = summary["directions"]
    Cs = {n: d["C"] for n, d in dirs.items()}
    c_mid = math.sqrt(max(Cs.values()) * min(Cs.values()))

    # C at h/2: kappa < slope, so the largest eps sets C; rerun only that entry
    e_max = max(cfg.run["eps"])
    adm, p = cfg.admissibility_params, cfg.selection.params
    g2 = cfg.solver_grid(refine=2)
    floor_LT, th0, th1 = cfg.field("c", g2), cfg.field("theta0", g2), cfg.field("theta1", g2)
    base = solve_forward(floor_LT, th0, th1, c_M=adm.c_M, L_obs=p.L)
    C_half, argmax_ok = {}, True
    for name in cfg.perturbations:
        rows = [r for r in np.genfromtxt(tmp_path / f"stability_{name}.csv", delimiter=",", names=True)]
        argmax_ok &= max(rows, key=lambda r: r["C_empirical"])["eps"] == e_max
        sw = stability_sweep(floor_LT, cfg.field(name, g2), [e_max], th0, p, adm=adm, kappa=cfg.run["kappa"],
                             theta1=th1, base=base)
        C_half[name] = sw.C
    rel = {n: abs(C_half[n] - Cs[n]) / Cs[n] for n in Cs}
    elapsed = time.perf_counter() - t0
    checks = {
        "slope in [0.8, 1.2]": all(0.8 <= d["slope"] <= 1.2 for d in dirs.values()),
        "R^2 >= 0.9": all(d["r2"] >= 0.9 for d in dirs.values()),
        "C within +-20% across directions": all(abs(C / c_mid - 1) <= 0.2 for C in Cs.values()),
        "bound holds by construction": all(d["holds_by_construction"] for d in dirs.values()),
        "C set by largest eps": argmax_ok,
        "C within 30% at h/2": all(v <= 0.3 for v in rel.values()),
        "runtime < 10 min": elapsed < 600,
    }
    detail = " ".join(f"{n}: slope={d['slope']:.5f} R2={d['r2']:.6f} C={d['C']:.4g} C(h/2)={C_half[n]:.4g}"
                      for n, d in dirs.items())
    record_criterion(8, checks, f"{detail} ({elapsed:.0f} s)")


def test_criterion_9_cli(tmp_path, capsys, record_criterion):
    smoke = CONFIGS / "smoke.ini"
    same = True
    for command in COMMANDS:
        a, b = tmp_path / command / "a", tmp_path / command / "b"
        assert main([command, str(smoke), "-o", str(a), "-q"]) == 0
        assert main([command, str(smoke), "-o", str(b), "-q"]) == 0
        csvs = sorted(q.name for q in a.iterdir() if q.suffix == ".csv")
        _, mismatch, errors = filecmp.cmpfiles(a, b, csvs, shallow=False)
        same &= not mismatch and not errors
    bad = tmp_path / "bad.ini"
    bad.write_text(smoke.read_text().replace("gamma = 2e-4", "gamma_rate = 2e-4"))
    flat = tmp_path / "flat.ini"
    flat.write_text(smoke.read_text().replace("c.slope = 2.0", "c.slope = 0.1"))
    capsys.readouterr()
    codes = {
        "config error -> 2": main(["check", str(bad), "-o", str(tmp_path / "x")]) == 2,
        "missing file -> 2": main(["check", str(tmp_path / "absent.ini")]) == 2,
        "runtime error -> 1": main(["check", str(flat), "-o", str(tmp_path / "y")]) == 1,
    }
    err = capsys.readouterr().err.strip().splitlines()
    checks = {"CSVs byte-identical": same, **codes,
              "one error line each": len(err) == 3 and all(line.startswith("error: ") for line in err)}
    record_criterion(9, checks, f"{len(COMMANDS)} commands run twice; exit codes 2/2/1")
