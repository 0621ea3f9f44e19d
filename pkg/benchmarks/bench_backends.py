"""Time the numba and numpy backends on the three hot kernels.

    python3 benchmarks/bench_backends.py [--h 0.01 0.05] [--steps 400] [--repeat 3]

Each kernel runs once per backend to warm up (numba compiles on first
call), then ``--repeat`` times; the best wall time is reported together
with the largest difference between the two backends' outputs.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from waveguide_carleman import kernels, profiles
from waveguide_carleman.forward import wall_probe
from waveguide_carleman.grid import CrossSection, build_grid


def best_time(fn, repeat: int) -> tuple[float, object]:
    out = fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, nargs=2, default=(0.01, 0.05))
    ap.add_argument("--L-sim", type=float, default=20.0)
    ap.add_argument("--steps", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if not kernels.HAS_NUMBA:
        print("numba is not importable; nothing to compare")
        return 1

    cs = CrossSection.interval(0.0, 1.0)
    dt = 0.9 * min(args.h) / np.sqrt(2 * 3.0)
    g = build_grid(cs, args.L_sim, args.steps * dt, args.h, dt)
    c = profiles.linear(g, 0.95, 2.0).values
    th = profiles.ramp_theta0(g, half_width=0.5 * args.L_sim, edge=1.0).values
    w = kernels._numpy.flux_divergence(c, th, g.spacing)
    known = np.zeros(g.shape, bool)
    known[:30] = known[-30:] = True
    c0 = np.where(known, c, np.nan)
    probe = wall_probe(g)
    u1 = th + 0.5 * dt * dt * w
    j0, j1 = 0, g.shape[1]

    cases = {
        "flux_divergence": lambda: kernels.flux_divergence(c, th, g.spacing),
        "leapfrog": lambda: kernels.leapfrog(th, u1, c, g.spacing, dt, args.steps, probe, j0, j1, [])[0],
        "march_flux": lambda: kernels.march_flux(th, w, c0, known, g.spacing),
    }
    print(f"grid {g.shape}, {args.steps} leapfrog steps, best of {args.repeat}")
    print(f"{'kernel':<16} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max |diff|':>11}")
    prev = kernels.backend()
    try:
        for name, fn in cases.items():
            kernels.set_backend("numpy")
            t_np, r_np = best_time(fn, args.repeat)
            kernels.set_backend("numba")
            t_nb, r_nb = best_time(fn, args.repeat)
            diff = float(np.nanmax(np.abs(np.asarray(r_np) - np.asarray(r_nb))))
            print(f"{name:<16} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:8.1f} {diff:11.3g}")
    finally:
        kernels.set_backend(prev)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
