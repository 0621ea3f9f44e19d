"""Static SVG figures (matplotlib, Agg backend, reproducible output)."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "waveguide-lab"
plt.rcParams["svg.fonttype"] = "none"
_META = {"Date": None, "Creator": None}


def _save(fig, path) -> Path:
    path = Path(path)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def stability_plot(path, sweeps: dict, kappa: float) -> Path:
    """log ||dc|| against log ||du|| per perturbation with the fitted slope."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for name, sw in sweeps.items():
        rs = [r for r in sw.records if r.norm_du > 0 and r.norm_dc > 0]
        x = np.array([r.log_du for r in rs])
        y = np.array([r.log_dc for r in rs])
        ax.plot(x, y, "o", label=f"{name}: slope {sw.slope:.4f}, R^2 {sw.r2:.4f}")
        if len(rs) >= 2:
            xs = np.linspace(x.min(), x.max(), 2)
            ax.plot(xs, sw.intercept + sw.slope * xs, "-", lw=1)
        if np.isfinite(sw.C) and len(rs):
            ax.plot(x, np.log(sw.C) + kappa * x, ":", lw=1, label=f"{name}: log C + {kappa:g} log du")
    ax.set_xlabel("log ||u1 - u2|| (observation norm)")
    ax.set_ylabel("log ||c1 - c2|| (H1 on Omega_ell)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def ratio_plot(path, s_values, ratios: np.ndarray, title: str) -> Path:
    """Per-function ratio curves against s with their maximum highlighted."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    s = np.asarray(s_values, float)
    R = np.atleast_2d(np.asarray(ratios, float))
    for row in R:
        ax.loglog(s, np.maximum(row, 1e-300), color="0.75", lw=0.8)
    ax.loglog(s, np.max(R, axis=0), "k-o", ms=3, label="max over test functions")
    ax.set_xlabel("s")
    ax.set_ylabel("lhs / rhs")
    ax.set_title(title, fontsize=9)
    ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)


def margin_map(path, xn, t, log_phi_max, L, T, eps, log_d_tilde) -> Path:
    """log(max_{x'} phi) over (x_n, t) with the level log d_tilde and the two slabs."""
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    im = ax.pcolormesh(xn, t, log_phi_max.T - log_d_tilde, shading="auto", cmap="RdBu_r")
    fig.colorbar(im, ax=ax, label="log(max phi) - log(d_tilde)")
    ax.contour(xn, t, log_phi_max.T - log_d_tilde, levels=[0.0], colors="k", linewidths=1)
    for sgn in (-1, 1):
        ax.axvspan(sgn * (L - 2 * eps), sgn * L, color="k", alpha=0.15, lw=0)
        ax.axhspan(sgn * (T - 2 * eps), sgn * T, color="k", alpha=0.15, lw=0)
    ax.set_xlabel("x_n")
    ax.set_ylabel("t")
    fig.tight_layout()
    return _save(fig, path)


def series_plot(path, x, ys: dict, xlabel: str, ylabel: str, logy: bool = False) -> Path:
    fig, ax = plt.subplots(figsize=(5.5, 4.2))
    for name, y in ys.items():
        (ax.semilogy if logy else ax.plot)(x, y, lw=1, label=name)
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if len(ys) > 1:
        ax.legend(fontsize=7)
    fig.tight_layout()
    return _save(fig, path)
