"""Pure-numpy reference kernels.

Every kernel here works for any number of spatial axes. The numba module
provides faster versions for the two-axis case with identical semantics.
"""
from __future__ import annotations

import numpy as np


def _sl(ndim: int, axis: int, s: slice) -> tuple:
    idx = [slice(None)] * ndim
    idx[axis] = s
    return tuple(idx)


def face_average(c: np.ndarray, axis: int) -> np.ndarray:
    """Arithmetic mean of ``c`` on the faces normal to ``axis``."""
    nd = c.ndim
    return 0.5 * (c[_sl(nd, axis, slice(1, None))] + c[_sl(nd, axis, slice(None, -1))])


def flux_divergence(c: np.ndarray, u: np.ndarray, spacing) -> np.ndarray:
    """Flux-form ``div(c grad u)`` on interior nodes; zero on the boundary ring.

    ``u`` may carry extra leading axes (e.g. time); the trailing ``c.ndim``
    axes are spatial.
    """
    ns = c.ndim
    lead = u.ndim - ns
    out = np.zeros(u.shape, dtype=float)
    inner = (slice(None),) * lead + (slice(1, -1),) * ns
    for k in range(ns):
        ax = lead + k
        cf = face_average(c, k)
        flux = cf * (u[_sl(u.ndim, ax, slice(1, None))] - u[_sl(u.ndim, ax, slice(None, -1))])
        d = flux[_sl(u.ndim, ax, slice(1, None))] - flux[_sl(u.ndim, ax, slice(None, -1))]
        # trim the transverse axes to the interior
        idx = [slice(None)] * u.ndim
        for q in range(ns):
            if q != k:
                idx[lead + q] = slice(1, -1)
        out[inner] += d[tuple(idx)] / spacing[k] ** 2
    return out


def discrete_energy(a: np.ndarray, b: np.ndarray, c_faces, spacing, dt: float) -> float:
    """Leapfrog-conserved energy between consecutive levels ``a`` and ``b``."""
    vol = float(np.prod(spacing))
    e = np.sum(((b - a) / dt) ** 2)
    nd = a.ndim
    for k, cf in enumerate(c_faces):
        hi, lo = _sl(nd, k, slice(1, None)), _sl(nd, k, slice(None, -1))
        e += np.sum(cf * (b[hi] - b[lo]) * (a[hi] - a[lo])) / spacing[k] ** 2
    return float(e * vol)


def _probe(u: np.ndarray, probe: np.ndarray, j0: int, j1: int) -> np.ndarray:
    return np.tensordot(probe, u[..., j0:j1], axes=(1, 0))


def leapfrog(u0, u1, c, spacing, dt, nsteps, probe, j0, j1, keep_levels):
    """Advance the leapfrog scheme from levels 0 and 1 to level ``nsteps``.

    Args:
        u0, u1: first two levels (boundary ring must be zero).
        c: nodal conductivity.
        spacing: per-axis steps.
        dt: time step.
        nsteps: index of the last level.
        probe: (k, N_0) weights over axis 0; ``probe @ u[..., j0:j1]`` is
            recorded at every level (e.g. wall normal derivatives).
        j0, j1: recorded column range on the last (axial) axis.
        keep_levels: sorted level indices whose full field is stored.

    Returns:
        (energy, records, kept, bad_step) where ``energy[m]`` is the energy
        between levels m and m+1, ``records[m]`` is the probe output at level
        m and ``bad_step`` is -1 or the first level whose energy is not finite.
    """
    nd = c.ndim
    faces = [face_average(c, k) for k in range(nd)]
    energy = np.zeros(nsteps)
    prev = np.array(u0, dtype=float)
    cur = np.array(u1, dtype=float)
    first = _probe(prev, probe, j0, j1)
    records = np.zeros((nsteps + 1,) + first.shape)
    kept = np.zeros((len(keep_levels),) + u0.shape)
    kp = 0
    records[0] = first
    records[1] = _probe(cur, probe, j0, j1)
    while kp < len(keep_levels) and keep_levels[kp] <= 1:
        kept[kp] = prev if keep_levels[kp] == 0 else cur
        kp += 1
    energy[0] = discrete_energy(prev, cur, faces, spacing, dt)
    dt2 = dt * dt
    ring = np.ones(u0.shape, bool)
    ring[(slice(1, -1),) * nd] = False
    for m in range(1, nsteps):
        nxt = 2.0 * cur - prev + dt2 * flux_divergence(c, cur, spacing)
        nxt[ring] = 0.0
        e = discrete_energy(cur, nxt, faces, spacing, dt)
        energy[m] = e
        if not np.isfinite(e):
            return energy, records, kept, m + 1
        records[m + 1] = _probe(nxt, probe, j0, j1)
        while kp < len(keep_levels) and keep_levels[kp] == m + 1:
            kept[kp] = nxt
            kp += 1
        prev, cur = cur, nxt
    return energy, records, kept, -1


def _transverse_div(c_row: np.ndarray, u_row: np.ndarray, spacing) -> np.ndarray:
    """Flux divergence along every axis of a row slab; NaN on its edge ring."""
    out = np.full(u_row.shape, np.nan)
    if u_row.ndim == 0:
        return np.zeros(())
    out[(slice(1, -1),) * u_row.ndim] = flux_divergence(c_row, u_row, spacing)[(slice(1, -1),) * u_row.ndim]
    return out


def march_flux(theta, w, c, known, spacing):
    """Solve the flux-form equation for ``c`` row by row along axis 0.

    Row ``i + 1`` is obtained from the discrete equation centred at row ``i``.
    Entries flagged in ``known`` are kept; entries whose stencil touches an
    unknown value come out as NaN. ``c`` is modified in place and returned.
    """
    hx = spacing[0]
    rest = spacing[1:]
    n0 = theta.shape[0]
    for i in range(1, n0 - 1):
        target = ~known[i + 1]
        if not target.any():
            continue
        d_hi = theta[i + 1] - theta[i]
        d_lo = theta[i] - theta[i - 1]
        tr = _transverse_div(c[i], theta[i], rest) if len(rest) else 0.0
        rhs = w[i] - tr + (c[i] + c[i - 1]) * d_lo / (2 * hx * hx) - c[i] * d_hi / (2 * hx * hx)
        with np.errstate(invalid="ignore"):
            new = rhs * (2 * hx * hx) / d_hi
        c[i + 1] = np.where(target, new, c[i + 1])
        # the equation is undefined on the transverse edge ring
        if len(rest):
            ring = np.ones(target.shape, bool)
            ring[(slice(1, -1),) * target.ndim] = False
            c[i + 1][ring & target] = np.nan
    return c
