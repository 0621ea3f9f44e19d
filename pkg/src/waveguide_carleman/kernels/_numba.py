"""Numba kernels for the two-axis case (one cross-section axis plus x_n)."""
from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _energy_2d(a, b, cx, cn, hx, hn, dt):
    n0, n1 = a.shape
    e = 0.0
    for i in range(n0):
        for j in range(n1):
            d = (b[i, j] - a[i, j]) / dt
            e += d * d
    sx = 0.0
    for i in range(n0 - 1):
        for j in range(n1):
            sx += cx[i, j] * (b[i + 1, j] - b[i, j]) * (a[i + 1, j] - a[i, j])
    sn = 0.0
    for i in range(n0):
        for j in range(n1 - 1):
            sn += cn[i, j] * (b[i, j + 1] - b[i, j]) * (a[i, j + 1] - a[i, j])
    return (e + sx / (hx * hx) + sn / (hn * hn)) * hx * hn


@njit(cache=True)
def flux_divergence_2d(c, u, hx, hn):
    n0, n1 = u.shape
    out = np.zeros((n0, n1))
    ax = 1.0 / (2.0 * hx * hx)
    an = 1.0 / (2.0 * hn * hn)
    for i in range(1, n0 - 1):
        for j in range(1, n1 - 1):
            cc = c[i, j]
            out[i, j] = ((c[i + 1, j] + cc) * (u[i + 1, j] - u[i, j])
                         - (cc + c[i - 1, j]) * (u[i, j] - u[i - 1, j])) * ax \
                + ((c[i, j + 1] + cc) * (u[i, j + 1] - u[i, j])
                   - (cc + c[i, j - 1]) * (u[i, j] - u[i, j - 1])) * an
    return out


@njit(cache=True)
def _probe_2d(u, probe, j0, j1, out):
    for p in range(probe.shape[0]):
        for j in range(j0, j1):
            acc = 0.0
            for i in range(probe.shape[1]):
                w = probe[p, i]
                if w != 0.0:
                    acc += w * u[i, j]
            out[p, j - j0] = acc


@njit(cache=True)
def leapfrog_2d(u0, u1, c, hx, hn, dt, nsteps, probe, j0, j1, keep_levels, energy, walls, kept):
    n0, n1 = u0.shape
    cx = 0.5 * (c[1:, :] + c[:-1, :])
    cn = 0.5 * (c[:, 1:] + c[:, :-1])
    prev = u0.copy()
    cur = u1.copy()
    nxt = np.zeros((n0, n1))
    rx = dt * dt / (hx * hx)
    rn = dt * dt / (hn * hn)
    nkeep = keep_levels.shape[0]
    kp = 0
    _probe_2d(prev, probe, j0, j1, walls[0])
    _probe_2d(cur, probe, j0, j1, walls[1])
    while kp < nkeep and keep_levels[kp] <= 1:
        if keep_levels[kp] == 0:
            kept[kp] = prev
        else:
            kept[kp] = cur
        kp += 1
    energy[0] = _energy_2d(prev, cur, cx, cn, hx, hn, dt)
    for m in range(1, nsteps):
        for i in range(1, n0 - 1):
            for j in range(1, n1 - 1):
                uc = cur[i, j]
                lap = (cx[i, j] * (cur[i + 1, j] - uc) - cx[i - 1, j] * (uc - cur[i - 1, j])) * rx \
                    + (cn[i, j] * (cur[i, j + 1] - uc) - cn[i, j - 1] * (uc - cur[i, j - 1])) * rn
                nxt[i, j] = 2.0 * uc - prev[i, j] + lap
        e = _energy_2d(cur, nxt, cx, cn, hx, hn, dt)
        energy[m] = e
        if not np.isfinite(e):
            return m + 1
        _probe_2d(nxt, probe, j0, j1, walls[m + 1])
        while kp < nkeep and keep_levels[kp] == m + 1:
            kept[kp] = nxt
            kp += 1
        tmp = prev
        prev = cur
        cur = nxt
        nxt = tmp
    return -1


@njit(cache=True)
def march_flux_2d(theta, w, c, known, hx, hn):
    n0, n1 = theta.shape
    t2x = 2.0 * hx * hx
    t2n = 2.0 * hn * hn
    for i in range(1, n0 - 1):
        for j in range(n1):
            if known[i + 1, j]:
                continue
            if j == 0 or j == n1 - 1:
                c[i + 1, j] = np.nan
                continue
            ci = c[i, j]
            tr = ((c[i, j + 1] + ci) * (theta[i, j + 1] - theta[i, j])
                  - (ci + c[i, j - 1]) * (theta[i, j] - theta[i, j - 1])) / t2n
            d_hi = theta[i + 1, j] - theta[i, j]
            d_lo = theta[i, j] - theta[i - 1, j]
            rhs = w[i, j] - tr + (ci + c[i - 1, j]) * d_lo / t2x - ci * d_hi / t2x
            c[i + 1, j] = rhs * t2x / d_hi
    return c
