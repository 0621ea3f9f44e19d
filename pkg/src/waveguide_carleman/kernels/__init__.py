"""Backend dispatch for the hot loops.

The backend is read from ``WAVEGUIDE_BACKEND`` (``numba``, ``numpy`` or
``auto``; default ``auto``). ``auto`` uses numba when it imports. The numba
kernels cover two spatial axes; other shapes always run on numpy.
"""
from __future__ import annotations

import os

import numpy as np

from . import _numpy

BACKEND_ENV = "WAVEGUIDE_BACKEND"

try:  # numba is optional at runtime
    from . import _numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _numba = None
    HAS_NUMBA = False


def _resolve(name: str | None) -> str:
    name = (name or "auto").strip().lower()
    if name not in ("auto", "numba", "numpy"):
        raise ValueError(f"unknown backend {name!r}; expected auto, numba or numpy")
    if name == "auto":
        return "numba" if HAS_NUMBA else "numpy"
    if name == "numba" and not HAS_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    return name


_active = _resolve(os.environ.get(BACKEND_ENV))


def backend() -> str:
    """Name of the backend currently in use."""
    return _active


def set_backend(name: str) -> str:
    """Switch backend at runtime; returns the previous one."""
    global _active
    prev = _active
    _active = _resolve(name)
    return prev


def _use_numba(ndim: int) -> bool:
    return _active == "numba" and ndim == 2


def flux_divergence(c: np.ndarray, u: np.ndarray, spacing) -> np.ndarray:
    """``div(c grad u)`` in flux form on interior nodes, zero on the boundary."""
    c = np.ascontiguousarray(c, dtype=float)
    u = np.ascontiguousarray(u, dtype=float)
    if _use_numba(c.ndim) and u.ndim == 2:
        return _numba.flux_divergence_2d(c, u, float(spacing[0]), float(spacing[1]))
    return _numpy.flux_divergence(c, u, spacing)


def leapfrog(u0, u1, c, spacing, dt, nsteps, probe, j0, j1, keep_levels):
    """Run the leapfrog loop; see :func:`_numpy.leapfrog` for the contract."""
    u0 = np.ascontiguousarray(u0, dtype=float)
    u1 = np.ascontiguousarray(u1, dtype=float)
    c = np.ascontiguousarray(c, dtype=float)
    probe = np.ascontiguousarray(probe, dtype=float)
    keep_levels = np.asarray(sorted(keep_levels), dtype=np.int64)
    if _use_numba(c.ndim):
        energy = np.zeros(nsteps)
        walls = np.zeros((nsteps + 1, probe.shape[0], j1 - j0))
        kept = np.zeros((len(keep_levels),) + u0.shape)
        bad = _numba.leapfrog_2d(u0, u1, c, float(spacing[0]), float(spacing[1]), float(dt),
                                 int(nsteps), probe, int(j0), int(j1), keep_levels, energy, walls, kept)
        return energy, walls, kept, int(bad)
    return _numpy.leapfrog(u0, u1, c, spacing, dt, nsteps, probe, j0, j1, keep_levels)


def march_flux(theta, w, c, known, spacing):
    """Row-by-row solve of the flux-form equation for ``c`` along axis 0."""
    theta = np.ascontiguousarray(theta, dtype=float)
    w = np.ascontiguousarray(w, dtype=float)
    c = np.ascontiguousarray(c, dtype=float).copy()
    known = np.ascontiguousarray(known, dtype=np.bool_)
    if _use_numba(theta.ndim):
        return _numba.march_flux_2d(theta, w, c, known, float(spacing[0]), float(spacing[1]))
    return _numpy.march_flux(theta, w, c, known, spacing)
