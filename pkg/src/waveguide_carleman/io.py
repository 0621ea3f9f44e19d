"""Field files (CSV or .npz) and small deterministic CSV/JSON writers.

CSV layout::

    # waveguide-field kind=space lower=0 upper=1 L_sim=6 T=4.6 spacing=0.05,0.05 dt=0.025
    x1,xn,value
    0,-6,0.0
    ...

Space-time files use ``kind=spacetime`` plus ``t0`` and ``nlevels`` in the
header and a leading ``t`` column. Rows run in C order over the value array
(time slowest, x_n fastest). Numbers are written with ``%.17g`` so a
round trip is exact.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import GridError
from .grid import CrossSection, Grid, ScalarField, SpaceTimeField

_MAGIC = "waveguide-field"
FMT = "%.17g"


def _fmt(x) -> str:
    return FMT % x


def _header(grid: Grid, kind: str, extra: dict) -> str:
    cs = grid.cross_section
    items = {
        "kind": kind,
        "lower": ",".join(_fmt(v) for v in cs.lower),
        "upper": ",".join(_fmt(v) for v in cs.upper),
        "L_sim": _fmt(grid.L_sim),
        "T": _fmt(grid.T),
        "spacing": ",".join(_fmt(h) for h in grid.spacing),
        "dt": _fmt(grid.dt),
        **extra,
    }
    return "# " + _MAGIC + " " + " ".join(f"{k}={v}" for k, v in items.items())


def _parse_header(line: str) -> dict:
    parts = line.lstrip("#").split()
    if not parts or parts[0] != _MAGIC:
        raise GridError("not a field file: missing header line")
    return dict(p.split("=", 1) for p in parts[1:])


def _grid_from(meta: dict) -> Grid:
    floats = lambda s: tuple(float(v) for v in s.split(","))  # noqa: E731
    cs = CrossSection(floats(meta["lower"]), floats(meta["upper"]))
    return Grid(cs, float(meta["L_sim"]), float(meta["T"]), floats(meta["spacing"]), float(meta["dt"]))


def save_field(path, field) -> Path:
    """Write a ScalarField or SpaceTimeField; format chosen by suffix."""
    path = Path(path)
    g = field.grid
    st = isinstance(field, SpaceTimeField)
    if path.suffix == ".npz":
        cs = g.cross_section
        np.savez(path, kind="spacetime" if st else "space", lower=cs.lower, upper=cs.upper,
                 L_sim=g.L_sim, T=g.T, spacing=g.spacing, dt=g.dt, values=field.values,
                 times=field.times if st else np.zeros(0))
        return path
    extra = {"t0": _fmt(field.times[0]), "nlevels": str(field.times.size)} if st else {}
    names = [f"x{k + 1}" for k in range(g.cross_section.dim)] + ["xn", "value"]
    coords = list(g.axes)
    if st:
        names = ["t"] + names
        coords = [field.times] + coords
    mesh = np.meshgrid(*coords, indexing="ij")
    cols = np.column_stack([m.ravel() for m in mesh] + [field.values.ravel()])
    with open(path, "w", newline="") as fh:
        fh.write(_header(g, "spacetime" if st else "space", extra) + "\n")
        fh.write(",".join(names) + "\n")
        np.savetxt(fh, cols, fmt=FMT, delimiter=",")
    return path


def load_field(path):
    path = Path(path)
    if path.suffix == ".npz":
        with np.load(path) as z:
            cs = CrossSection(tuple(z["lower"]), tuple(z["upper"]))
            g = Grid(cs, float(z["L_sim"]), float(z["T"]), tuple(z["spacing"]), float(z["dt"]))
            if str(z["kind"]) == "spacetime":
                return SpaceTimeField(g, z["values"], z["times"])
            return ScalarField(g, z["values"])
    with open(path) as fh:
        meta = _parse_header(fh.readline())
        fh.readline()
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    g = _grid_from(meta)
    if meta["kind"] == "spacetime":
        nl = int(meta["nlevels"])
        times = data[:, 0].reshape((nl,) + g.shape)[(slice(None),) + (0,) * g.n]
        return SpaceTimeField(g, data[:, -1].reshape((nl,) + g.shape), times)
    return ScalarField(g, data[:, -1].reshape(g.shape))


def write_csv(path, header, rows) -> Path:
    """Deterministic CSV: floats as ``%.17g``, everything else via ``str``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if np.isfinite(x) else str(x)
    return obj


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path
