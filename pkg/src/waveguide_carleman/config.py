"""Experiment configuration: flat ``key = value`` text in named sections.

Sections are ``[geometry]``, ``[admissibility]``, ``[carleman]``, ``[fields]``
and ``[run]``. In ``[fields]`` a line ``name = constructor`` picks a field
constructor and ``name.param = value`` sets its parameters; the names are
``c``, ``theta0``, ``theta1``, ``c_star`` and perturbations ``p``, ``p2``, ...
A perturbation may also set ``name.h1_norm`` to rescale it to that
H^1(Omega_ell) norm.
"""
from __future__ import annotations

import configparser
import math
import re
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

from . import profiles
from .admissibility import AdmissibilityParams
from .carleman import Selection, select_params
from .errors import ConfigError
from .grid import CrossSection, Grid, ScalarField, build_grid, fit_grid

_REQUIRED, _OPTIONAL = True, False

# key -> (kind, required, default)
SCHEMA = {
    "geometry": {
        "lower": ("floats", _REQUIRED, None),
        "upper": ("floats", _REQUIRED, None),
        "ell": ("pos", _REQUIRED, None),
        "h": ("floats", _REQUIRED, None),
        "dt": ("pos", _OPTIONAL, None),
        "cfl_fraction": ("frac", _OPTIONAL, 0.9),
        "L_sim": ("pos", _OPTIONAL, None),
    },
    "admissibility": {
        "c_m": ("float", _REQUIRED, None),
        "c_M": ("float", _REQUIRED, None),
        "a0": ("float", _REQUIRED, None),
        "a_prime": ("floats", _REQUIRED, None),
        "M0": ("float", _REQUIRED, None),
        "eta0": ("float", _REQUIRED, None),
        "collar_width": ("float", _REQUIRED, None),
    },
    "carleman": {
        "gamma": ("pos", _OPTIONAL, 0.02),
        "nu": ("pos", _OPTIONAL, 0.1),
        "delta_start": ("pos", _OPTIONAL, None),
        "delta_step": ("pos", _OPTIONAL, 1.0),
        "delta_max": ("pos", _OPTIONAL, 1e4),
        "n_sample": ("int", _OPTIONAL, 201),
        "s_values": ("floats", _OPTIONAL, (10.0, 100.0, 1000.0)),
        "aux_s_values": ("floats", _OPTIONAL, None),
        "test_h": ("floats", _OPTIONAL, None),
        "test_dt": ("pos", _OPTIONAL, None),
        "n_test_functions": ("int", _OPTIONAL, 20),
        "n_x": ("int", _OPTIONAL, 400),
        "n_xi": ("int", _OPTIONAL, 1000),
        "chain_s": ("floats", _OPTIONAL, None),
        "chain_every": ("int", _OPTIONAL, 8),
    },
    "run": {
        "command": ("str", _OPTIONAL, None),
        "output": ("str", _OPTIONAL, "out"),
        "seed": ("int", _OPTIONAL, 0),
        "eps": ("floats", _OPTIONAL, (0.02, 0.04, 0.08, 0.16)),
        "kappa": ("frac", _OPTIONAL, 0.5),
        "method": ("str", _OPTIONAL, "flux"),
        "heun": ("bool", _OPTIONAL, False),
        "w_source": ("str", _OPTIONAL, "stencil"),
        "trace_every": ("int", _OPTIONAL, 10),
    },
}

COMMANDS = ("check", "select", "verify-carleman", "forward", "reconstruct", "sweep")
FIELD_NAMES = ("c", "theta0", "theta1", "c_star")
_PERTURBATION = re.compile(r"^p\d*$")
_CHOICES = {"method": ("flux", "upwind"), "w_source": ("stencil", "solver"), "command": COMMANDS}


def _parse(kind: str, raw: str):
    raw = raw.strip()
    if kind == "str":
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"expected a boolean, got {raw!r}")
    if kind == "int":
        return int(raw)
    if kind == "floats":
        vals = tuple(float(v) for v in raw.replace(";", ",").split(",") if v.strip())
        if not vals:
            raise ValueError("expected at least one number")
        return vals
    x = float(raw)
    if kind == "pos" and not x > 0:
        raise ValueError(f"must be positive, got {x}")
    if kind == "frac" and not 0 < x <= 1:
        raise ValueError(f"must lie in (0, 1], got {x}")
    return x


def _parse_param(raw: str):
    """Constructor parameter: a float, a tuple of floats, or a bare word."""
    parts = [p.strip() for p in raw.split(",") if p.strip()]
    try:
        vals = tuple(float(p) for p in parts)
    except ValueError:
        return raw.strip()
    return vals[0] if len(vals) == 1 else vals


@dataclass(frozen=True)
class FieldSpec:
    name: str
    constructor: str
    params: dict = field(default_factory=dict)
    h1_norm: float | None = None

    def build(self, grid: Grid, ell: float) -> ScalarField:
        try:
            f = profiles.make_field(grid, self.constructor, **self.params)
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"field {self.name!r} ({self.constructor}): {exc}") from exc
        if self.h1_norm is not None:
            f = profiles.normalize_h1(f, ell, self.h1_norm)
        return f


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    geometry: dict
    admissibility: dict
    carleman: dict
    run: dict
    fields: dict
    source: str = "<string>"

    # -- derived objects ----------------------------------------------------

    @cached_property
    def cross_section(self) -> CrossSection:
        return CrossSection(self.geometry["lower"], self.geometry["upper"])

    @cached_property
    def admissibility_params(self) -> AdmissibilityParams:
        a = self.admissibility
        return AdmissibilityParams(a["c_m"], a["c_M"], a["a0"], a["a_prime"], a["M0"], a["eta0"],
                                   a["collar_width"])

    @cached_property
    def selection(self) -> Selection:
        a, k = self.admissibility, self.carleman
        return select_params(self.cross_section, self.geometry["ell"], a["a_prime"], a["a0"], a["c_m"],
                             a["c_M"], gamma=k["gamma"], nu=k["nu"], delta_step=k["delta_step"],
                             delta_start=k["delta_start"], delta_max=k["delta_max"], n_sample=k["n_sample"])

    def solver_grid(self, refine: int = 1) -> Grid:
        """Forward-solver grid on [0, T]; ``refine`` divides every step."""
        p = self.selection.params
        c_M = self.admissibility["c_M"]
        L_sim = self.geometry["L_sim"] or p.L + p.T * math.sqrt(c_M) + 1.0
        h = tuple(v / refine for v in self.geometry["h"])
        if self.geometry["dt"] is None:
            g = fit_grid(self.cross_section, h, p.T, L_sim, c_M, self.geometry["cfl_fraction"])
        else:
            dt = self.geometry["dt"] / refine
            g = build_grid(self.cross_section, L_sim, p.T, h, p.T / math.ceil(p.T / dt - 1e-9))
        g.check_truncation(p.L, c_M)
        return g

    def field(self, name: str, grid: Grid) -> ScalarField:
        if name == "c_star" and name not in self.fields:
            name = "c"
        if name == "theta1" and name not in self.fields:
            return profiles.zero(grid)
        if name not in self.fields:
            raise ConfigError(f"field {name!r} is not defined in [fields]")
        return self.fields[name].build(grid, self.geometry["ell"])

    @property
    def perturbations(self) -> list[str]:
        return sorted((n for n in self.fields if _PERTURBATION.match(n)), key=lambda n: (len(n), n))

    def output_dir(self, override: str | None = None, root: str | None = None) -> Path:
        out = Path(override or self.run["output"])
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


def _collect_fields(items: dict, errors: list) -> dict:
    specs: dict = {}
    params: dict = {}
    for key, raw in items.items():
        name, dot, param = key.partition(".")
        if not (name in FIELD_NAMES or _PERTURBATION.match(name)):
            errors.append(f"unknown key {key!r} in [fields]; accepted field names: "
                          f"{', '.join(FIELD_NAMES)}, p, p2, ...")
            continue
        if dot:
            params.setdefault(name, {})[param] = raw
        else:
            specs[name] = raw.strip()
    out = {}
    for name in sorted(set(specs) | set(params)):
        if name not in specs:
            errors.append(f"[fields] sets parameters of {name!r} but no constructor ({name} = ...)")
            continue
        ctor = specs[name]
        if ctor not in profiles.CONSTRUCTORS:
            errors.append(f"unknown field constructor {ctor!r} for {name!r}; accepted: "
                          f"{', '.join(sorted(profiles.CONSTRUCTORS))}")
            continue
        allowed = profiles.constructor_params(ctor)
        kw = {}
        h1 = None
        for pk, pv in sorted(params.get(name, {}).items()):
            if pk == "h1_norm" and _PERTURBATION.match(name):
                try:
                    h1 = _parse("pos", pv)
                except ValueError as exc:
                    errors.append(f"[fields] {name}.h1_norm: {exc}")
                continue
            if pk not in allowed:
                extra = ", h1_norm" if _PERTURBATION.match(name) else ""
                errors.append(f"unknown key {name + '.' + pk!r} in [fields]; accepted for {ctor}: "
                              f"{', '.join(allowed)}{extra}")
                continue
            kw[pk] = _parse_param(pv)
        out[name] = FieldSpec(name, ctor, kw, h1)
    return out


def parse_config(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse and validate; every violation is listed in one :class:`ConfigError`."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse {source}: {' '.join(str(exc).split())}") from exc
    errors: list[str] = []
    for sec in cp.sections():
        if sec not in SCHEMA and sec != "fields":
            errors.append(f"unknown section [{sec}]; accepted: {', '.join(list(SCHEMA) + ['fields'])}")
    blocks = {}
    for sec, keys in SCHEMA.items():
        items = dict(cp.items(sec)) if cp.has_section(sec) else {}
        vals = {}
        for k in sorted(set(items) - set(keys)):
            errors.append(f"unknown key {k!r} in [{sec}]; accepted: {', '.join(sorted(keys))}")
        for k, (kind, required, default) in keys.items():
            if k not in items:
                if required:
                    errors.append(f"missing key {k!r} in [{sec}]")
                vals[k] = default
                continue
            try:
                vals[k] = _parse(kind, items[k])
            except ValueError as exc:
                errors.append(f"[{sec}] {k}: {exc}")
                vals[k] = default
                continue
            if k in _CHOICES and vals[k] not in _CHOICES[k]:
                errors.append(f"[{sec}] {k}: {vals[k]!r} not one of {', '.join(_CHOICES[k])}")
        blocks[sec] = vals
    fields_ = _collect_fields(dict(cp.items("fields")) if cp.has_section("fields") else {}, errors)
    if "c" not in fields_ and not any("'c'" in e for e in errors):
        errors.append("[fields] must define the conductivity c")
    if "theta0" not in fields_:
        errors.append("[fields] must define theta0")
    g = blocks["geometry"]
    if g["lower"] and g["upper"]:
        if len(g["lower"]) != len(g["upper"]):
            errors.append("[geometry] lower and upper need the same number of entries")
        elif any(not b > a for a, b in zip(g["lower"], g["upper"])):
            errors.append("[geometry] upper must exceed lower on every axis")
        elif g["h"] and len(g["h"]) not in (1, len(g["lower"]) + 1):
            errors.append(f"[geometry] h needs 1 or {len(g['lower']) + 1} entries")
    if g["h"] and any(v <= 0 for v in g["h"]):
        errors.append("[geometry] h entries must be positive")
    if g["h"] and len(g["h"]) == 1 and g["lower"]:
        g["h"] = g["h"] * (len(g["lower"]) + 1)
    a = blocks["admissibility"]
    if a["a_prime"] and g["lower"] and len(a["a_prime"]) != len(g["lower"]):
        errors.append("[admissibility] a_prime needs one entry per cross-section axis")
    k = blocks["carleman"]
    for name in ("s_values", "aux_s_values", "chain_s"):
        if k[name] is not None and any(not v > 0 for v in k[name]):
            errors.append(f"[carleman] {name} entries must be positive")
    r = blocks["run"]
    if r["eps"] is not None and any(v < 0 for v in r["eps"]):
        errors.append("[run] eps entries must be nonnegative")
    if r["kappa"] is not None and not 0 < r["kappa"] < 1:
        errors.append("[run] kappa must lie in (0, 1)")
    if not errors:
        try:
            AdmissibilityParams(a["c_m"], a["c_M"], a["a0"], a["a_prime"], a["M0"], a["eta0"], a["collar_width"])
        except ValueError as exc:
            errors.append(f"[admissibility] {exc}")
    if errors:
        raise ConfigError(f"{len(errors)} problem(s) in {source}: " + " | ".join(errors))
    return ExperimentConfig(g, a, k, r, fields_, source)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    return parse_config(path.read_text(), str(path))

