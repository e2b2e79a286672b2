"""Structured configuration (JSON or TOML) for scenarios, solver runs, experiments and probes.

Every section and key is checked; unknown names are configuration errors
rather than silently ignored.  See the README for the full schema.
"""

from __future__ import annotations

import json
import math
import os
import sys

import numpy as np

from .errors import ConfigError
from .lab import ExperimentPlan, with_horizon
from .model import BUILTIN_NAMES, AveragedPair, ExprCoefficients, InitialLaw, Scenario, builtin_scenario
from .noise import JumpMeasureSpec
from .probe import ProbeConfig
from .solver import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = [
    "SECTIONS",
    "load_config",
    "scenario_config",
    "build_scenario",
    "build_solver",
    "build_plan",
    "build_probe",
]

SECTIONS = {
    "model": {"builtin", "params", "d", "m", "T", "eps", "kappa", "r", "name"},
    "coefficients": {"b", "sigma", "h"},
    "averaged": {"b", "sigma", "h"},
    "jumps": {"mass", "mark_law", "params"},
    "initial": {"kind", "value", "params"},
    "solver": {"steps", "particles", "record", "snapshot_times"},
    "experiment": {"kind", "grid", "replications", "base_seed", "particles", "steps", "reference_size",
                   "statistic", "coupling", "power", "holder_start", "tolerance"},
    "probe": {"radius", "sample_count", "time_points", "pool_sizes", "pool_per_size", "tolerance",
              "refine_rounds", "seed", "bounds"},
}


def load_config(path) -> dict:
    """Read a ``.json`` or ``.toml`` file (other suffixes: try JSON, then TOML)."""
    path = os.fspath(path)
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    text = raw.decode("utf-8", errors="replace")
    suffix = os.path.splitext(path)[1].lower()
    loaders = {".json": [_json], ".toml": [_toml]}.get(suffix, [_json, _toml])
    errors = []
    for load in loaders:
        try:
            cfg = load(text)
            break
        except ValueError as exc:
            errors.append(str(exc))
    else:
        raise ConfigError(f"cannot parse config file {path}: {'; '.join(errors)}")
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {path} must contain a table at top level")
    _check_keys(cfg)
    return cfg


def _json(text):
    return json.loads(text)


def _toml(text):
    return tomllib.loads(text)


def _check_keys(cfg):
    for name, section in cfg.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown config section [{name}]; known: {', '.join(SECTIONS)}")
        if not isinstance(section, dict):
            raise ConfigError(f"config section [{name}] must be a table")
        unknown = set(section) - SECTIONS[name]
        if unknown:
            raise ConfigError(f"unknown key(s) {sorted(unknown)} in [{name}]")


def scenario_config(ref) -> dict:
    """Config for ``--scenario``: a built-in name or a config file path."""
    if ref in BUILTIN_NAMES:
        return {"model": {"builtin": ref}}
    return load_config(ref)


def _number(value, what, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{what} must be a number, got {value!r}")
    if not math.isfinite(value):
        raise ConfigError(f"{what} must be finite")
    if integer:
        if int(value) != value:
            raise ConfigError(f"{what} must be an integer, got {value}")
        return int(value)
    return float(value)


def _vector(value, dim, what):
    arr = np.atleast_1d(np.asarray(value, dtype=float)) if not isinstance(value, str) else None
    if arr is None or arr.ndim != 1:
        raise ConfigError(f"{what} must be a number or a list of numbers")
    if arr.size == 1 and dim > 1:
        arr = np.full(dim, arr[0])
    if arr.size != dim:
        raise ConfigError(f"{what} must have {dim} component(s), got {arr.size}")
    return arr


def _jump_spec(section, dim):
    if not section:
        return JumpMeasureSpec.none(dim)
    law = section.get("mark_law", "dirac")
    mass = _number(section.get("mass", 1.0), "[jumps] mass")
    params = section.get("params", {}) or {}
    if not isinstance(params, dict):
        raise ConfigError("[jumps] params must be a table")
    allowed = {"none": set(), "dirac": {"point"}, "discrete": {"atoms", "weights"},
               "gaussian": {"mean", "std", "nodes"}}
    if law not in allowed:
        raise ConfigError(f"unknown mark_law {law!r}; choose from {', '.join(allowed)}")
    unknown = set(params) - allowed[law]
    if unknown:
        raise ConfigError(f"unknown [jumps] params {sorted(unknown)} for mark_law {law!r}")
    if law == "none" or mass == 0:
        return JumpMeasureSpec.none(dim)
    if law == "dirac":
        spec = JumpMeasureSpec.dirac(_vector(params.get("point", 1.0), dim, "dirac point"), mass=mass)
    elif law == "discrete":
        atoms = np.asarray(params.get("atoms", []), dtype=float)
        atoms = atoms.reshape(-1, dim) if atoms.size else atoms
        weights = np.asarray(params.get("weights", []), dtype=float)
        if weights.size == 0 or weights.sum() <= 0:
            raise ConfigError("discrete mark law needs positive weights")
        # weights give the shape of the law; mass scales the total
        spec = JumpMeasureSpec.discrete(atoms, mass * weights / weights.sum())
    else:
        spec = JumpMeasureSpec.gaussian(_vector(params.get("mean", 0.0), dim, "gaussian mean"),
                                        _vector(params.get("std", 1.0), dim, "gaussian std"),
                                        mass=mass, nodes=_number(params.get("nodes", 16), "nodes", True))
    if spec.dim != dim:
        raise ConfigError(f"jump marks have dimension {spec.dim}, expected {dim}")
    return spec


def _initial(section, dim):
    if not section:
        return InitialLaw.constant(np.zeros(dim))
    kind = section.get("kind", "constant")
    params = section.get("params", {}) or {}
    if kind == "constant":
        return InitialLaw.constant(_vector(section.get("value", 0.0), dim, "[initial] value"))
    if kind == "gaussian":
        return InitialLaw.gaussian(_vector(params.get("mean", 0.0), dim, "initial mean"),
                                   _vector(params.get("std", 1.0), dim, "initial std"))
    if kind == "uniform":
        return InitialLaw.uniform(_vector(params.get("low", 0.0), dim, "initial low"),
                                  _vector(params.get("high", 1.0), dim, "initial high"))
    raise ConfigError(f"unknown initial kind {kind!r}; choose from constant, gaussian, uniform")


def _sources(section, d, m, where):
    def strings(value, what):
        if isinstance(value, str):
            return [value]
        if isinstance(value, list) and all(isinstance(v, str) for v in value):
            return list(value)
        raise ConfigError(f"{where} {what} must be an expression string or a list of them")

    b = strings(section.get("b", "0"), "b")
    h = strings(section.get("h", "0"), "h")
    raw = section.get("sigma", "0")
    if isinstance(raw, list) and raw and all(isinstance(r, list) for r in raw):
        sigma = [strings(r, "sigma row") for r in raw]
    else:
        flat = strings(raw, "sigma")
        if len(flat) == 1 and d * m > 1:
            raise ConfigError(f"{where} sigma needs {d} row(s) of {m} expression(s)")
        sigma = [flat[i * m:(i + 1) * m] for i in range(d)] if len(flat) == d * m else [flat]
    return b, sigma, h


def build_scenario(cfg: dict, eps=None):
    """Scenario or averaged pair described by ``cfg``; ``eps`` overrides the model value."""
    model = dict(cfg.get("model", {}))
    if "builtin" in model:
        extra = set(model) - {"builtin", "params", "T", "eps"}
        if extra:
            raise ConfigError(f"[model] keys {sorted(extra)} cannot be combined with a built-in scenario")
        for key in ("coefficients", "averaged", "jumps", "initial"):
            if key in cfg:
                raise ConfigError(f"[{key}] cannot be combined with a built-in scenario")
        params = dict(model.get("params", {}) or {})
        if "T" in model:
            params["T"] = model["T"]
        if "eps" in model:
            eps = model["eps"] if eps is None else eps
        target = builtin_scenario(model["builtin"], params)
    else:
        if "coefficients" not in cfg:
            raise ConfigError("config needs either [model] builtin or a [coefficients] section")
        if "params" in model:
            raise ConfigError("[model] params only applies to built-in scenarios")
        d = _number(model.get("d", 1), "[model] d", True)
        m = _number(model.get("m", 1), "[model] m", True)
        T = _number(model.get("T", 1.0), "[model] T")
        eps_cfg = model.get("eps")
        common = dict(
            jump_spec=_jump_spec(cfg.get("jumps"), d), initial=_initial(cfg.get("initial"), d),
            horizon=T, dim_d=d, dim_m=m,
            kappa=_number(model.get("kappa", 2.0), "[model] kappa"),
            r=_number(model.get("r", 4.0), "[model] r"),
        )
        name = str(model.get("name", "custom"))
        fast = Scenario(ExprCoefficients(*_sources(cfg["coefficients"], d, m, "[coefficients]"), d, m),
                        eps=None if eps_cfg is None else _number(eps_cfg, "[model] eps"), name=name, **common)
        if "averaged" in cfg:
            avg = Scenario(ExprCoefficients(*_sources(cfg["averaged"], d, m, "[averaged]"), d, m),
                           eps=fast.eps, name=name + "/averaged", **common)
            target = AveragedPair(fast, avg)
        else:
            target = fast
    if eps is not None:
        target = target.with_eps(_number(eps, "eps"))
    return target


def build_solver(cfg: dict, particles=None, steps=None, workers=1) -> SolverConfig:
    sec = cfg.get("solver", {})
    return SolverConfig(
        steps=_number(steps if steps is not None else sec.get("steps", 1000), "steps", True),
        particles=_number(particles if particles is not None else sec.get("particles", 100), "particles", True),
        record=sec.get("record", "full"),
        snapshot_times=tuple(float(s) for s in sec.get("snapshot_times", ())),
        workers=workers,
    )


def build_plan(cfg: dict, target, kind, *, seed=None, particles=None, steps=None, grid=None,
               replications=None, horizon=None, workers=1) -> ExperimentPlan:
    """Experiment plan from ``[experiment]``; keyword arguments override the file."""
    sec = dict(cfg.get("experiment", {}))
    if sec.get("kind", kind) != kind:
        raise ConfigError(f"config describes a {sec['kind']!r} experiment, not {kind!r}")
    sec.pop("kind", None)
    if grid is not None:
        sec["grid"] = grid
    if "grid" not in sec:
        raise ConfigError(f"a {kind} experiment needs a grid ([experiment] grid or --grid)")
    if not isinstance(sec["grid"], (list, tuple)):
        raise ConfigError("[experiment] grid must be a list")
    for key, value in (("base_seed", seed), ("particles", particles), ("steps", steps),
                       ("replications", replications)):
        if value is not None:
            sec[key] = value
    if horizon is not None:
        target = with_horizon(target, horizon)
    ints = {"replications", "base_seed", "particles", "steps", "reference_size"}
    kwargs = {}
    for key, value in sec.items():
        if key == "grid":
            kwargs[key] = tuple(_number(g, "grid value") for g in value)
        elif key in ints:
            kwargs[key] = _number(value, key, True)
        elif key in ("power", "holder_start", "tolerance"):
            kwargs[key] = _number(value, key)
        else:
            kwargs[key] = value
    return ExperimentPlan(kind=kind, scenario=target, workers=workers, **kwargs)


def build_probe(cfg: dict, *, seed=None, radius=None, samples=None, bounds=None) -> ProbeConfig:
    sec = dict(cfg.get("probe", {}))
    declared = dict(sec.pop("bounds", {}) or {})
    declared.update(bounds or {})
    for key, value in (("seed", seed), ("radius", radius), ("sample_count", samples)):
        if value is not None:
            sec[key] = value
    kwargs = {}
    for key, value in sec.items():
        if key in ("sample_count", "time_points", "pool_per_size", "refine_rounds", "seed"):
            kwargs[key] = _number(value, key, True)
        elif key == "pool_sizes":
            kwargs[key] = tuple(_number(v, "pool size", True) for v in value)
        else:
            kwargs[key] = _number(value, key)
    return ProbeConfig(bounds={k: _number(v, f"bound {k}") for k, v in declared.items()}, **kwargs)
