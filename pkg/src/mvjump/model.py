"""Scenarios: coefficients, jump measure, initial law and metadata.

Coefficient sets are vectorised over an ensemble ``x`` of shape ``(N, d)``:

* ``drift(t, x, mv, eps)`` returns ``(N, d)``
* ``diffusion(t, x, mv, eps)`` returns ``(N, d, m)``
* ``jump(t, x, mv, z, eps)`` returns ``(N, d)``; ``z`` is ``None`` when the
  set reports ``jump_uses_mark = False``

``t`` is a float, or an ``(N, 1)`` column when every row has its own time.

``mv`` is the :class:`MeasureView` of the frozen empirical measure.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import expr as dsl
from .errors import ConfigError, EvaluationError
from .measure import EmpiricalMeasure
from .noise import CHANNEL_INITIAL, JumpMeasureSpec, StreamKey

__all__ = [
    "MeasureView",
    "InitialLaw",
    "Coefficients",
    "ExprCoefficients",
    "FunctionCoefficients",
    "Example41Coefficients",
    "Remark21Coefficients",
    "LinearCoefficients",
    "Scenario",
    "AveragedPair",
    "builtin_scenario",
    "eval_coefficient",
    "linear_ou_jump_moments",
    "BUILTIN_NAMES",
    "expression_scenario",
]


class MeasureView:
    """Read-only handle over a frozen empirical measure.

    Functionals use exactly rounded sums (``math.fsum``) so the result does
    not depend on particle order, and are cached for the life of the view.
    """

    __slots__ = ("_measure", "_cache")

    def __init__(self, measure):
        self._measure = measure if isinstance(measure, EmpiricalMeasure) else EmpiricalMeasure(measure)
        self._cache = {}

    @property
    def measure(self) -> EmpiricalMeasure:
        return self._measure

    @property
    def atoms(self) -> np.ndarray:
        return self._measure.atoms

    @property
    def size(self) -> int:
        return self._measure.size

    def _col(self, c):
        if not 1 <= c <= self._measure.dim:
            raise EvaluationError(f"measure component {c} out of range 1..{self._measure.dim}")
        return self._measure.atoms[:, c - 1]

    def mean(self, c=1) -> float:
        key = ("mean", c)
        if key not in self._cache:
            self._cache[key] = math.fsum(self._col(c).tolist()) / self.size
        return self._cache[key]

    def mom(self, p, c=1) -> float:
        key = ("mom", float(p), c)
        if key not in self._cache:
            if p < 1:
                raise EvaluationError(f"moment order must be >= 1, got {p}")
            self._cache[key] = math.fsum((np.abs(self._col(c)) ** p).tolist()) / self.size
        return self._cache[key]

    def w2d0(self) -> float:
        if "w2d0" not in self._cache:
            sq = np.sum(self._measure.atoms ** 2, axis=1)
            self._cache["w2d0"] = math.sqrt(math.fsum(sq.tolist()) / self.size)
        return self._cache["w2d0"]


def _as_view(measure) -> MeasureView:
    if isinstance(measure, MeasureView):
        return measure
    return MeasureView(measure)


@dataclass(frozen=True)
class InitialLaw:
    """Law of ``X(0)``: ``constant`` (value), ``gaussian`` (mean, std) or ``uniform`` (low, high).

    Random draws use a per-particle stream, so the first ``N`` particles of
    an ``M``-particle sample equal an ``N``-particle sample with the same seed.
    """

    kind: str = "constant"
    value: tuple = (1.0,)
    spread: tuple = ()

    def __post_init__(self):
        if self.kind not in ("constant", "gaussian", "uniform"):
            raise ConfigError(f"unknown initial law {self.kind!r}")
        v = np.asarray(self.value, dtype=float)
        if v.ndim != 1 or v.size == 0 or not np.all(np.isfinite(v)):
            raise ConfigError("initial value must be a finite vector")
        if self.kind != "constant":
            s = np.asarray(self.spread, dtype=float)
            if s.shape != v.shape or not np.all(np.isfinite(s)):
                raise ConfigError("initial law needs a second parameter vector of the same length")
            if self.kind == "gaussian" and np.any(s < 0):
                raise ConfigError("initial std must be non-negative")
            if self.kind == "uniform" and np.any(s <= v):
                raise ConfigError("uniform initial law needs high > low")

    @classmethod
    def constant(cls, x0):
        return cls("constant", tuple(np.atleast_1d(np.asarray(x0, float)).tolist()))

    @classmethod
    def gaussian(cls, mean, std):
        mean = np.atleast_1d(np.asarray(mean, float))
        return cls("gaussian", tuple(mean.tolist()), tuple(np.broadcast_to(np.asarray(std, float), mean.shape).tolist()))

    @classmethod
    def uniform(cls, low, high):
        low = np.atleast_1d(np.asarray(low, float))
        return cls("uniform", tuple(low.tolist()), tuple(np.broadcast_to(np.asarray(high, float), low.shape).tolist()))

    @property
    def dim(self) -> int:
        return len(self.value)

    def sample(self, seed: int, count: int) -> np.ndarray:
        v = np.asarray(self.value, dtype=float)
        if self.kind == "constant":
            return np.tile(v, (count, 1))
        s = np.asarray(self.spread, dtype=float)
        out = np.empty((count, v.size))
        for i in range(count):
            gen = StreamKey(seed, i, CHANNEL_INITIAL).generator()
            if self.kind == "gaussian":
                out[i] = v + s * gen.standard_normal(v.size)
            else:
                out[i] = v + (s - v) * gen.random(v.size)
        return out


class Coefficients:
    """Base class for vectorised coefficient sets."""

    uses_measure = True
    jump_uses_mark = True

    def drift(self, t, x, mv, eps):
        raise NotImplementedError

    def diffusion(self, t, x, mv, eps):
        raise NotImplementedError

    def jump(self, t, x, mv, z, eps):
        raise NotImplementedError

    def describe(self) -> dict:
        return {"type": type(self).__name__}


def _broadcast(value, n):
    arr = np.asarray(value, dtype=float)
    return np.broadcast_to(arr, (n,)) if arr.ndim == 0 else arr


class ExprCoefficients(Coefficients):
    """Coefficients given as expression sources, one per component."""

    def __init__(self, b, sigma, h, dim_d=1, dim_m=1):
        self.dim_d, self.dim_m = dim_d, dim_m
        self.sources = {"b": list(b), "sigma": [list(row) for row in sigma], "h": list(h)}
        if len(self.sources["b"]) != dim_d or len(self.sources["h"]) != dim_d:
            raise ConfigError(f"b and h need {dim_d} component(s)")
        if len(self.sources["sigma"]) != dim_d or any(len(r) != dim_m for r in self.sources["sigma"]):
            raise ConfigError(f"sigma must be a {dim_d} x {dim_m} matrix of expressions")
        self.b = [self._compile(s, "b", allow_z=False) for s in self.sources["b"]]
        self.sigma = [[self._compile(s, "sigma", allow_z=False) for s in row] for row in self.sources["sigma"]]
        self.h = [self._compile(s, "h", allow_z=True) for s in self.sources["h"]]
        exprs = self.b + [e for row in self.sigma for e in row] + self.h
        self.uses_measure = any(dsl.free_vars(e).uses_measure for e in exprs)
        self.jump_uses_mark = any(n[0] == "z" for e in self.h for n in dsl.free_vars(e).names)
        self.uses_eps = any("eps" in dsl.free_vars(e).names for e in exprs)

    def _compile(self, source, field_name, allow_z):
        e = dsl.parse(str(source))
        for name in dsl.free_vars(e).names:
            head, idx = name[0], name[1:]
            if name in ("t", "eps"):
                continue
            if head == "z" and not allow_z:
                raise ConfigError(f"{field_name} may not depend on the jump mark ({name})")
            if head in "xz":
                if not idx and self.dim_d > 1:
                    raise ConfigError(f"bare {name!r} is ambiguous for d={self.dim_d}; use {name}1..{name}{self.dim_d}")
                if idx and int(idx) > self.dim_d:
                    raise ConfigError(f"{name} exceeds the state dimension {self.dim_d}")
        return e

    def _ctx(self, t, x, mv, eps, z=None):
        if np.ndim(t) == 2:
            t = np.asarray(t)[:, 0]
        return dsl.EvalContext(t=t, x=x, z=z, eps=eps, measure=mv)

    def drift(self, t, x, mv, eps):
        ctx = self._ctx(t, x, mv, eps)
        return np.stack([_broadcast(dsl.evaluate(e, ctx), x.shape[0]) for e in self.b], axis=1)

    def diffusion(self, t, x, mv, eps):
        ctx = self._ctx(t, x, mv, eps)
        rows = [np.stack([_broadcast(dsl.evaluate(e, ctx), x.shape[0]) for e in row], axis=1)
                for row in self.sigma]
        return np.stack(rows, axis=1)

    def jump(self, t, x, mv, z, eps):
        ctx = self._ctx(t, x, mv, eps, z)
        return np.stack([_broadcast(dsl.evaluate(e, ctx), x.shape[0]) for e in self.h], axis=1)

    def describe(self):
        return {"type": "expr", **self.sources}


class FunctionCoefficients(Coefficients):
    """Coefficients from plain vectorised callables (``None`` means zero)."""

    def __init__(self, drift=None, diffusion=None, jump=None, dim_d=1, dim_m=1,
                 uses_measure=True, jump_uses_mark=False, label="functions"):
        self._b, self._s, self._h = drift, diffusion, jump
        self.dim_d, self.dim_m = dim_d, dim_m
        self.uses_measure = uses_measure
        self.jump_uses_mark = jump_uses_mark
        self.label = label

    def drift(self, t, x, mv, eps):
        if self._b is None:
            return np.zeros_like(x)
        return np.broadcast_to(self._b(t, x, mv, eps), x.shape)

    def diffusion(self, t, x, mv, eps):
        shape = (x.shape[0], self.dim_d, self.dim_m)
        if self._s is None:
            return np.zeros(shape)
        return np.broadcast_to(self._s(t, x, mv, eps), shape)

    def jump(self, t, x, mv, z, eps):
        if self._h is None:
            return np.zeros_like(x)
        return np.broadcast_to(self._h(t, x, mv, z, eps), x.shape)

    def describe(self):
        return {"type": "functions", "label": self.label}


def _psi(x):
    return x * np.sin(np.log1p(x * x) ** 2)


def _phi(x):
    return x * np.sin(np.log1p(x * x) ** 1.5)


class Example41Coefficients(Coefficients):
    """One-dimensional mean-field example with fast time factors.

    Fast form (``s = t/eps``)::

        b = (x - x^3) s/(1+s) + E X,  sigma = psi(x) s/(2+s) + E X,
        h = phi(x) (1 - exp(-s)) + E X

    with ``psi(x) = x sin(log(1+x^2)^2)`` and ``phi(x) = x sin(log(1+x^2)^1.5)``.
    The averaged form replaces every time factor by its limit 1.
    """

    jump_uses_mark = False

    def __init__(self, averaged=False):
        self.averaged = averaged

    def _factors(self, t, eps):
        if self.averaged:
            return 1.0, 1.0, 1.0
        s = t / (1.0 if eps is None else eps)
        return s / (1.0 + s), s / (2.0 + s), -np.expm1(-s)

    def drift(self, t, x, mv, eps):
        fb, _, _ = self._factors(t, eps)
        return (x - x ** 3) * fb + mv.mean(1)

    def diffusion(self, t, x, mv, eps):
        _, fs, _ = self._factors(t, eps)
        return (_psi(x) * fs + mv.mean(1))[:, :, None]

    def jump(self, t, x, mv, z, eps):
        _, _, fh = self._factors(t, eps)
        return _phi(x) * fh + mv.mean(1)

    def describe(self):
        return {"type": "example_4_1", "averaged": self.averaged}


class Remark21Coefficients(Coefficients):
    """``b = x^3 - cbrt(x) + t + E X`` (odd real cube root), ``sigma = s``, ``h = 0``."""

    jump_uses_mark = False

    def __init__(self, s=0.0):
        self.s = float(s)

    def drift(self, t, x, mv, eps):
        return x ** 3 - np.cbrt(x) + t + mv.mean(1)

    def diffusion(self, t, x, mv, eps):
        return np.full((x.shape[0], 1, 1), self.s)

    def jump(self, t, x, mv, z, eps):
        return np.zeros_like(x)

    def describe(self):
        return {"type": "remark_2_1_drift", "s": self.s}


class LinearCoefficients(Coefficients):
    """``dX = a X dt + s dW + c dN~`` (no measure dependence)."""

    uses_measure = False
    jump_uses_mark = False

    def __init__(self, a, s, c):
        self.a, self.s, self.c = float(a), float(s), float(c)

    def drift(self, t, x, mv, eps):
        return self.a * x

    def diffusion(self, t, x, mv, eps):
        return np.full((x.shape[0], 1, 1), self.s)

    def jump(self, t, x, mv, z, eps):
        return np.full_like(x, self.c)

    def describe(self):
        return {"type": "linear_ou_jump", "a": self.a, "s": self.s, "c": self.c}


@dataclass(frozen=True)
class Scenario:
    coefficients: Coefficients
    jump_spec: JumpMeasureSpec
    initial: InitialLaw
    horizon: float
    dim_d: int = 1
    dim_m: int = 1
    eps: float | None = None
    kappa: float = 2.0
    r: float = 4.0
    name: str = "custom"
    params: tuple = ()

    def __post_init__(self):
        if not (isinstance(self.horizon, (int, float)) and self.horizon > 0 and math.isfinite(self.horizon)):
            raise ConfigError(f"horizon T must be positive, got {self.horizon}")
        if self.dim_d < 1 or self.dim_m < 1:
            raise ConfigError("dimensions d and m must be at least 1")
        if self.kappa < 2:
            raise ConfigError(f"kappa must be >= 2, got {self.kappa}")
        if self.r < max(self.kappa ** 2 / 2, 4):
            raise ConfigError(f"r={self.r} violates r >= max(kappa^2/2, 4) = {max(self.kappa ** 2 / 2, 4)}")
        if self.eps is not None and not self.eps > 0:
            raise ConfigError(f"eps must be positive, got {self.eps}")
        if self.jump_spec.dim != self.dim_d:
            raise ConfigError(f"jump marks have dimension {self.jump_spec.dim}, expected {self.dim_d}")
        if self.initial.dim != self.dim_d:
            raise ConfigError(f"initial value has dimension {self.initial.dim}, expected {self.dim_d}")
        coef = self.coefficients
        if isinstance(coef, ExprCoefficients):
            if (coef.dim_d, coef.dim_m) != (self.dim_d, self.dim_m):
                raise ConfigError("expression coefficients do not match the scenario dimensions")
            if coef.uses_eps and self.eps is None:
                raise ConfigError("coefficients use eps but the scenario defines none")

    def with_eps(self, eps) -> Scenario:
        return replace(self, eps=eps)

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": dict(self.params),
            "coefficients": self.coefficients.describe(),
            "jump_spec": {"total_mass": self.jump_spec.total_mass, "kind": self.jump_spec.kind,
                          "atoms": self.jump_spec.atoms, "weights": self.jump_spec.weights,
                          "std": self.jump_spec.std, "nodes": self.jump_spec.nodes},
            "initial": {"kind": self.initial.kind, "value": self.initial.value, "spread": self.initial.spread},
            "horizon": self.horizon, "d": self.dim_d, "m": self.dim_m,
            "eps": self.eps, "kappa": self.kappa, "r": self.r,
        }

    def digest(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


@dataclass(frozen=True)
class AveragedPair:
    fast: Scenario
    averaged: Scenario
    rate_functions: dict = field(default_factory=dict)

    def __post_init__(self):
        f, a = self.fast, self.averaged
        for attr in ("dim_d", "dim_m", "initial", "horizon", "jump_spec"):
            if getattr(f, attr) != getattr(a, attr):
                raise ConfigError(f"fast and averaged scenarios differ in {attr}")

    def with_eps(self, eps) -> AveragedPair:
        return replace(self, fast=self.fast.with_eps(eps))


def eval_coefficient(field_name, scenario: Scenario, t, x, measure, z=None):
    """Evaluate one coefficient at a single state.

    ``field_name`` is ``"b"``, ``"sigma"`` or ``"h"``; returns a ``(d,)``
    vector (b, h) or a ``(d, m)`` matrix (sigma).
    """
    name = {"σ": "sigma", "drift": "b", "diffusion": "sigma", "jump": "h"}.get(field_name, field_name)
    if name not in ("b", "sigma", "h"):
        raise ConfigError(f"unknown coefficient {field_name!r}")
    if (z is not None) != (name == "h"):
        raise ConfigError("a jump mark z is required for h and only for h")
    xv = np.atleast_1d(np.asarray(x, dtype=float))
    if xv.shape != (scenario.dim_d,):
        raise ConfigError(f"state must have {scenario.dim_d} component(s)")
    mv = _as_view(measure)
    coef = scenario.coefficients
    where = f"t={t}, x={xv.tolist()}" + (f", z={z}" if z is not None else "")
    try:
        with np.errstate(all="ignore"):
            if name == "b":
                out = coef.drift(t, xv[None, :], mv, scenario.eps)[0]
            elif name == "sigma":
                out = coef.diffusion(t, xv[None, :], mv, scenario.eps)[0]
            else:
                zv = np.atleast_1d(np.asarray(z, dtype=float))
                out = coef.jump(t, xv[None, :], mv, zv if coef.jump_uses_mark else None, scenario.eps)[0]
    except EvaluationError as exc:
        raise EvaluationError(f"coefficient {name} failed at {where}: {exc}") from exc
    out = np.array(out, dtype=float)
    if not np.all(np.isfinite(out)):
        raise EvaluationError(f"coefficient {name} is not finite at {where}")
    return out


def linear_ou_jump_moments(a, s, c, lam, x0, t):
    """Exact mean and variance of ``dX = aX dt + s dW + c dN~`` at time ``t``."""
    mean = x0 * math.exp(a * t)
    rate = s * s + c * c * lam
    var = rate * t if a == 0 else rate * math.expm1(2 * a * t) / (2 * a)
    return mean, var


BUILTIN_NAMES = ("example_4_1", "remark_2_1_drift", "linear_ou_jump")

_ALIASES = {"λ": "lam", "lambda": "lam", "x₀": "x0"}


def _params(name, given, defaults):
    out = dict(defaults)
    for key, value in (given or {}).items():
        key = _ALIASES.get(key, key)
        if key not in defaults:
            raise ConfigError(f"unknown parameter {key!r} for scenario {name!r}")
        try:
            out[key] = float(value)
        except (TypeError, ValueError):
            raise ConfigError(f"parameter {key!r} of {name!r} must be a number, got {value!r}") from None
        if not math.isfinite(out[key]):
            raise ConfigError(f"parameter {key!r} of {name!r} must be finite")
    return out


def builtin_scenario(name: str, params: dict | None = None):
    """Construct a built-in scenario.

    ``example_4_1`` returns an :class:`AveragedPair` (params ``x0``, ``T``,
    ``eps``, ``lam``); ``remark_2_1_drift`` and ``linear_ou_jump`` return a
    :class:`Scenario`.
    """
    if name == "example_4_1":
        p = _params(name, params, {"x0": 1.0, "T": 10.0, "eps": 0.01, "lam": 1.0})
        if p["eps"] <= 0:
            raise ConfigError(f"eps must be positive, got {p['eps']}")
        if p["T"] <= 0:
            raise ConfigError(f"T must be positive, got {p['T']}")
        if p["lam"] < 0:
            raise ConfigError(f"jump intensity must be non-negative, got {p['lam']}")
        common = dict(jump_spec=JumpMeasureSpec.dirac(1.0, mass=p["lam"]),
                      initial=InitialLaw.constant(p["x0"]), horizon=p["T"],
                      kappa=6.0, r=18.0, params=tuple(sorted(p.items())))
        fast = Scenario(Example41Coefficients(averaged=False), eps=p["eps"], name="example_4_1/fast", **common)
        averaged = Scenario(Example41Coefficients(averaged=True), name="example_4_1/averaged", **common)
        rates = {
            "drift": lambda t: 1.0 / (1.0 + t),
            "diffusion": lambda t: 1.0 / (1.0 + t),
            "jump": lambda t: -math.expm1(-2.0 * t) / (2.0 * t),
        }
        return AveragedPair(fast, averaged, rates)
    if name == "remark_2_1_drift":
        p = _params(name, params, {"x0": 0.5, "T": 1.0, "s": 0.0})
        return Scenario(Remark21Coefficients(p["s"]), JumpMeasureSpec.none(1), InitialLaw.constant(p["x0"]),
                        p["T"], kappa=6.0, r=18.0, name=name, params=tuple(sorted(p.items())))
    if name == "linear_ou_jump":
        p = _params(name, params, {"a": -1.0, "s": 0.5, "c": 0.2, "lam": 1.0, "x0": 1.0, "T": 1.0})
        if p["lam"] < 0:
            raise ConfigError(f"jump intensity must be non-negative, got {p['lam']}")
        return Scenario(LinearCoefficients(p["a"], p["s"], p["c"]), JumpMeasureSpec.dirac(1.0, mass=p["lam"]),
                        InitialLaw.constant(p["x0"]), p["T"], name=name, params=tuple(sorted(p.items())))
    raise ConfigError(f"unknown built-in scenario {name!r}; choose from {', '.join(BUILTIN_NAMES)}")


def expression_scenario(b, sigma, h, *, horizon, x0=0.0, jump_spec=None, dim_d=1, dim_m=1,
                        eps=None, kappa=2.0, r=4.0, initial=None, name="expressions") -> Scenario:
    """Scenario from coefficient expression sources (scalars allowed when d = m = 1)."""
    if isinstance(b, str):
        b = [b]
    if isinstance(h, str):
        h = [h]
    if isinstance(sigma, str):
        sigma = [[sigma]]
    coef = ExprCoefficients(b, sigma, h, dim_d, dim_m)
    return Scenario(coef, jump_spec or JumpMeasureSpec.none(dim_d),
                    initial or InitialLaw.constant(np.broadcast_to(np.asarray(x0, float), (dim_d,))),
                    float(horizon), dim_d, dim_m, eps, kappa, r, name)

