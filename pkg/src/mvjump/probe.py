"""Numerical probes of the structural assumptions on the coefficients.

Sup-type constants are estimated by random sampling followed by a short
local hill-climb from every sample.  Each sample draws its randomness from
its own row of one random matrix, so its polished value does not depend on
how many samples are taken: raising ``sample_count`` can only raise an
estimated maximum.  All estimates are lower bounds for the true suprema.

The measure argument ranges over a finite pool of empirical measures with
atoms uniform in ``[-R, R]^d``; this stands in for "all measures with finite
second moment" and is the main reason the estimates are not certified.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import integrate

from .errors import ConfigError
from .measure import wasserstein_2_assignment, wasserstein_p_1d
from .model import AveragedPair, MeasureView, Scenario
from .noise import compensator_integral

__all__ = [
    "ProbeConfig",
    "ProbeEntry",
    "ProbeReport",
    "RateCurves",
    "ESTIMATE_LABEL",
    "measure_pool",
    "probe_one_sided_lipschitz",
    "probe_measure_lipschitz",
    "probe_continuity",
    "probe_growth",
    "probe_initial_moment",
    "probe_jump_growth",
    "probe_averaging_rate",
    "estimate_averaged_coefficient",
    "run_probes",
]

ESTIMATE_LABEL = "estimated (>= true value not guaranteed)"
CONTINUITY_STEP = 1e-7
CONTINUITY_TOLERANCE = 1e-3


@dataclass(frozen=True)
class ProbeConfig:
    radius: float = 1.0
    sample_count: int = 2000
    time_points: int = 10
    pool_sizes: tuple = (1, 10, 100)
    pool_per_size: int = 4
    tolerance: float = 1e-6
    refine_rounds: int = 12
    seed: int = 0
    bounds: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.radius > 0:
            raise ConfigError(f"probe radius must be positive, got {self.radius}")
        if self.sample_count < 1:
            raise ConfigError("sample_count must be at least 1")
        if self.time_points < 1:
            raise ConfigError("time_points must be at least 1")
        if not self.pool_sizes or min(self.pool_sizes) < 1 or self.pool_per_size < 1:
            raise ConfigError("measure pool sizes must be positive")
        if self.tolerance < 0:
            raise ConfigError("tolerance must be non-negative")

    def to_dict(self):
        return {k: (dict(v) if isinstance(v, dict) else v) for k, v in asdict(self).items()}


@dataclass
class ProbeEntry:
    estimate: float
    witness: dict = field(default_factory=dict)
    bound: float | None = None
    passed: bool | None = None
    label: str = ESTIMATE_LABEL

    def check(self, bound, tolerance):
        """Pass iff the estimate does not exceed ``bound`` by more than ``tolerance`` (relative)."""
        self.bound = float(bound)
        self.passed = bool(self.estimate <= self.bound + tolerance * max(1.0, abs(self.bound)))
        return self.passed


@dataclass
class ProbeReport:
    scenario: str
    seed: int
    config: dict
    entries: dict = field(default_factory=dict)

    @property
    def failed(self):
        return sorted(k for k, e in self.entries.items() if e.passed is False)

    def apply_bounds(self, bounds, tolerance):
        for name, bound in bounds.items():
            if name not in self.entries:
                raise ConfigError(f"declared bound for unknown probe {name!r}; known: {', '.join(sorted(self.entries))}")
            self.entries[name].check(bound, tolerance)

    def to_dict(self):
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "config": self.config,
            "entries": {k: asdict(v) for k, v in sorted(self.entries.items())},
            "failed": self.failed,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return str(obj)


def measure_pool(config: ProbeConfig, dim: int):
    """Empirical measures with atoms uniform in ``[-R, R]^d``, ``pool_per_size`` per size."""
    rng = np.random.default_rng([config.seed, 7919])
    pool = []
    for K in config.pool_sizes:
        for _ in range(config.pool_per_size):
            pool.append(MeasureView(config.radius * (2 * rng.random((K, dim)) - 1)))
    return pool


def _clip(x, radius):
    norm = np.linalg.norm(x, axis=-1, keepdims=True)
    return np.where(norm > radius, x * (radius / np.maximum(norm, 1e-300)), x)


class _Samples:
    """Per-sample random rows of one ``(sample_count, width)`` matrix."""

    def __init__(self, config, salt, width):
        self.rows = np.random.default_rng([config.seed, salt]).random((config.sample_count, width))
        self.col = 0

    def take(self, k):
        out = self.rows[:, self.col:self.col + k]
        self.col += k
        return out


def _draw(scenario, config, salt, n_members, extra=0):
    """Times, pool indices, two points in the ball, hill-climb steps, extra columns."""
    d, rounds = scenario.dim_d, config.refine_rounds
    s = _Samples(config, salt, 2 + 2 * d + 2 * d * rounds + extra)
    t = scenario.horizon * s.take(1)[:, 0]
    member = np.minimum((s.take(1)[:, 0] * n_members).astype(int), n_members - 1)
    x = _clip(config.radius * (2 * s.take(d) - 1), config.radius)
    y = _clip(config.radius * (2 * s.take(d) - 1), config.radius)
    steps = s.take(2 * d * rounds).reshape(-1, rounds, 2, d)
    return t, member, x, y, steps, s.take(extra)


def _grouped(objective, t, member, pool, x, y):
    out = np.full(x.shape[0], -np.inf)
    for g in np.unique(member):
        idx = np.flatnonzero(member == g)
        with np.errstate(all="ignore"):
            v = np.asarray(objective(t[idx][:, None], x[idx], y[idx], pool[g]), dtype=float)
        out[idx] = np.where(np.isfinite(v), v, -np.inf)
    return out


def _maximise(objective, t, member, pool, x, y, steps, radius, move_y=True):
    """Polish every sample by accept-if-better random moves of shrinking size."""
    best = _grouped(objective, t, member, pool, x, y)
    scale = 0.1 * radius
    for r in range(steps.shape[1]):
        px = _clip(x + scale * (2 * steps[:, r, 0] - 1), radius)
        py = _clip(y + scale * (2 * steps[:, r, 1] - 1), radius) if move_y else y
        cand = _grouped(objective, t, member, pool, px, py)
        better = cand > best
        x = np.where(better[:, None], px, x)
        y = np.where(better[:, None], py, y)
        best = np.where(better, cand, best)
        scale *= 0.7
    return best, x, y


def _entry(values, t, member, x, y=None, **extra):
    if not np.any(np.isfinite(values)):
        return ProbeEntry(float("nan"), {"note": "no admissible sample", **extra})
    i = int(np.argmax(values))
    witness = {"t": float(t[i]), "x": x[i].tolist(), "measure_index": int(member[i]), "sample": i}
    if y is not None:
        witness["y"] = y[i].tolist()
    witness.update(extra)
    return ProbeEntry(float(values[i]), witness)


def _jump_norm(coef, t, x, mv, eps, spec, power=2.0, y=None, mv2=None):
    """``int |h(t,x,mu,z) - h(t,y,mu2,z)|^power nu(dz)`` per row (``y=None`` drops the second term)."""
    if spec.total_mass == 0:
        return np.zeros(x.shape[0])
    mv2 = mv if mv2 is None else mv2

    def integrand(z):
        h = coef.jump(t, x, mv, z, eps)
        if y is not None:
            h = h - coef.jump(t, y, mv2, z, eps)
        return np.sum(h * h, axis=1) ** (power / 2)

    if coef.jump_uses_mark:
        return compensator_integral(integrand, spec)
    return spec.total_mass * integrand(None)


def probe_one_sided_lipschitz(scenario: Scenario, config: ProbeConfig) -> dict:
    """Local constant ``L_R`` over ``|x|, |y| <= R`` for drift, diffusion and jump.

    drift ``<x-y, b(x)-b(y)>/|x-y|^2``, diffusion ``||s(x)-s(y)||^2/|x-y|^2``,
    jump ``int |h(x)-h(y)|^2 nu(dz)/|x-y|^2``.
    """
    coef, eps, spec = scenario.coefficients, scenario.eps, scenario.jump_spec
    pool = measure_pool(config, scenario.dim_d)
    t, member, x, y, steps, _ = _draw(scenario, config, 101, len(pool))
    floor = (1e-9 * config.radius) ** 2

    def ratio(num):
        def objective(tc, xa, ya, mv):
            dx = xa - ya
            nrm = np.sum(dx * dx, axis=1)
            return np.where(nrm > floor, num(tc, xa, ya, mv) / np.where(nrm > floor, nrm, 1.0), -np.inf)
        return objective

    def drift(tc, xa, ya, mv):
        return np.sum((xa - ya) * (coef.drift(tc, xa, mv, eps) - coef.drift(tc, ya, mv, eps)), axis=1)

    def diffusion(tc, xa, ya, mv):
        dd = coef.diffusion(tc, xa, mv, eps) - coef.diffusion(tc, ya, mv, eps)
        return np.sum(dd * dd, axis=(1, 2))

    def jump(tc, xa, ya, mv):
        return _jump_norm(coef, tc, xa, mv, eps, spec, y=ya)

    out = {}
    for name, num in (("A1_drift", drift), ("A1_diffusion", diffusion), ("A1_jump", jump)):
        best, bx, by = _maximise(ratio(num), t, member, pool, x, y, steps, config.radius)
        out[name] = _entry(best, t, member, bx, by, radius=config.radius)
    return out


def _pool_distances(pool):
    P = len(pool)
    dist = np.full((P, P), np.nan)
    for i in range(P):
        for j in range(P):
            a, b = pool[i].measure, pool[j].measure
            if a.dim == 1:
                dist[i, j] = wasserstein_p_1d(a, b, 2)
            elif a.size == b.size:
                dist[i, j] = wasserstein_2_assignment(a, b)
    return dist


def probe_measure_lipschitz(scenario: Scenario, config: ProbeConfig) -> dict:
    """Global measure-Lipschitz constant ``L`` (x fixed, two measures).

    ``(|b(x,mu1)-b(x,mu2)|^2 + ||s(x,mu1)-s(x,mu2)||^2 + int |h(x,mu1)-h(x,mu2)|^2) / W2(mu1,mu2)^2``.
    With ``kappa > 2`` also the jump constant ``L'`` with exponent ``kappa``.
    """
    coef, eps, spec = scenario.coefficients, scenario.eps, scenario.jump_spec
    pool = measure_pool(config, scenario.dim_d)
    dist = _pool_distances(pool)
    t, _, x, _, _, extra = _draw(scenario, config, 211, len(pool), extra=2)
    P = len(pool)
    i = np.minimum((extra[:, 0] * P).astype(int), P - 1)
    j = np.minimum((extra[:, 1] * P).astype(int), P - 1)
    w = dist[i, j]
    ok = np.isfinite(w) & (w > 1e-12)
    num2 = np.full(x.shape[0], -np.inf)
    numk = np.full(x.shape[0], -np.inf)
    kappa = scenario.kappa
    for a in range(P):
        for b in range(P):
            idx = np.flatnonzero(ok & (i == a) & (j == b))
            if idx.size == 0:
                continue
            tc, xa, m1, m2 = t[idx][:, None], x[idx], pool[a], pool[b]
            with np.errstate(all="ignore"):
                db = coef.drift(tc, xa, m1, eps) - coef.drift(tc, xa, m2, eps)
                ds = coef.diffusion(tc, xa, m1, eps) - coef.diffusion(tc, xa, m2, eps)
                dh2 = _jump_norm(coef, tc, xa, m1, eps, spec, y=xa, mv2=m2)
                dhk = _jump_norm(coef, tc, xa, m1, eps, spec, power=kappa, y=xa, mv2=m2)
            num2[idx] = (np.sum(db * db, axis=1) + np.sum(ds * ds, axis=(1, 2)) + dh2) / w[idx] ** 2
            numk[idx] = dhk / w[idx] ** kappa
    member = i
    out = {"A2": _entry(num2, t, member, x, None, second_measure_index=None)}
    k = int(np.argmax(num2)) if np.any(np.isfinite(num2)) else 0
    out["A2"].witness["second_measure_index"] = int(j[k])
    out["A7_measure_kappa"] = _entry(numk, t, member, x, None, kappa=kappa)
    return out


def probe_continuity(scenario: Scenario, config: ProbeConfig) -> dict:
    """Largest coefficient change under a tiny state and measure perturbation.

    Only finite-difference stability is checked; a change above
    ``CONTINUITY_TOLERANCE`` under a ``CONTINUITY_STEP`` perturbation fails.
    """
    coef, eps, spec = scenario.coefficients, scenario.eps, scenario.jump_spec
    pool = measure_pool(config, scenario.dim_d)
    t, member, x, _, _, extra = _draw(scenario, config, 307, len(pool), extra=scenario.dim_d)
    delta = CONTINUITY_STEP * (1.0 + config.radius)
    direction = 2 * extra - 1
    direction /= np.maximum(np.linalg.norm(direction, axis=1, keepdims=True), 1e-300)
    xp = x + delta * direction
    shifted = [MeasureView(mv.atoms + delta) for mv in pool]
    change = np.full(x.shape[0], -np.inf)
    for g in np.unique(member):
        idx = np.flatnonzero(member == g)
        tc, xa, xb = t[idx][:, None], x[idx], xp[idx]
        mv, mvs = pool[g], shifted[g]
        with np.errstate(all="ignore"):
            parts = [
                np.max(np.abs(coef.drift(tc, xb, mvs, eps) - coef.drift(tc, xa, mv, eps)), axis=1),
                np.max(np.abs(coef.diffusion(tc, xb, mvs, eps) - coef.diffusion(tc, xa, mv, eps)), axis=(1, 2)),
            ]
            if spec.total_mass > 0:
                comp = lambda xx, m: compensator_integral(  # noqa: E731
                    lambda z: coef.jump(tc, xx, m, z if coef.jump_uses_mark else None, eps), spec)
                parts.append(np.max(np.abs(comp(xb, mvs) - comp(xa, mv)), axis=1))
        change[idx] = np.max(np.stack(parts), axis=0)
    entry = _entry(change, t, member, x, None, step=delta)
    entry.check(CONTINUITY_TOLERANCE, 0.0)
    return {"A3": entry}


def probe_growth(scenario: Scenario, config: ProbeConfig) -> dict:
    """Linear-growth constants ``K`` (per coefficient), ``K_1`` and the fitted order ``kappa``.

    ``kappa_hat`` is the least-squares slope of ``log|b|^2`` against
    ``log|x|`` for ``|x|`` from ``10 max(R,1)`` to ``1000 max(R,1)`` along the
    first axis, at ``t = T`` with the measure frozen at ``delta_0``.
    """
    coef, eps, spec, kappa = scenario.coefficients, scenario.eps, scenario.jump_spec, scenario.kappa
    pool = measure_pool(config, scenario.dim_d)
    t, member, x, y, steps, _ = _draw(scenario, config, 401, len(pool))

    def denom(xa, mv, power=2.0):
        w = mv.w2d0()
        return 1.0 + np.sum(xa * xa, axis=1) ** (power / 2) + w ** power

    objectives = {
        "A4_drift": lambda tc, xa, ya, mv: np.sum(xa * coef.drift(tc, xa, mv, eps), axis=1) / denom(xa, mv),
        "A4_diffusion": lambda tc, xa, ya, mv: np.sum(coef.diffusion(tc, xa, mv, eps) ** 2, axis=(1, 2)) / denom(xa, mv),
        "A4_jump": lambda tc, xa, ya, mv: _jump_norm(coef, tc, xa, mv, eps, spec) / denom(xa, mv),
        "A5": lambda tc, xa, ya, mv: np.sum(coef.drift(tc, xa, mv, eps) ** 2, axis=1) / denom(xa, mv, kappa),
    }
    out = {}
    for name, obj in objectives.items():
        best, bx, _ = _maximise(obj, t, member, pool, x, y, steps, config.radius, move_y=False)
        out[name] = _entry(best, t, member, bx, None)
    out["A4"] = max((out[k] for k in ("A4_drift", "A4_diffusion", "A4_jump")), key=lambda e: e.estimate)
    out["A4"] = ProbeEntry(out["A4"].estimate, dict(out["A4"].witness))
    out["A5"].witness["kappa"] = kappa

    base = 10.0 * max(config.radius, 1.0)
    radii = np.geomspace(base, 100 * base, 25)
    pts = np.zeros((radii.size, scenario.dim_d))
    pts[:, 0] = radii
    delta0 = MeasureView(np.zeros((1, scenario.dim_d)))
    with np.errstate(all="ignore"):
        b2 = np.sum(coef.drift(np.full((radii.size, 1), scenario.horizon), pts, delta0, eps) ** 2, axis=1)
    ok = b2 > 0
    if ok.sum() >= 2:
        slope = float(np.polyfit(np.log(radii[ok]), np.log(b2[ok]), 1)[0])
    else:
        slope = 0.0
    out["A5_kappa"] = ProbeEntry(slope, {"radii": [float(radii[0]), float(radii[-1])], "t": scenario.horizon,
                                         "declared_kappa": kappa}, label="fitted growth order")
    return out


def probe_jump_growth(scenario: Scenario, config: ProbeConfig) -> dict:
    """Constants ``K_2`` (order r), ``K_3`` (order kappa) and local ``L'_R`` for the jump coefficient."""
    coef, eps, spec = scenario.coefficients, scenario.eps, scenario.jump_spec
    r, kappa = scenario.r, scenario.kappa
    pool = measure_pool(config, scenario.dim_d)
    t, member, x, y, steps, _ = _draw(scenario, config, 503, len(pool))

    def growth(power):
        def obj(tc, xa, ya, mv):
            den = 1.0 + np.sum(xa * xa, axis=1) ** (power / 2) + mv.w2d0() ** power
            return _jump_norm(coef, tc, xa, mv, eps, spec, power=power) / den
        return obj

    def local(tc, xa, ya, mv):
        nrm = np.sum((xa - ya) ** 2, axis=1) ** (kappa / 2)
        ok = nrm > (1e-9 * config.radius) ** kappa
        val = _jump_norm(coef, tc, xa, mv, eps, spec, power=kappa, y=ya)
        return np.where(ok, val / np.where(ok, nrm, 1.0), -np.inf)

    out = {}
    best, bx, _ = _maximise(growth(r), t, member, pool, x, y, steps, config.radius, move_y=False)
    out["A7_r"] = _entry(best, t, member, bx, None, r=r)
    best, bx, _ = _maximise(growth(kappa), t, member, pool, x, y, steps, config.radius, move_y=False)
    out["A7_kappa"] = _entry(best, t, member, bx, None, kappa=kappa)
    best, bx, by = _maximise(local, t, member, pool, x, y, steps, config.radius)
    out["A7_local_kappa"] = _entry(best, t, member, bx, by, kappa=kappa)
    return out


def probe_initial_moment(scenario: Scenario, config: ProbeConfig) -> dict:
    """``E|x0|^r`` (Monte Carlo for random laws) and the constraint ``r >= max(kappa^2/2, 4)``."""
    r, kappa = scenario.r, scenario.kappa
    x0 = scenario.initial.sample(config.seed, 1 if scenario.initial.kind == "constant" else 10_000)
    moment = float(np.mean(np.sum(x0 * x0, axis=1) ** (r / 2)))
    need = max(kappa * kappa / 2, 4.0)
    entry = ProbeEntry(moment, {"r": r, "kappa": kappa, "required_r": need}, label="initial moment E|x0|^r")
    entry.passed = bool(math.isfinite(moment) and r >= need)
    return {"A6": entry}


@dataclass
class RateCurves:
    """``values[i, j]`` is ``(1/t_i) int_0^{t_i} |coef(s) - coef_bar|^power ds`` at point ``j``."""

    coefficient: str
    power: float
    times: np.ndarray
    points: list
    values: np.ndarray
    rate_constant: float | None = None


def _default_points(scenario, config, count=8):
    pool = measure_pool(config, scenario.dim_d)
    s = _Samples(config, 601, scenario.dim_d + 1)
    n = min(count, config.sample_count)
    xs = _clip(config.radius * (2 * s.rows[:n, :scenario.dim_d] - 1), config.radius)
    members = np.minimum((s.rows[:n, -1] * len(pool)).astype(int), len(pool) - 1)
    return [(xs[k], pool[members[k]]) for k in range(n)]


def _normalise_points(points, scenario):
    out = []
    for x, mu in points:
        xv = np.atleast_1d(np.asarray(x, dtype=float))
        if xv.shape != (scenario.dim_d,):
            raise ConfigError(f"probe point must have {scenario.dim_d} component(s)")
        out.append((xv, mu if isinstance(mu, MeasureView) else MeasureView(mu)))
    return out


def _deviation(field_name, fast, avg, s, x, mv, power):
    """``|coef_fast(s,x,mu) - coef_avg(x,mu)|^power`` (integrated against nu for the jump)."""
    cf, ca = fast.coefficients, avg.coefficients
    X = x[None, :]
    if field_name == "drift":
        d = cf.drift(s, X, mv, fast.eps) - ca.drift(s, X, mv, avg.eps)
        return float(np.sum(d * d) ** (power / 2))
    if field_name == "diffusion":
        d = cf.diffusion(s, X, mv, fast.eps) - ca.diffusion(s, X, mv, avg.eps)
        return float(np.sum(d * d) ** (power / 2))
    spec = fast.jump_spec
    if spec.total_mass == 0:
        return 0.0

    def integrand(z):
        zf = z if cf.jump_uses_mark else None
        za = z if ca.jump_uses_mark else None
        d = cf.jump(s, X, mv, zf, fast.eps) - ca.jump(s, X, mv, za, avg.eps)
        return float(np.sum(d * d) ** (power / 2))

    return float(compensator_integral(integrand, spec))


def probe_averaging_rate(pair: AveragedPair, config: ProbeConfig, points=None, times=None,
                         fields=("drift", "diffusion", "jump"), powers=None) -> dict:
    """Time-averaged squared deviation of fast from averaged coefficients.

    The fast coefficient is taken in its unscaled form (``eps = 1``), i.e.
    ``b(s, x, mu)`` rather than ``b(s/eps, x, mu)``.  When the pair carries a
    rate function for a field, ``rate_constant`` is the smallest ``C`` with
    ``curve <= phi(t) C (1 + |x|^power)`` on the sampled points.
    """
    fast = pair.fast.with_eps(1.0)
    avg = pair.averaged
    pts = _normalise_points(points, fast) if points is not None else _default_points(fast, config)
    if times is None:
        T = fast.horizon
        times = np.linspace(T / config.time_points, T, config.time_points)
    times = np.asarray(times, dtype=float)
    if np.any(times <= 0):
        raise ConfigError("averaging-rate times must be positive")
    powers = dict(powers or {})
    out = {}
    for name in fields:
        power = float(powers.get(name, 2.0))
        values = np.empty((times.size, len(pts)))
        for j, (x, mv) in enumerate(pts):
            f = lambda s, x=x, mv=mv: _deviation(name, fast, avg, s, x, mv, power)  # noqa: E731
            edges = np.concatenate([[0.0], times])
            acc = 0.0
            for i in range(times.size):
                with warnings.catch_warnings():
                    # roundoff warnings only mean the 1e-12 target was not met
                    warnings.simplefilter("ignore", integrate.IntegrationWarning)
                    part, _ = integrate.quad(f, edges[i], edges[i + 1], epsabs=0.0, epsrel=1e-12, limit=200)
                acc += part
                values[i, j] = acc / times[i]
        rate = pair.rate_functions.get(name if power == 2.0 else f"{name}_{power:g}")
        constant = None
        if rate is not None:
            phi = np.array([rate(s) for s in times])[:, None]
            xs = np.array([1.0 + np.sum(x * x) ** (power / 2) for x, _ in pts])[None, :]
            constant = float(np.max(values / (phi * xs)))
        out[name] = RateCurves(name, power, times, [(x.tolist(), mv.size) for x, mv in pts], values, constant)
    return out


def estimate_averaged_coefficient(scenario_fast: Scenario, t_max: float, config: ProbeConfig, points=None) -> dict:
    """``(1/t_max) int_0^{t_max} coef(s, x, mu) ds`` for drift, diffusion and jump.

    The jump entry is tabulated at each quadrature node of the jump measure
    (one column when the coefficient ignores the mark).
    """
    if not t_max > 0:
        raise ConfigError(f"t_max must be positive, got {t_max}")
    sc = scenario_fast
    coef = sc.coefficients
    pts = _normalise_points(points, sc) if points is not None else _default_points(sc, config)
    nodes, _ = sc.jump_spec.quadrature()
    if not coef.jump_uses_mark:
        nodes = nodes[:1]

    def average(fn):
        val, _ = integrate.quad_vec(fn, 0.0, float(t_max), epsabs=1e-13, epsrel=1e-10, limit=2000)
        return val / t_max

    drift, diffusion, jump = [], [], []
    for x, mv in pts:
        X = x[None, :]
        drift.append(average(lambda s: coef.drift(s, X, mv, sc.eps)[0]))
        diffusion.append(average(lambda s: coef.diffusion(s, X, mv, sc.eps)[0]))
        jump.append(np.stack([
            average(lambda s, z=z: coef.jump(s, X, mv, z if coef.jump_uses_mark else None, sc.eps)[0])
            for z in nodes]))
    return {
        "points": [(x.tolist(), mv.size) for x, mv in pts],
        "drift": np.array(drift),
        "diffusion": np.array(diffusion),
        "jump": np.array(jump),
        "marks": nodes,
    }


def _probe_scenario(scenario, config, prefix=""):
    entries = {}
    for fn in (probe_one_sided_lipschitz, probe_measure_lipschitz, probe_continuity,
               probe_growth, probe_initial_moment, probe_jump_growth):
        for name, entry in fn(scenario, config).items():
            entries[prefix + name] = entry
    return entries


def run_probes(target, config: ProbeConfig) -> ProbeReport:
    """Probe a scenario (A1-A7) or an averaged pair (A1-A7 for both, plus A8/A9).

    For a pair, the fast scenario is probed in its unscaled form (eps = 1)
    and averaged-scenario entries carry the prefix ``averaged.``.
    """
    if isinstance(target, AveragedPair):
        fast = target.fast.with_eps(1.0)
        entries = _probe_scenario(fast, config)
        entries.update(_probe_scenario(target.averaged, config, "averaged."))
        curves = probe_averaging_rate(target, config)
        label = {"drift": "A8_drift", "diffusion": "A8_diffusion", "jump": "A8_jump"}
        for name, c in curves.items():
            est = c.rate_constant if c.rate_constant is not None else float(np.max(c.values))
            k = int(np.argmax(c.values.max(axis=0)))
            entries[label[name]] = ProbeEntry(
                est, {"point": c.points[k], "times": c.times.tolist(), "curve": c.values[:, k].tolist(),
                      "normalised": c.rate_constant is not None},
                label="rate constant C_R" if c.rate_constant is not None else "max time-averaged deviation")
        for lbl, power in (("A9_r", target.fast.r), ("A9_kappa", target.fast.kappa)):
            c = probe_averaging_rate(target, config, fields=("jump",), powers={"jump": power})["jump"]
            est = c.rate_constant if c.rate_constant is not None else float(np.max(c.values))
            entries[lbl] = ProbeEntry(est, {"power": power, "times": c.times.tolist()},
                                      label="rate constant C_R" if c.rate_constant is not None
                                      else "max time-averaged deviation")
        name = target.fast.name
    else:
        entries = _probe_scenario(target, config)
        name = target.name
    report = ProbeReport(name, config.seed, config.to_dict(), entries)
    report.apply_bounds(config.bounds, config.tolerance)
    return report
