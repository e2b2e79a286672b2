"""Monte Carlo experiments: averaging error, chaos rate, refinement, moments and Hölder.

Replication ``j`` of every experiment uses the seed ``base_seed ^ j``.
Replications may run on a thread pool; results are assembled in index
order, so reports do not depend on the thread count.  Suprema over time are
taken over grid times only.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import stats

from .errors import ConfigError, DivergenceError
from .measure import wasserstein_p_1d
from .model import AveragedPair, Scenario
from .noise import generate_noise_path
from .solver import INDEPENDENT_SEED_SALT, iterate, uniform_grid

__all__ = [
    "KINDS",
    "ExperimentPlan",
    "ExperimentReport",
    "ReportRow",
    "SlopeFit",
    "fit_slope",
    "replication_seed",
    "refinement_distance",
    "run_experiment",
    "run_averaging",
    "run_chaos",
    "run_refinement",
    "run_moment_and_holder",
    "with_horizon",
]

KINDS = ("averaging", "chaos", "refinement", "moments", "holder")
GRID_NOTE = "suprema over time are taken over grid times only"


def replication_seed(base_seed: int, j: int) -> int:
    return int(base_seed) ^ int(j)


@dataclass(frozen=True)
class ExperimentPlan:
    """One experiment.

    ``grid`` holds eps values (averaging), particle counts (chaos), step
    counts (refinement, moments) or time lags (holder).
    """

    kind: str
    grid: tuple
    scenario: Scenario | AveragedPair
    replications: int = 1
    base_seed: int = 0
    particles: int = 100
    steps: int = 1000
    reference_size: int = 10_000
    statistic: str = "wasserstein"
    coupling: str = "common"
    power: float | None = None
    holder_start: float = 0.0
    tolerance: float = 0.05
    workers: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown experiment kind {self.kind!r}; choose from {', '.join(KINDS)}")
        grid = tuple(float(g) if self.kind in ("averaging", "holder") else _as_int(g, "grid value")
                     for g in self.grid)
        object.__setattr__(self, "grid", grid)
        if not grid:
            raise ConfigError("experiment grid must not be empty")
        diffs = np.diff(grid)
        if diffs.size and not (np.all(diffs > 0) or np.all(diffs < 0)):
            raise ConfigError(f"experiment grid must be strictly monotone, got {list(grid)}")
        if any(g <= 0 for g in grid):
            raise ConfigError("experiment grid values must be positive")
        if self.replications < 1:
            raise ConfigError("replications must be at least 1")
        if self.particles < 1 or self.steps < 1 or self.reference_size < 1:
            raise ConfigError("particles, steps and reference_size must be positive")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")
        if self.statistic not in ("wasserstein", "gap"):
            raise ConfigError(f"unknown chaos statistic {self.statistic!r}")
        if self.coupling not in ("common", "independent"):
            raise ConfigError(f"unknown coupling {self.coupling!r}")
        if self.power is not None and self.power < 1:
            raise ConfigError("power must be at least 1")
        if self.kind == "averaging" and not isinstance(self.scenario, AveragedPair):
            raise ConfigError("an averaging experiment needs a fast/averaged pair")

    @property
    def target(self) -> Scenario:
        """The scenario a single-system experiment runs on (the averaged one for a pair)."""
        sc = self.scenario
        return sc.averaged if isinstance(sc, AveragedPair) else sc

    def describe(self) -> dict:
        sc = self.scenario
        if isinstance(sc, AveragedPair):
            scen = {"fast": sc.fast.describe(), "averaged": sc.averaged.describe()}
        else:
            scen = sc.describe()
        return {
            "kind": self.kind, "grid": list(self.grid), "replications": self.replications,
            "base_seed": self.base_seed, "particles": self.particles, "steps": self.steps,
            "reference_size": self.reference_size, "statistic": self.statistic,
            "coupling": self.coupling, "power": self.power, "holder_start": self.holder_start,
            "tolerance": self.tolerance, "scenario": scen,
        }


def _as_int(value, what):
    if float(value) != int(value):
        raise ConfigError(f"{what} must be an integer, got {value}")
    return int(value)


@dataclass(frozen=True)
class ReportRow:
    grid_value: float
    statistic: float
    stderr: float | None
    replications: int


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float | None
    ci_low: float | None
    ci_high: float | None
    points: int


def fit_slope(x, y, weights=None, level=0.95) -> SlopeFit | None:
    """Weighted least squares of ``log y`` on ``log x``; ``None`` for fewer than two points.

    The confidence interval uses Student's t with ``points - 2`` degrees of
    freedom and is absent when there are only two points.
    """
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    if lx.size < 2:
        return None
    if not np.all(np.isfinite(ly)):
        raise ConfigError("slope fit needs positive statistics")
    w = np.ones_like(lx) if weights is None else np.asarray(weights, float)
    W = np.sum(w)
    mx, my = np.dot(w, lx) / W, np.dot(w, ly) / W
    sxx = np.dot(w, (lx - mx) ** 2)
    slope = float(np.dot(w, (lx - mx) * (ly - my)) / sxx)
    intercept = float(my - slope * mx)
    dof = lx.size - 2
    if dof < 1:
        return SlopeFit(slope, intercept, None, None, None, int(lx.size))
    resid = ly - (intercept + slope * lx)
    # weights normalised to mean one so the residual variance keeps its scale
    wn = w * lx.size / W
    s2 = float(np.dot(wn, resid ** 2) / dof)
    se = math.sqrt(s2 / float(np.dot(wn, (lx - mx) ** 2)))
    q = float(stats.t.ppf(0.5 + level / 2, dof))
    return SlopeFit(slope, intercept, se, slope - q * se, slope + q * se, int(lx.size))


def _fmt(v):
    return "" if v is None else format(float(v), ".17g")


@dataclass
class ExperimentReport:
    kind: str
    rows: list
    fit: SlopeFit | None = None
    verdicts: dict = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "rows": [vars(r) for r in self.rows],
            "fit": None if self.fit is None else vars(self.fit),
            "verdicts": self.verdicts,
            "provenance": self.provenance,
            "extra": self.extra,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, default=_jsonable)

    def to_csv(self) -> str:
        buf = io.StringIO()
        out = csv.writer(buf, lineterminator="\r\n")
        out.writerow(["grid_value", "statistic", "stderr", "replications"])
        for r in self.rows:
            out.writerow([_fmt(r.grid_value), _fmt(r.statistic), _fmt(r.stderr), r.replications])
        return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    return str(obj)


def _summarise(values):
    """Mean and standard error over replications (stderr absent below two)."""
    v = np.asarray(values, float)
    se = float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size >= 2 else None
    return float(np.mean(v)), se


def _replicate(plan: ExperimentPlan, task):
    seeds = [replication_seed(plan.base_seed, j) for j in range(plan.replications)]
    if plan.workers == 1 or plan.replications == 1:
        return [task(s) for s in seeds], seeds
    with ThreadPoolExecutor(max_workers=plan.workers) as pool:
        return list(pool.map(task, seeds)), seeds


def _provenance(plan, seeds, **more):
    from . import __version__

    sc = plan.scenario
    digests = ({"fast": sc.fast.digest(), "averaged": sc.averaged.digest()}
               if isinstance(sc, AveragedPair) else {"scenario": sc.digest()})
    return {"version": __version__, "plan": plan.describe(), "digests": digests,
            "seeds": seeds, "note": GRID_NOTE, **more}


def _with_context(fn, what):
    def run(seed):
        try:
            return fn(seed)
        except DivergenceError as exc:
            raise DivergenceError(f"{what}, seed {seed}: {exc}", particle=exc.particle,
                                  step=exc.step, value=exc.value) from exc
    return run


def _noise(scenario, steps, particles, seed, horizon=None):
    grid = uniform_grid(scenario.horizon if horizon is None else horizon, steps)
    return generate_noise_path(seed, grid, particles, scenario.dim_m, scenario.jump_spec)


def run_averaging(plan: ExperimentPlan) -> ExperimentReport:
    """``E sup_t |X_eps(t) - Xbar(t)|^2`` for every eps in the grid.

    Each particle pair of the coupled systems is one path sample; the
    per-replication value is the particle average and the statistic is the
    replication mean.  Verdicts compare grid points in decreasing eps.
    """
    pair: AveragedPair = plan.scenario
    eps_list = plan.grid

    def one(seed):
        noise = _noise(pair.fast, plan.steps, plan.particles, seed)
        x0 = pair.fast.initial.sample(seed, plan.particles)
        avg_noise = noise if plan.coupling == "common" else _noise(
            pair.averaged, plan.steps, plan.particles, seed ^ INDEPENDENT_SEED_SALT)
        avg = [e.states for e in iterate(pair.averaged, avg_noise, x0)]
        out = []
        for eps in eps_list:
            worst = np.zeros(plan.particles)
            for k, e in enumerate(iterate(pair.fast.with_eps(eps), noise, x0)):
                gap = np.sum((e.states - avg[k]) ** 2, axis=1)
                np.maximum(worst, gap, out=worst)
            out.append(float(np.mean(worst)))
        return out

    results, seeds = _replicate(plan, _with_context(one, "averaging experiment"))
    values = np.array(results)
    rows = []
    for i, eps in enumerate(eps_list):
        m, se = _summarise(values[:, i])
        rows.append(ReportRow(eps, m, se, plan.replications))
    ordered = sorted(rows, key=lambda r: -r.grid_value)
    monotone, separated = True, True
    for big, small in zip(ordered, ordered[1:]):
        slack = math.hypot(big.stderr or 0.0, small.stderr or 0.0)
        monotone &= small.statistic <= big.statistic + slack
        separated &= big.statistic - small.statistic > slack
    verdicts = {"monotone": bool(monotone), "separated": bool(separated and len(rows) > 1)}
    return ExperimentReport("averaging", rows, None, verdicts,
                            _provenance(plan, seeds, coupling=plan.coupling),
                            {"per_replication": values.tolist()})


def run_chaos(plan: ExperimentPlan) -> ExperimentReport:
    """Chaos error of ``N``-particle systems against an ``M``-particle reference.

    Statistic (a), ``gap``: mean over ``i < N`` of ``|X^i - X^{i,N}|^2``.
    Statistic (b), ``wasserstein``: ``W2^2`` between the two empirical laws.
    Both are averaged over replications at every grid time, then the sup over
    time is taken.  One reference run per replication serves every ``N``.
    """
    sc = plan.target
    Ns = plan.grid
    M = plan.reference_size
    if max(Ns) > M:
        raise ConfigError(f"reference size M={M} must be at least every N (max N={max(Ns)})")
    if sc.dim_d != 1 and plan.statistic == "wasserstein":
        raise ConfigError("the Wasserstein chaos statistic is implemented for d = 1 only")

    def one(seed):
        noise = _noise(sc, plan.steps, M, seed)
        x0 = sc.initial.sample(seed, M)
        gens = [iterate(sc, noise, x0)] + [iterate(sc, noise.subset(N), x0[:N]) for N in Ns]
        gap = np.zeros((len(Ns), plan.steps + 1))
        w2 = np.zeros((len(Ns), plan.steps + 1))
        for k, ens in enumerate(zip(*gens)):
            ref = ens[0].states
            for q, N in enumerate(Ns):
                xs = ens[q + 1].states
                gap[q, k] = np.mean(np.sum((ref[:N] - xs) ** 2, axis=1))
                if sc.dim_d == 1:
                    w2[q, k] = wasserstein_p_1d(ref[:, 0], xs[:, 0], 2) ** 2
        return gap, w2

    results, seeds = _replicate(plan, _with_context(one, "chaos experiment"))
    curves = {"gap": np.stack([r[0] for r in results]), "wasserstein": np.stack([r[1] for r in results])}
    tables = {}
    for name, cur in curves.items():
        mean_curve = cur.mean(axis=0)
        k = mean_curve.argmax(axis=1)
        rows = []
        for q, N in enumerate(Ns):
            _, se = _summarise(cur[:, q, k[q]])
            rows.append(ReportRow(N, float(mean_curve[q, k[q]]), se, plan.replications))
        tables[name] = rows
    rows = tables[plan.statistic]
    fit = _safe_fit(rows)
    other = "gap" if plan.statistic == "wasserstein" else "wasserstein"
    other_fit = _safe_fit(tables[other]) if sc.dim_d == 1 or other == "gap" else None
    extra = {
        "statistic": plan.statistic,
        "other_statistic": {"name": other, "rows": [vars(r) for r in tables[other]],
                            "fit": None if other_fit is None else vars(other_fit)},
        "sup_time_index": {n: curves[n].mean(axis=0).argmax(axis=1).tolist() for n in curves},
    }
    verdicts = {} if fit is None else {"fitted": True}
    return ExperimentReport("chaos", rows, fit, verdicts,
                            _provenance(plan, seeds, reference_size=M), extra)


def _safe_fit(rows):
    if len(rows) < 2 or any(r.statistic <= 0 for r in rows):
        return None
    return fit_slope([r.grid_value for r in rows], [r.statistic for r in rows],
                     [r.replications for r in rows])


def _paths(scenario, noise, x0):
    return np.stack([e.states for e in iterate(scenario, noise, x0)])


def refinement_distance(scenario: Scenario, coarse: int, fine: int, particles: int, seed: int,
                        power: float = 2.0) -> float:
    """``E sup_t |X^(coarse)(t) - X^(fine)(t)|^power`` over the coarse grid times.

    Both schemes share one noise path: fine Brownian increments summed for
    the coarse grid and the same jump trains.
    """
    if fine % coarse:
        raise ConfigError(f"step counts must be nested, {fine} is not a multiple of {coarse}")
    noise = _noise(scenario, fine, particles, seed)
    x0 = scenario.initial.sample(seed, particles)
    xf = _paths(scenario, noise, x0)[:: fine // coarse]
    xc = _paths(scenario, noise.coarsen(fine // coarse), x0)
    gap = np.sum((xc - xf) ** 2, axis=2) ** (power / 2)
    return float(np.mean(gap.max(axis=0)))


def run_refinement(plan: ExperimentPlan) -> ExperimentReport:
    """``L^power`` sup-distance between consecutive nested refinements.

    Row ``i`` reports ``(E sup_t |X^(n_i) - X^(n_{i+1})|^power)^(1/power)``
    against ``n_i``; all levels share the noise of the finest grid.
    """
    sc = plan.target
    ns = sorted(plan.grid)
    if len(ns) < 2:
        raise ConfigError("refinement needs at least two step counts")
    for a, b in zip(ns, ns[1:]):
        if b % a:
            raise ConfigError(f"step counts must be nested, {b} is not a multiple of {a}")
    power = plan.power or 2.0
    finest = ns[-1]

    def one(seed):
        noise = _noise(sc, finest, plan.particles, seed)
        x0 = sc.initial.sample(seed, plan.particles)
        paths = {n: _paths(sc, noise.coarsen(finest // n) if n != finest else noise, x0) for n in ns}
        out = []
        for a, b in zip(ns, ns[1:]):
            gap = np.sum((paths[a] - paths[b][:: b // a]) ** 2, axis=2) ** (power / 2)
            out.append(float(np.mean(gap.max(axis=0))))
        return out

    results, seeds = _replicate(plan, _with_context(one, "refinement experiment"))
    values = np.array(results)
    rows = []
    for i, n in enumerate(ns[:-1]):
        m, se = _summarise(values[:, i])
        dist = m ** (1 / power)
        # delta method for the 1/power root
        se_root = None if se is None or m == 0 else se * dist / (power * m)
        rows.append(ReportRow(n, dist, se_root, plan.replications))
    stats_ = [r.statistic for r in rows]
    ratios = [b / a if a > 0 else float("nan") for a, b in zip(stats_, stats_[1:])]
    verdicts = {"strictly_decreasing": bool(all(b < a for a, b in zip(stats_, stats_[1:])))}
    return ExperimentReport("refinement", rows, _safe_fit(rows), verdicts,
                            _provenance(plan, seeds, power=power), {"ratios": ratios})


def run_moment_and_holder(plan: ExperimentPlan) -> ExperimentReport:
    """Moment bound across step counts, or the Hölder table across time lags.

    ``moments``: ``E sup_t |X(t)|^power`` (default power ``r`` of the
    scenario capped at 4) per step count; verdict ``bounded`` when the
    largest value is below twice the smallest.

    ``holder``: ``E|X(s + lag) - X(s)|^power`` (default power 2) averaged
    over all grid start times ``s >= holder_start`` with ``s + lag <= T``;
    verdict ``holder`` when the fitted log-log slope is at least
    ``1 - tolerance``.
    """
    sc = plan.target
    if plan.kind == "moments":
        power = plan.power or min(sc.r, 4.0)
        ns = plan.grid

        def one(seed):
            out = []
            for n in ns:
                noise = _noise(sc, n, plan.particles, seed)
                x0 = sc.initial.sample(seed, plan.particles)
                worst = np.zeros(plan.particles)
                for e in iterate(sc, noise, x0):
                    np.maximum(worst, np.sum(e.states ** 2, axis=1) ** (power / 2), out=worst)
                out.append(float(np.mean(worst)))
            return out

        results, seeds = _replicate(plan, _with_context(one, "moment experiment"))
        values = np.array(results)
        rows = [ReportRow(n, *_summarise(values[:, i]), plan.replications) for i, n in enumerate(ns)]
        s = [r.statistic for r in rows]
        ratio = max(s) / min(s) if min(s) > 0 else float("inf")
        return ExperimentReport("moments", rows, None, {"bounded": bool(ratio < 2.0)},
                                _provenance(plan, seeds, power=power), {"max_min_ratio": ratio})
    if plan.kind != "holder":
        raise ConfigError(f"run_moment_and_holder cannot run a {plan.kind!r} experiment")
    power = plan.power or 2.0
    dt = sc.horizon / plan.steps
    lags = []
    for lag in plan.grid:
        k = round(lag / dt)
        if k < 1 or abs(k * dt - lag) > 1e-9 * max(1.0, lag):
            raise ConfigError(f"lag {lag} is not a positive multiple of the step {dt}")
        lags.append(k)
    start = math.ceil(plan.holder_start / dt - 1e-9)
    if start + max(lags) > plan.steps:
        raise ConfigError("largest lag does not fit between holder_start and the horizon")

    def one(seed):
        noise = _noise(sc, plan.steps, plan.particles, seed)
        x = _paths(sc, noise, sc.initial.sample(seed, plan.particles))
        out = []
        for k in lags:
            inc = np.sum((x[start + k:] - x[start:x.shape[0] - k]) ** 2, axis=2) ** (power / 2)
            out.append(float(np.mean(inc)))
        return out

    results, seeds = _replicate(plan, _with_context(one, "Hölder experiment"))
    values = np.array(results)
    rows = [ReportRow(lag, *_summarise(values[:, i]), plan.replications) for i, lag in enumerate(plan.grid)]
    fit = _safe_fit(rows)
    verdicts = {} if fit is None else {"holder": bool(fit.slope >= 1 - plan.tolerance)}
    return ExperimentReport("holder", rows, fit, verdicts,
                            _provenance(plan, seeds, power=power, holder_start=start * dt), {})


def run_experiment(plan: ExperimentPlan) -> ExperimentReport:
    runner = {"averaging": run_averaging, "chaos": run_chaos, "refinement": run_refinement,
              "moments": run_moment_and_holder, "holder": run_moment_and_holder}[plan.kind]
    return runner(plan)


def with_horizon(target, horizon):
    """Copy of a scenario or pair with a different horizon."""
    if isinstance(target, AveragedPair):
        return replace(target, fast=replace(target.fast, horizon=float(horizon)),
                       averaged=replace(target.averaged, horizon=float(horizon)))
    return replace(target, horizon=float(horizon))
