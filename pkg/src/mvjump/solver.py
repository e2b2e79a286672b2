"""Interacting particle solver with the law frozen at each step's left endpoint.

One step from ``t_k`` to ``t_{k+1}`` moves every particle by::

    x += b(t_k, x, mu) dt + sigma(t_k, x, mu) dW
         + sum_{jumps in (t_k, t_{k+1}]} h(t_k, x, mu, z) - dt * int h(t_k, x, mu, z) nu(dz)

where ``mu`` is the empirical measure of the states at ``t_k``.  All
particles read the same frozen measure; the new measure is built only after
every particle has moved.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError
from .model import AveragedPair, MeasureView, Scenario
from .noise import NoisePath, compensator_integral, generate_noise_path

__all__ = [
    "DIVERGENCE_BOUND",
    "SolverConfig",
    "Ensemble",
    "Trajectory",
    "step",
    "iterate",
    "simulate",
    "simulate_with_noise",
    "simulate_coupled",
    "simulate_reference_coupled",
    "uniform_grid",
    "INDEPENDENT_SEED_SALT",
]

DIVERGENCE_BOUND = 1e12
INDEPENDENT_SEED_SALT = 0x9E3779B97F4A7C15


@dataclass(frozen=True)
class SolverConfig:
    """``record`` is ``"full"``, ``"snapshots"`` (at ``snapshot_times``) or ``"terminal"``."""

    steps: int
    particles: int
    record: str = "full"
    snapshot_times: tuple = ()
    workers: int = 1

    def __post_init__(self):
        if int(self.steps) != self.steps or self.steps < 1:
            raise ConfigError(f"steps must be a positive integer, got {self.steps}")
        if int(self.particles) != self.particles or self.particles < 1:
            raise ConfigError(f"particles must be a positive integer, got {self.particles}")
        if self.record not in ("full", "snapshots", "terminal"):
            raise ConfigError(f"unknown record mode {self.record!r}")
        if self.record == "snapshots" and not self.snapshot_times:
            raise ConfigError("snapshot recording needs snapshot_times")

    def digest(self) -> str:
        # workers never changes results, so it is not part of the identity
        blob = {k: v for k, v in asdict(self).items() if k != "workers"}
        return hashlib.sha256(json.dumps(blob, sort_keys=True).encode()).hexdigest()[:16]


@dataclass(frozen=True)
class Ensemble:
    time: float
    states: np.ndarray
    frozen_measure: MeasureView
    index: int = 0

    @classmethod
    def initial(cls, states, time=0.0):
        states = np.array(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        _guard(states, states, 0, float(time))
        return cls(float(time), states, MeasureView(states), 0)


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states ``(R, N, d)`` at ``times`` plus provenance."""

    times: np.ndarray
    states: np.ndarray
    provenance: dict = field(default_factory=dict)

    @property
    def terminal(self) -> np.ndarray:
        return self.states[-1]

    def particle_path(self, i) -> np.ndarray:
        return self.states[:, i, :]


def uniform_grid(horizon, steps) -> np.ndarray:
    return np.linspace(0.0, float(horizon), int(steps) + 1)


def _guard(new, old, k, t):
    bad = ~np.isfinite(new) | (np.abs(new) > DIVERGENCE_BOUND)
    if bad.any():
        i = int(np.argmax(bad.any(axis=1)))
        raise DivergenceError(
            f"particle {i} diverged in step {k} (t={t:.6g}): state {new[i].tolist()} "
            f"from {old[i].tolist()}",
            particle=i, step=k, value=new[i].tolist(),
        )


def step(ens: Ensemble, scenario: Scenario, noise: NoisePath, k: int, measure: MeasureView | None = None) -> Ensemble:
    """Advance ``ens`` from grid point ``k`` to ``k + 1``.

    ``measure`` overrides the ensemble's own frozen measure (used to drive
    particles by an externally supplied reference law).
    """
    grid = noise.grid
    if not 0 <= k < noise.steps:
        raise ConfigError(f"step index {k} outside 0..{noise.steps - 1}")
    if ens.index != k and not np.isclose(ens.time, grid[k], rtol=0, atol=1e-12 * max(1.0, abs(grid[k]))):
        raise ConfigError(f"ensemble is at t={ens.time}, step {k} starts at t={grid[k]}")
    x = ens.states
    if x.shape[0] != noise.particle_count:
        raise ConfigError(f"noise covers {noise.particle_count} particles, ensemble has {x.shape[0]}")
    t = float(grid[k])
    dt = float(grid[k + 1] - grid[k])
    mv = ens.frozen_measure if measure is None else measure
    coef = scenario.coefficients
    eps = scenario.eps
    spec = noise.spec
    with np.errstate(all="ignore"):
        new = x + coef.drift(t, x, mv, eps) * dt
        new = new + np.einsum("ndm,nm->nd", coef.diffusion(t, x, mv, eps), noise.increments[k])
        if spec.total_mass > 0:
            pid, marks = noise.step_jumps(k)
            if coef.jump_uses_mark:
                comp = compensator_integral(lambda z: coef.jump(t, x, mv, z, eps), spec)
                new = new - dt * comp
                if pid.size:
                    np.add.at(new, pid, coef.jump(t, x[pid], mv, marks, eps))
            else:
                hx = np.asarray(coef.jump(t, x, mv, None, eps), dtype=float)
                new = new - (dt * spec.total_mass) * hx
                if pid.size:
                    np.add.at(new, pid, hx[pid])
    _guard(new, x, k, t)
    return Ensemble(float(grid[k + 1]), new, MeasureView(new), k + 1)


def iterate(scenario: Scenario, noise: NoisePath, x0, reference=None):
    """Yield the ensemble at every grid point, starting with ``t_0``.

    ``reference``, if given, is a full :class:`Trajectory` on the same grid
    whose states supply the frozen measure instead of the particles' own.
    """
    if reference is not None and reference.states.shape[0] != noise.grid.size:
        raise ConfigError("reference trajectory must be recorded at every grid point")
    ens = Ensemble.initial(x0, noise.grid[0])
    yield ens
    for k in range(noise.steps):
        measure = None if reference is None else MeasureView(reference.states[k])
        ens = step(ens, scenario, noise, k, measure)
        yield ens


def _record_indices(grid, config: SolverConfig):
    if config.record == "full":
        return np.arange(grid.size)
    if config.record == "terminal":
        return np.array([grid.size - 1])
    idx = []
    tol = 1e-9 * max(1.0, float(grid[-1]))
    for s in config.snapshot_times:
        j = int(np.argmin(np.abs(grid - s)))
        if abs(grid[j] - s) > tol:
            raise ConfigError(f"snapshot time {s} is not a grid point")
        idx.append(j)
    return np.unique(idx)


def simulate_with_noise(scenario: Scenario, config: SolverConfig, noise: NoisePath, x0,
                        reference=None, provenance=None) -> Trajectory:
    if noise.steps != config.steps or noise.particle_count != config.particles:
        raise ConfigError("noise path does not match the solver configuration")
    keep = _record_indices(noise.grid, config)
    keep_set = set(keep.tolist())
    states = []
    for ens in iterate(scenario, noise, x0, reference):
        if ens.index in keep_set:
            states.append(ens.states)
    prov = {"scenario": scenario.digest(), "config": config.digest(), **(provenance or {})}
    return Trajectory(noise.grid[keep].copy(), np.stack(states), prov)


def _noise(scenario, config, seed, particles=None):
    return generate_noise_path(seed, uniform_grid(scenario.horizon, config.steps),
                               particles or config.particles, scenario.dim_m, scenario.jump_spec,
                               workers=config.workers)


def simulate(scenario: Scenario, config: SolverConfig, seed: int = 0) -> Trajectory:
    """Simulate the interacting particle system; deterministic in ``(scenario, config, seed)``."""
    noise = _noise(scenario, config, seed)
    x0 = scenario.initial.sample(seed, config.particles)
    return simulate_with_noise(scenario, config, noise, x0, provenance={"seed": int(seed)})


def simulate_coupled(pair: AveragedPair, config: SolverConfig, seed: int = 0, coupling: str = "common"):
    """Fast and averaged systems driven by the same noise and initial states.

    ``coupling="independent"`` drives the averaged system by an unrelated
    noise path instead (used to measure what the common noise buys).
    """
    if coupling not in ("common", "independent"):
        raise ConfigError(f"unknown coupling {coupling!r}")
    noise = _noise(pair.fast, config, seed)
    x0 = pair.fast.initial.sample(seed, config.particles)
    fast = simulate_with_noise(pair.fast, config, noise, x0, provenance={"seed": int(seed)})
    if coupling == "independent":
        seed2 = int(seed) ^ INDEPENDENT_SEED_SALT
        noise = _noise(pair.averaged, config, seed2)
    avg = simulate_with_noise(pair.averaged, config, noise, x0,
                              provenance={"seed": int(seed), "coupling": coupling})
    return fast, avg


def simulate_reference_coupled(scenario: Scenario, N: int, M: int, config: SolverConfig, seed: int = 0):
    """An ``N``-particle system and an ``M``-particle reference sharing noise.

    Particle ``i < N`` of both systems sees the same Brownian path, jump train
    and initial state; each system freezes its own empirical measure.  The
    reference measure stands in for the exact law.
    """
    if M < N:
        raise ConfigError(f"reference size M={M} must be at least N={N}")
    ref_cfg = SolverConfig(config.steps, M, config.record, config.snapshot_times, config.workers)
    small_cfg = SolverConfig(config.steps, N, config.record, config.snapshot_times, config.workers)
    noise = _noise(scenario, ref_cfg, seed)
    x0 = scenario.initial.sample(seed, M)
    prov = {"seed": int(seed), "N": N, "M": M}
    small = simulate_with_noise(scenario, small_cfg, noise.subset(N), x0[:N], provenance=prov)
    reference = simulate_with_noise(scenario, ref_cfg, noise, x0, provenance=prov)
    return small, reference
