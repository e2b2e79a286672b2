"""Reproducible Brownian increments and compound-Poisson jump trains.

Every random draw is a pure function of a :class:`StreamKey`.  A key is
hashed through :class:`numpy.random.SeedSequence` into the key of a Philox
counter-based generator, so particle ``i`` always sees the same noise no
matter how many workers generate the path or in which order.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

__all__ = [
    "CHANNEL_BROWNIAN",
    "CHANNEL_JUMPS",
    "CHANNEL_INITIAL",
    "StreamKey",
    "JumpMeasureSpec",
    "NoisePath",
    "sample_brownian_increments",
    "sample_jump_train",
    "compensator_integral",
    "generate_noise_path",
    "validate_grid",
]

CHANNEL_BROWNIAN = 0
CHANNEL_JUMPS = 1
CHANNEL_INITIAL = 2

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class StreamKey:
    seed: int
    particle_id: int
    step_or_channel: int = 0
    draw_index: int = 0

    def __post_init__(self):
        if self.particle_id < 0 or self.step_or_channel < 0 or self.draw_index < 0:
            raise ConfigError(f"stream key components must be non-negative: {self}")

    def generator(self) -> np.random.Generator:
        """Fresh generator whose whole output is determined by this key."""
        seq = np.random.SeedSequence(
            int(self.seed) & _MASK64,
            spawn_key=(int(self.particle_id), int(self.step_or_channel), int(self.draw_index)),
        )
        return np.random.Generator(np.random.Philox(seq))


def validate_grid(grid) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or grid.size == 0:
        raise ConfigError("time grid must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(grid)):
        raise ConfigError("time grid contains non-finite values")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise ConfigError("time grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class JumpMeasureSpec:
    """Finite jump intensity measure ``nu`` on the mark space.

    ``kind`` is one of ``"dirac"``, ``"discrete"`` or ``"gaussian"``.  For
    dirac/discrete laws ``atoms`` holds the mark points and ``weights`` their
    masses (summing to ``total_mass``).  For the gaussian law ``atoms`` holds
    a single row with the mean and ``std`` the per-component standard
    deviation; integrals against it use tensor Gauss-Hermite quadrature with
    ``nodes`` points per component.
    """

    total_mass: float
    kind: str = "dirac"
    atoms: tuple = ((1.0,),)
    weights: tuple = (1.0,)
    std: tuple = ()
    nodes: int = 16

    def __post_init__(self):
        mass = float(self.total_mass)
        if not np.isfinite(mass):
            raise ConfigError("jump measure must be finite (infinite-activity measures are not supported)")
        if mass < 0:
            raise ConfigError(f"jump intensity must be non-negative, got {mass}")
        if self.kind not in ("dirac", "discrete", "gaussian"):
            raise ConfigError(f"unknown mark law {self.kind!r}")
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim != 2 or atoms.shape[0] == 0 or not np.all(np.isfinite(atoms)):
            raise ConfigError("mark atoms must be a non-empty list of finite vectors")
        if self.kind == "discrete":
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (atoms.shape[0],) or np.any(w <= 0) or not np.all(np.isfinite(w)):
                raise ConfigError("discrete mark weights must be positive, one per atom")
            if not np.isclose(w.sum(), mass, rtol=1e-12, atol=1e-15):
                raise ConfigError(f"discrete weights sum to {w.sum()}, expected total mass {mass}")
        if self.kind == "gaussian":
            s = np.asarray(self.std, dtype=float)
            if s.shape != (atoms.shape[1],) or np.any(s < 0):
                raise ConfigError("gaussian mark law needs one non-negative std per component")
            if self.nodes < 1:
                raise ConfigError("quadrature node count must be positive")

    @classmethod
    def dirac(cls, point=1.0, mass=1.0):
        return cls(float(mass), "dirac", (tuple(np.atleast_1d(np.asarray(point, float)).tolist()),), (float(mass),))

    @classmethod
    def discrete(cls, atoms, weights):
        atoms = np.asarray(atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        weights = tuple(float(w) for w in weights)
        return cls(float(sum(weights)), "discrete", tuple(map(tuple, atoms.tolist())), weights)

    @classmethod
    def gaussian(cls, mean, std, mass=1.0, nodes=16):
        mean = np.atleast_1d(np.asarray(mean, float))
        std = np.broadcast_to(np.asarray(std, float), mean.shape)
        return cls(float(mass), "gaussian", (tuple(mean.tolist()),), (float(mass),), tuple(std.tolist()), int(nodes))

    @classmethod
    def none(cls, dim=1):
        return cls.dirac(np.ones(dim), mass=0.0)

    @property
    def dim(self) -> int:
        return len(self.atoms[0])

    def quadrature(self):
        """Nodes ``(Q, d)`` and weights ``(Q,)`` with ``sum(weights) == total_mass``."""
        atoms = np.asarray(self.atoms, dtype=float)
        if self.kind == "dirac":
            return atoms[:1].copy(), np.array([float(self.total_mass)])
        if self.kind == "discrete":
            return atoms.copy(), np.asarray(self.weights, dtype=float)
        xi, w = np.polynomial.hermite_e.hermegauss(self.nodes)
        w = w / w.sum()
        d = self.dim
        grids = np.meshgrid(*([xi] * d), indexing="ij")
        wgrids = np.meshgrid(*([w] * d), indexing="ij")
        std = np.asarray(self.std, dtype=float)
        nodes = atoms[0] + std * np.stack([g.ravel() for g in grids], axis=1)
        weights = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
        return nodes, weights * float(self.total_mass)

    def sample_marks(self, gen: np.random.Generator, count: int) -> np.ndarray:
        atoms = np.asarray(self.atoms, dtype=float)
        if count == 0:
            return np.empty((0, self.dim))
        if self.kind == "dirac":
            return np.repeat(atoms[:1], count, axis=0)
        if self.kind == "discrete":
            p = np.asarray(self.weights, dtype=float)
            idx = gen.choice(len(p), size=count, p=p / p.sum())
            return atoms[idx]
        return atoms[0] + np.asarray(self.std) * gen.standard_normal((count, self.dim))


def sample_brownian_increments(key: StreamKey, grid, m: int) -> np.ndarray:
    """Increments ``(n_steps, m)`` of an m-dimensional Wiener process on ``grid``."""
    grid = validate_grid(grid)
    dt = np.diff(grid)
    if dt.size == 0:
        return np.empty((0, m))
    return key.generator().standard_normal((dt.size, m)) * np.sqrt(dt)[:, None]


def _jump_arrays(key: StreamKey, horizon: float, spec: JumpMeasureSpec):
    if spec.total_mass == 0:
        return np.empty(0), np.empty((0, spec.dim))
    gen = key.generator()
    count = int(gen.poisson(spec.total_mass * horizon))
    # 1 - U maps [0, 1) onto (0, 1]
    times = np.sort(horizon * (1.0 - gen.random(count)))
    return times, spec.sample_marks(gen, count)


def sample_jump_train(key: StreamKey, horizon: float, spec: JumpMeasureSpec):
    """Jump times on ``(0, horizon]`` and their marks as a list of ``(time, mark)``."""
    if not horizon > 0:
        raise ConfigError(f"jump horizon must be positive, got {horizon}")
    times, marks = _jump_arrays(key, float(horizon), spec)
    return [(float(s), marks[j].copy()) for j, s in enumerate(times)]


def compensator_integral(f, spec: JumpMeasureSpec):
    """``int f(z) nu(dz)``; exact for atomic laws, Gauss-Hermite for gaussian marks.

    ``f`` may return arrays (e.g. one value per particle); the weighted sum is
    taken over the quadrature nodes only.
    """
    nodes, weights = spec.quadrature()
    total = None
    for z, w in zip(nodes, weights):
        term = w * np.asarray(f(z), dtype=float)
        total = term if total is None else total + term
    return total


@dataclass(frozen=True, eq=False)
class NoisePath:
    """Noise for ``N`` particles on a fixed grid.

    ``increments`` has shape ``(n_steps, N, m)``.  Jumps are stored flat and
    sorted by (step, particle, time); ``step_offsets[k]:step_offsets[k+1]``
    slices the jumps falling in ``(t_k, t_{k+1}]``.
    """

    grid: np.ndarray
    increments: np.ndarray
    jump_particle: np.ndarray
    jump_time: np.ndarray
    jump_mark: np.ndarray
    seed: int
    spec: JumpMeasureSpec
    step_offsets: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        if self.step_offsets is None:
            step = np.searchsorted(self.grid, self.jump_time, side="left") - 1
            order = np.lexsort((self.jump_time, self.jump_particle, step))
            for name in ("jump_particle", "jump_time", "jump_mark"):
                object.__setattr__(self, name, getattr(self, name)[order])
            step = step[order]
            offsets = np.searchsorted(step, np.arange(self.steps + 1), side="left")
            object.__setattr__(self, "step_offsets", offsets)

    @property
    def particle_count(self) -> int:
        return self.increments.shape[1]

    @property
    def steps(self) -> int:
        return self.grid.size - 1

    @property
    def horizon(self) -> float:
        return float(self.grid[-1])

    def brownian_increments(self, particle: int) -> np.ndarray:
        return self.increments[:, particle, :]

    def jump_train(self, particle: int):
        sel = self.jump_particle == particle
        times, marks = self.jump_time[sel], self.jump_mark[sel]
        order = np.argsort(times, kind="stable")
        return [(float(times[j]), marks[j].copy()) for j in order]

    def step_jumps(self, k: int):
        """Particle indices and marks of the jumps in ``(t_k, t_{k+1}]``."""
        lo, hi = self.step_offsets[k], self.step_offsets[k + 1]
        return self.jump_particle[lo:hi], self.jump_mark[lo:hi]

    def subset(self, count: int) -> NoisePath:
        """Noise of the first ``count`` particles, unchanged."""
        if not 1 <= count <= self.particle_count:
            raise ConfigError(f"cannot take {count} of {self.particle_count} particles")
        sel = self.jump_particle < count
        return NoisePath(self.grid, self.increments[:, :count], self.jump_particle[sel],
                         self.jump_time[sel], self.jump_mark[sel], self.seed, self.spec)

    def coarsen(self, factor: int) -> NoisePath:
        """Same Brownian path and jump trains on every ``factor``-th grid point."""
        if factor < 1 or self.steps % factor:
            raise ConfigError(f"cannot coarsen {self.steps} steps by a factor of {factor}")
        if factor == 1:
            return self
        n, N, m = self.increments.shape
        inc = self.increments.reshape(n // factor, factor, N, m).sum(axis=1)
        return NoisePath(self.grid[::factor].copy(), inc, self.jump_particle, self.jump_time,
                         self.jump_mark, self.seed, self.spec)


def generate_noise_path(seed: int, grid, particles: int, m: int, spec: JumpMeasureSpec,
                        workers: int = 1) -> NoisePath:
    """Generate the noise of ``particles`` particles; independent of ``workers``."""
    grid = validate_grid(grid)
    if particles < 1:
        raise ConfigError("particle count must be at least 1")
    if grid[0] != 0:
        raise ConfigError("noise grid must start at t=0")
    n = grid.size - 1
    horizon = float(grid[-1])
    increments = np.empty((n, particles, m))
    trains = [None] * particles

    def fill(lo, hi):
        for i in range(lo, hi):
            increments[:, i, :] = sample_brownian_increments(StreamKey(seed, i, CHANNEL_BROWNIAN), grid, m)
            if n > 0:
                trains[i] = _jump_arrays(StreamKey(seed, i, CHANNEL_JUMPS), horizon, spec)
            else:
                trains[i] = (np.empty(0), np.empty((0, spec.dim)))

    workers = max(1, int(workers))
    if workers == 1 or particles < 64:
        fill(0, particles)
    else:
        bounds = np.linspace(0, particles, min(workers * 4, particles) + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(fill, bounds[:-1], bounds[1:]))

    counts = np.array([t.size for t, _ in trains], dtype=np.int64)
    jump_particle = np.repeat(np.arange(particles), counts)
    jump_time = np.concatenate([t for t, _ in trains]) if particles else np.empty(0)
    jump_mark = np.concatenate([z for _, z in trains]).reshape(-1, spec.dim)
    return NoisePath(grid, increments, jump_particle, jump_time, jump_mark, int(seed), spec)
