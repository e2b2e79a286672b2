"""Empirical measures, their moments, and Wasserstein distances.

Two independent routes compute W2 between equal-size 1-d measures: the
sorted (quantile) coupling and an O(K^3) minimum-cost assignment.  They are
cross-checked in the test-suite.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

__all__ = [
    "EmpiricalMeasure",
    "mean",
    "raw_moment",
    "w2_to_dirac0",
    "wasserstein_p_1d",
    "wasserstein_2_assignment",
    "solve_assignment",
    "ASSIGNMENT_LIMIT",
]

ASSIGNMENT_LIMIT = 512


class EmpiricalMeasure:
    """Uniform probability measure on ``K`` atoms in ``R^d``.

    Components are addressed 1-based, matching the coefficient language.
    """

    __slots__ = ("atoms",)

    def __init__(self, atoms):
        arr = np.array(atoms, dtype=float)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] < 1:
            raise ConfigError("an empirical measure needs at least one atom")
        if not np.all(np.isfinite(arr)):
            raise ConfigError("empirical measure atoms must be finite")
        arr.flags.writeable = False
        self.atoms = arr

    @property
    def size(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def _col(self, c):
        if not 1 <= c <= self.dim:
            raise ConfigError(f"component {c} out of range 1..{self.dim}")
        return self.atoms[:, c - 1]

    def mean(self, c=1) -> float:
        return float(np.mean(self._col(c)))

    def raw_moment(self, p, c=1) -> float:
        if p < 1:
            raise ConfigError(f"moment order must be >= 1, got {p}")
        return float(np.mean(np.abs(self._col(c)) ** p))

    def w2_to_dirac0(self) -> float:
        return float(np.sqrt(np.mean(np.sum(self.atoms ** 2, axis=1))))

    def __repr__(self):
        return f"EmpiricalMeasure(size={self.size}, dim={self.dim})"


def _measure(mu) -> EmpiricalMeasure:
    return mu if isinstance(mu, EmpiricalMeasure) else EmpiricalMeasure(mu)


def mean(mu, c=1) -> float:
    return _measure(mu).mean(c)


def raw_moment(mu, p, c=1) -> float:
    return _measure(mu).raw_moment(p, c)


def w2_to_dirac0(mu) -> float:
    """W2 distance to the Dirac mass at the origin (root mean squared norm)."""
    return _measure(mu).w2_to_dirac0()


def wasserstein_p_1d(mu, nu, p=2.0) -> float:
    """Exact W_p between 1-d empirical measures of any sizes.

    The inverse CDFs are piecewise constant with breakpoints at ``i/K`` and
    ``j/L``.  Working in units of ``1/(K*L)`` keeps the merged breakpoints
    exact integers.
    """
    mu, nu = _measure(mu), _measure(nu)
    if mu.dim != 1 or nu.dim != 1:
        raise ConfigError("wasserstein_p_1d needs 1-dimensional measures")
    if p < 1:
        raise ConfigError(f"Wasserstein order must be >= 1, got {p}")
    a = np.sort(mu.atoms[:, 0])
    b = np.sort(nu.atoms[:, 0])
    K, L = a.size, b.size
    if K == L:
        return float(np.mean(np.abs(a - b) ** p) ** (1.0 / p))
    cuts = np.union1d(np.arange(K + 1, dtype=np.int64) * L, np.arange(L + 1, dtype=np.int64) * K)
    left = cuts[:-1]
    lengths = np.diff(cuts) / (K * L)
    gaps = np.abs(a[left // L] - b[left // K]) ** p
    return float(np.dot(lengths, gaps) ** (1.0 / p))


def solve_assignment(cost):
    """Minimum-cost perfect matching of a square cost matrix.

    Shortest augmenting paths with row/column potentials (Hungarian method,
    O(n^3)); the inner scan over columns is vectorised.  Returns ``col`` with
    ``col[i]`` the column assigned to row ``i``.
    """
    C = np.asarray(cost, dtype=float)
    if C.ndim != 2 or C.shape[0] != C.shape[1] or C.shape[0] == 0:
        raise ConfigError("assignment needs a non-empty square cost matrix")
    if not np.all(np.isfinite(C)):
        raise ConfigError("assignment costs must be finite")
    n = C.shape[0]
    # index 0 is a virtual column used as the root of each augmenting search
    u = np.zeros(n + 1)
    v = np.zeros(n + 1)
    match = np.zeros(n + 1, dtype=np.int64)  # match[j]: row (1-based) on column j
    way = np.zeros(n + 1, dtype=np.int64)
    for i in range(1, n + 1):
        match[0] = i
        j0 = 0
        minv = np.full(n + 1, np.inf)
        used = np.zeros(n + 1, dtype=bool)
        while True:
            used[j0] = True
            i0 = match[j0]
            free = ~used[1:]
            cur = C[i0 - 1] - u[i0] - v[1:]
            better = free & (cur < minv[1:])
            minv[1:][better] = cur[better]
            way[1:][better] = j0
            masked = np.where(free, minv[1:], np.inf)
            j1 = int(np.argmin(masked)) + 1
            delta = masked[j1 - 1]
            u[match[used]] += delta
            v[used] -= delta
            minv[1:][free] -= delta
            j0 = j1
            if match[j0] == 0:
                break
        while j0:
            j1 = way[j0]
            match[j0] = match[j1]
            j0 = j1
    col = np.empty(n, dtype=np.int64)
    col[match[1:] - 1] = np.arange(n)
    return col


def wasserstein_2_assignment(mu, nu) -> float:
    """Exact W2 between equal-size empirical measures in any dimension."""
    mu, nu = _measure(mu), _measure(nu)
    if mu.size != nu.size:
        raise ConfigError(f"assignment W2 needs equal sizes, got {mu.size} and {nu.size}")
    if mu.dim != nu.dim:
        raise ConfigError(f"dimension mismatch: {mu.dim} vs {nu.dim}")
    if mu.size > ASSIGNMENT_LIMIT:
        raise ConfigError(f"assignment W2 limited to {ASSIGNMENT_LIMIT} atoms, got {mu.size}")
    diff = mu.atoms[:, None, :] - nu.atoms[None, :, :]
    cost = np.sum(diff * diff, axis=2)
    col = solve_assignment(cost)
    return float(np.sqrt(np.mean(cost[np.arange(mu.size), col])))
