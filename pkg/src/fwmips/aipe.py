"""Adaptive inner product estimation over unit vectors.

Distances are estimated from a pool of ``k_ADE`` Gaussian sketches.  Each
query draws a fresh random subset of ``m`` matrices and reports, for every
live point, the median of ``|S_j x_i - S_j q|`` over that subset.  On the
unit sphere ``|x - q|^2 = 2 - 2<x, q>``, so ``w_i = 1 - d_i^2 / 2`` estimates
the inner product.

Fresh per-query subsampling is the defense against adaptively chosen queries;
it is a practical stand-in for a provably adaptive distance estimator.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .calibration import load_constants
from .errors import ConfigError, EmptyIndexError
from .geometry import PointSet, as_matrix, as_vector
from .lsh import check_unit
from .sketch import SketchEnsemble, build_ensemble, plan_sketch_dim

MAX_EPS = 0.1


def _odd(k):
    return k if k % 2 else k + 1


def plan_pool_size(n, T, delta, C_k=None) -> int:
    """``k_ADE = max(3, odd(ceil(C_k ln((n + T) / delta))))``."""
    C_k = load_constants().C_k if C_k is None else C_k
    return max(3, _odd(math.ceil(C_k * math.log((n + T) / delta))))


def plan_subset_size(n, T, delta, k, C_q=None) -> int:
    """Per-query subset ``m = ceil(C_q ln(n T / delta))``, odd and at most ``k``."""
    C_q = load_constants().C_q if C_q is None else C_q
    m = _odd(max(1, math.ceil(C_q * math.log(max(n * T, 2) / delta))))
    return min(m, k if k % 2 else k - 1)


@dataclass
class AipeStats:
    queries: int = 0
    matrices_used: int = 0
    madds: int = 0


@dataclass
class AdeStore:
    """Sketch pool plus the sketched points (rows are append-only)."""

    ensemble: SketchEnsemble
    m: int
    tables: np.ndarray = field(repr=False)  # (k, capacity, s)
    live: np.ndarray = field(repr=False)  # (capacity,) bool
    size: int = 0

    @property
    def k(self) -> int:
        return self.ensemble.k

    def append(self, sketches) -> int:
        """Store the ``(k, s)`` sketches of one new point and return its id."""
        if self.size == self.tables.shape[1]:
            cap = max(8, 2 * self.size)
            grown = np.zeros((self.k, cap, self.ensemble.s))
            grown[:, : self.size] = self.tables[:, : self.size]
            self.tables = grown
            live = np.zeros(cap, dtype=bool)
            live[: self.size] = self.live[: self.size]
            self.live = live
        i = self.size
        self.tables[:, i] = sketches
        self.live[i] = True
        self.size += 1
        return i


@dataclass
class AipeIndex:
    """Query/QueryMax/Insert/Delete over a changing set of unit vectors.

    Queries only read the store; ``insert`` and ``delete`` need exclusive access.
    """

    ade: AdeStore
    points: np.ndarray = field(repr=False)  # (capacity, d), rows beyond size unused
    epsilon: float
    delta: float
    stats: AipeStats = field(default_factory=AipeStats)

    @property
    def d(self) -> int:
        return self.ade.ensemble.d

    @property
    def n_live(self) -> int:
        return int(self.ade.live[: self.ade.size].sum())

    def live_ids(self) -> np.ndarray:
        return np.flatnonzero(self.ade.live[: self.ade.size])

    def insert(self, z) -> int:
        z = as_vector(z, "z")
        check_unit(z, "z")
        if z.shape[0] != self.d:
            raise ConfigError(f"expected dimension {self.d}, got {z.shape[0]}")
        i = self.ade.append(self.ade.ensemble.project_all(z))
        if i >= self.points.shape[0]:
            grown = np.zeros((self.ade.tables.shape[1], self.d))
            grown[: self.points.shape[0]] = self.points
            self.points = grown
        self.points[i] = z
        return i

    def delete(self, i) -> None:
        i = int(i)
        if not (0 <= i < self.ade.size) or not self.ade.live[i]:
            raise IndexError(f"point {i} is not live")
        self.ade.live[i] = False

    def distances(self, q, rng):
        """``(ids, d_i)`` for every live point from a fresh matrix subset."""
        q = as_vector(q, "q")
        check_unit(q, "q")
        if q.shape[0] != self.d:
            raise ConfigError(f"expected dimension {self.d}, got {q.shape[0]}")
        ids = self.live_ids()
        js = np.sort(rng.choice(self.ade.k, size=self.ade.m, replace=False))
        s = self.ade.ensemble.s
        self.stats.queries += 1
        self.stats.matrices_used += len(js)
        self.stats.madds += len(js) * s * (self.d + ids.size)
        if ids.size == 0:
            return ids, np.empty(0)
        qs = np.einsum("d,ksd->ks", q, self.ade.ensemble.stacked[js])
        diff = self.ade.tables[js][:, ids, :] - qs[:, None, :]
        dist = np.sqrt(np.einsum("kns,kns->kn", diff, diff))
        return ids, np.median(dist, axis=0)

    def query(self, q, rng):
        """``(ids, w)`` with ``w_i = 1 - d_i^2 / 2`` for each live point."""
        ids, dist = self.distances(q, rng)
        return ids, 1.0 - 0.5 * dist**2

    def query_max(self, q, rng):
        """``(index, w)`` of the smallest estimated distance (ties: smallest index)."""
        ids, dist = self.distances(q, rng)
        if ids.size == 0:
            raise EmptyIndexError("no live points")
        j = int(np.argmin(dist))
        return int(ids[j]), float(1.0 - 0.5 * dist[j] ** 2)

    def dump_estimates(self, path, q, rng) -> Path:
        """Write ``index,d_i,w_i`` rows for query ``q``."""
        ids, dist = self.distances(q, rng)
        path = Path(path)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["index", "d_i", "w_i"])
            for i, di in zip(ids, dist):
                wr.writerow([int(i), repr(float(di)), repr(float(1.0 - 0.5 * di * di))])
        return path


def aipe_init(points, epsilon, delta, seed=0, T=1000, s=None, k=None, m=None,
              C_s=None, C_k=None, C_q=None, check_ranges=True) -> AipeIndex:
    """Sketch all points under a fresh pool sized for ``T`` queries.

    ``epsilon`` and ``delta`` must lie in ``(0, 0.1]`` unless
    ``check_ranges=False`` (used when a coarser estimator is acceptable).
    """
    x = points.points if isinstance(points, PointSet) else as_matrix(points)
    check_unit(x)
    if check_ranges:
        for name, v in (("epsilon", epsilon), ("delta", delta)):
            if not 0 < v <= MAX_EPS:
                raise ConfigError(f"{name} must lie in (0, {MAX_EPS}], got {v}")
    elif not (0 < epsilon < 1 and 0 < delta < 1):
        raise ConfigError(f"epsilon and delta must lie in (0, 1), got {epsilon}, {delta}")
    n, d = x.shape
    s = s if s is not None else plan_sketch_dim(n, epsilon, delta, C_s)
    k = k if k is not None else plan_pool_size(n, T, delta, C_k)
    m = m if m is not None else plan_subset_size(n, T, delta, k, C_q)
    if not 1 <= m <= k:
        raise ConfigError(f"subset size m={m} must lie in [1, k={k}]")
    ens = build_ensemble(n, d, min(epsilon, 0.999), min(delta, 0.999), seed,
                         k_override=k, s_override=s)
    tables = np.ascontiguousarray(np.einsum("nd,ksd->kns", x, ens.stacked))
    store = AdeStore(ens, int(m), tables, np.ones(n, dtype=bool), n)
    return AipeIndex(store, np.array(x), float(epsilon), float(delta))


def envelope_holds(w, ip, epsilon) -> np.ndarray:
    """Elementwise ``(1 + eps) ip - eps <= w <= (1 - eps) ip + eps``."""
    w = np.asarray(w)
    ip = np.asarray(ip)
    return ((1 + epsilon) * ip - epsilon <= w) & (w <= (1 - epsilon) * ip + epsilon)
