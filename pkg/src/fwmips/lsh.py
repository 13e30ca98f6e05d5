"""Random-hyperplane LSH for unit-sphere points, with exact verification.

Each of ``L`` tables hashes a point to the ``K`` sign bits of ``<h, x>`` for
Gaussian hyperplanes ``h``.  Hyperplanes of table ``l`` come from the stream
``(seed, l)``, so growing ``L`` under a fixed seed only adds tables.  A table
is stored as sorted keys plus the matching point order; a bucket lookup is a
pair of binary searches.

Every candidate pulled out of a bucket is checked with an exact dot product,
so answers never violate the requested bound.  Only recall is random.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import make_rng
from .errors import ConfigError, NormError
from .geometry import PointSet, as_matrix, as_vector

_STREAM = 0x4C53  # "LS"
UNIT_TOL = 1e-6


def plan_rho(c_bar, regime="fast_query") -> float:
    """LSH exponent with the ``o(1)`` term dropped.

    ``fast_query``: ``1 / (2 c^2 - 1)``; ``fast_preprocess``: ``2/c^2 - 1/c^4``.
    """
    if not c_bar > 1:
        raise ConfigError(f"c_bar must exceed 1, got {c_bar}")
    c2 = float(c_bar) ** 2
    if regime == "fast_query":
        return 1.0 / (2.0 * c2 - 1.0)
    if regime == "fast_preprocess":
        return 2.0 / c2 - 1.0 / c2**2
    raise ConfigError(f"unknown regime {regime!r}")


def maxip_to_ann_params(c, tau):
    """Map a ``(c, tau)``-MaxIP instance on the sphere to ``(c_bar, r)``-ANN."""
    if not (0 < c < 1 and 0 < tau < 1):
        raise ConfigError(f"need 0 < c < 1 and 0 < tau < 1, got c={c}, tau={tau}")
    r = math.sqrt(2.0 - 2.0 * tau)
    c_bar = math.sqrt((1.0 - c * tau) / (1.0 - tau))
    return c_bar, r


def ann_to_maxip_params(c_bar, r):
    """Inverse of :func:`maxip_to_ann_params`."""
    tau = 1.0 - 0.5 * r * r
    c = (1.0 - 0.5 * c_bar * c_bar * r * r) / tau
    return c, tau


@dataclass(frozen=True)
class LshParams:
    K: int
    L: int
    c_bar: float = 2.0
    r: float = 0.5
    seed: int = 0
    probe_budget: int | None = None  # None: 4 L max(1, n / 2^K)

    def __post_init__(self):
        if not (1 <= self.K <= 62):
            raise ConfigError(f"K must be in [1, 62], got {self.K}")
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")
        if self.probe_budget is not None and self.probe_budget < 1:
            raise ConfigError(f"probe_budget must be >= 1, got {self.probe_budget}")

    def budget_for(self, n) -> int:
        if self.probe_budget is not None:
            return int(self.probe_budget)
        return int(math.ceil(4 * self.L * max(1.0, n / 2.0**self.K)))


def default_K(n) -> int:
    return max(1, math.ceil(math.log2(max(n, 2))))


@dataclass
class QueryStats:
    """Per-query cost counters, owned and reset by the caller."""

    tables_probed: int = 0
    candidates: int = 0
    hash_madds: int = 0
    verify_madds: int = 0

    @property
    def madds(self) -> int:
        return self.hash_madds + self.verify_madds

    def add(self, other: "QueryStats"):
        self.tables_probed += other.tables_probed
        self.candidates += other.candidates
        self.hash_madds += other.hash_madds
        self.verify_madds += other.verify_madds


def _hyperplanes(seed, D, K, L):
    return np.concatenate([make_rng(seed, _STREAM, l).standard_normal((K, D)) for l in range(L)])


def _hash_keys(x, planes, K, L):
    # One contraction order for build and query keeps stored and query bits identical.
    proj = np.einsum("nd,kd->nk", x, planes)
    bits = (proj >= 0).reshape(x.shape[0], L, K).astype(np.int64)
    weights = np.left_shift(np.int64(1), np.arange(K, dtype=np.int64))
    return bits @ weights  # (n, L)


def check_unit(x, name="point"):
    norms = np.linalg.norm(np.atleast_2d(x), axis=1)
    bad = np.abs(norms - 1.0) > UNIT_TOL
    if np.any(bad):
        raise NormError(f"{name} must be unit norm (found norm {norms[bad][0]:.9g})")


@dataclass(frozen=True)
class LshIndex:
    """Hash tables over a fixed set of unit vectors."""

    params: LshParams
    points: np.ndarray = field(repr=False)
    planes: np.ndarray = field(repr=False)
    sorted_keys: np.ndarray = field(repr=False)  # (L, n)
    order: np.ndarray = field(repr=False)  # (L, n)
    probe_budget: int = 1

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    @property
    def nbytes(self) -> int:
        """Bytes held by the hash structure (tables and hyperplanes, not the data)."""
        return self.sorted_keys.nbytes + self.order.nbytes + self.planes.nbytes

    def query_keys(self, q) -> np.ndarray:
        return _hash_keys(np.asarray(q, dtype=np.float64)[None, :], self.planes,
                          self.params.K, self.params.L)[0]

    def bucket(self, table, key) -> np.ndarray:
        keys = self.sorted_keys[table]
        lo = np.searchsorted(keys, key, side="left")
        hi = np.searchsorted(keys, key, side="right")
        return self.order[table, lo:hi]

    def candidates(self, q, stats: QueryStats | None = None, tables=None) -> np.ndarray:
        """Distinct candidate ids in probe order, truncated to the probe budget."""
        q = as_vector(q, "q")
        keys = self.query_keys(q)
        L = self.params.L if tables is None else min(tables, self.params.L)
        seen = []
        total = 0
        probed = 0
        for t in range(L):
            probed += 1
            b = self.bucket(t, keys[t])
            if b.size:
                seen.append(b)
                total += b.size
            if total >= self.probe_budget:
                break
        if stats is not None:
            stats.tables_probed += probed
            stats.hash_madds += self.params.K * self.params.L * self.dim
        if not seen:
            return np.empty(0, dtype=np.int64)
        allc = np.concatenate(seen)
        _, first = np.unique(allc, return_index=True)
        out = allc[np.sort(first)][: self.probe_budget]
        if stats is not None:
            stats.candidates += out.size
        return out

    def query_ann(self, q, r=None, stats: QueryStats | None = None):
        """First verified candidate within ``c_bar * r`` of ``q``, else ``None``."""
        q = as_vector(q, "q")
        check_unit(q, "q")
        r = self.params.r if r is None else r
        cand = self.candidates(q, stats)
        if cand.size == 0:
            return None
        diff = self.points[cand] - q
        dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
        if stats is not None:
            stats.verify_madds += cand.size * self.dim
        ok = np.flatnonzero(dist <= self.params.c_bar * r)
        return int(cand[ok[0]]) if ok.size else None

    def query_maxip(self, q, c, tau, threshold=None, stats: QueryStats | None = None):
        """Best verified candidate with ``<q, y> >= c * tau``, else ``None``.

        ``threshold`` replaces ``c * tau`` when given.  Returns
        ``(index, inner_product)``.
        """
        q = as_vector(q, "q")
        check_unit(q, "q")
        if threshold is None:
            if not (0 < c < 1 and 0 < tau <= 1):
                raise ConfigError(f"need 0 < c < 1 and 0 < tau <= 1, got c={c}, tau={tau}")
            threshold = c * tau
        cand = self.candidates(q, stats)
        if cand.size == 0:
            return None
        ips = self.points[cand] @ q
        if stats is not None:
            stats.verify_madds += cand.size * self.dim
        best = int(np.argmax(ips))
        if ips[best] < threshold:
            return None
        # among equal inner products prefer the smallest point index
        top = cand[ips == ips[best]]
        return int(top.min()), float(ips[best])


def build(points, params: LshParams) -> LshIndex:
    """Hash unit-norm ``points`` into ``params.L`` tables."""
    x = points.points if isinstance(points, PointSet) else as_matrix(points)
    check_unit(x)
    x = np.array(x, dtype=np.float64)
    x.setflags(write=False)
    n, D = x.shape
    planes = _hyperplanes(params.seed, D, params.K, params.L)
    keys = _hash_keys(x, planes, params.K, params.L).T  # (L, n)
    order = np.argsort(keys, axis=1, kind="stable")
    sorted_keys = np.take_along_axis(keys, order, axis=1)
    for arr in (planes, order, sorted_keys):
        arr.setflags(write=False)
    return LshIndex(params, x, planes, sorted_keys, order, params.budget_for(n))


def planted_queries(points, tau, count, seed):
    """Queries ``q`` with ``<q, x_j> = tau`` for random stored ``x_j``.

    Returns ``(queries, targets)``.
    """
    x = points.points if isinstance(points, PointSet) else as_matrix(points)
    rng = make_rng(seed, _STREAM, 0xCA1)
    targets = rng.integers(0, x.shape[0], size=count)
    qs = np.empty((count, x.shape[1]))
    for i, j in enumerate(targets):
        u = rng.standard_normal(x.shape[1])
        u -= (u @ x[j]) * x[j]
        u /= np.linalg.norm(u)
        qs[i] = tau * x[j] + math.sqrt(1 - tau * tau) * u
    return qs, targets


def calibrate_L(points, c, tau, K=None, seed=0, target=0.9, probes=100, max_L=256,
                probe_budget=None, z=0.0):
    """Smallest ``L`` reaching ``target`` recall on self-planted queries.

    A query counts as recalled if ``query_maxip`` returns any point with
    ``<q, y> >= c * tau``.  With ``z > 0`` the measured recall must clear
    ``target`` by ``z`` binomial standard errors.  Raises ``CalibrationError`` with the best recall
    seen if ``max_L`` tables are not enough.
    """
    from .errors import CalibrationError

    x = points.points if isinstance(points, PointSet) else as_matrix(points)
    K = default_K(x.shape[0]) if K is None else K
    c_bar, r = maxip_to_ann_params(c, tau)
    qs, _ = planted_queries(x, tau, probes, seed)
    full = build(x, LshParams(K, max_L, c_bar, r, seed, probe_budget))
    # Because tables nest by seed, one build at max_L answers every prefix L.
    best = 0.0
    L = 1
    while L <= max_L:
        sub = _prefix(full, L, probe_budget)
        hits = sum(sub.query_maxip(q, c, tau) is not None for q in qs)
        frac = hits / probes
        best = max(best, frac)
        if frac - z * math.sqrt(frac * (1 - frac) / probes) >= target:
            return L
        L = L + 1 if L < 8 else int(math.ceil(L * 1.25))
    raise CalibrationError(f"recall {best:.3f} < {target} at L={max_L}", {"recall": best})


def _prefix(idx: LshIndex, L, probe_budget=None) -> LshIndex:
    p = LshParams(idx.params.K, L, idx.params.c_bar, idx.params.r, idx.params.seed, probe_budget)
    K = p.K
    return LshIndex(p, idx.points, idx.planes[: K * L], idx.sorted_keys[:L], idx.order[:L],
                    p.budget_for(idx.n))
