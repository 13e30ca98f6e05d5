"""Adaptive-query-robust MaxIP: JL sketches, quantized queries, LSH per sketch.

Build: sketch the unit data with ``k_JL`` Gaussian matrices, lift each
sketched set back onto the unit sphere with the data-side pad transform, and
build ``kappa`` independent LSH indexes per sketch.

Query: sample ``l`` sketches with replacement; for each, sketch the query,
round it to a ``lambda / sqrt(s)`` grid, probe the ``kappa`` indexes in order
and stop at the first index that surfaces a point whose exact inner product
with the original query clears the acceptance threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._rng import derive_seed
from .calibration import load_constants
from .errors import ConfigError
from .geometry import PointSet, as_matrix, as_vector, transform_unit_data, transform_unit_query
from .lsh import LshIndex, LshParams, QueryStats, build, check_unit, default_K, maxip_to_ann_params
from .sketch import SketchEnsemble, build_ensemble, plan_sample_count, sample_matrices


@dataclass(frozen=True)
class RobustMaxipParams:
    """Sizing of an :class:`LshJlIndex`; ``None`` fields are planned at build time."""

    epsilon: float = 0.5
    delta: float = 0.05
    c: float = 0.9
    tau: float = 0.5
    lam: float = 0.01
    kappa: int | None = None
    l: int | None = None
    alpha: float = 1e-9
    C_lambda: float | None = None
    k_jl: int | None = None
    s: int | None = None
    K: int | None = None
    L: int = 2
    probe_budget: int | None = None

    def __post_init__(self):
        for name in ("epsilon", "delta", "c", "tau"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if not self.lam > 0:
            raise ConfigError(f"lambda must be positive, got {self.lam}")
        if self.alpha < 0:
            raise ConfigError(f"alpha must be nonnegative, got {self.alpha}")
        for name in ("kappa", "l", "k_jl", "s", "K"):
            v = getattr(self, name)
            if v is not None and v < 1:
                raise ConfigError(f"{name} must be >= 1, got {v}")
        if self.L < 1:
            raise ConfigError(f"L must be >= 1, got {self.L}")

    @property
    def lambda_tilde(self) -> float:
        """Additive slack ``C_lambda * sqrt((1 - c tau)/(1 - tau)) * (lambda + alpha)``."""
        C = load_constants().C_lambda if self.C_lambda is None else self.C_lambda
        return C * math.sqrt((1 - self.c * self.tau) / (1 - self.tau)) * (self.lam + self.alpha)

    @property
    def threshold(self) -> float:
        return (1 - self.epsilon) * self.c * self.tau - self.lambda_tilde


def plan_kappa(n, s, lam, delta, cap=None) -> int:
    """``kappa = ceil(s * ln(n s / (lambda delta)))`` capped (default cap 16)."""
    cap = load_constants().kappa_cap if cap is None else cap
    raw = math.ceil(s * math.log(max(n * s / (lam * delta), math.e)))
    return max(1, min(raw, int(cap)))


def quantize_query(q, lam) -> np.ndarray:
    """Round each coordinate to the nearest multiple of ``lam / sqrt(dim)``.

    The rounding error is at most ``lam / 2`` in l2 and the map is idempotent.
    """
    if not lam > 0:
        raise ConfigError(f"lambda must be positive, got {lam}")
    q = as_vector(q, "q")
    step = lam / math.sqrt(q.shape[0])
    return np.round(q / step) * step


@dataclass
class RobustQueryStats(QueryStats):
    sketches_sampled: int = 0
    subindexes_probed: int = 0
    sketch_madds: int = 0
    success: bool = False

    @property
    def madds(self) -> int:
        return self.sketch_madds + self.hash_madds + self.verify_madds


@dataclass(frozen=True)
class LshJlIndex:
    """``k_JL * kappa`` LSH indexes over re-unitized sketches of the data."""

    params: RobustMaxipParams
    ensemble: SketchEnsemble
    points: np.ndarray = field(repr=False)
    radii: np.ndarray = field(repr=False)  # per-sketch data radius
    sub_indexes: tuple = field(repr=False)  # [i][j]
    kappa: int = 1
    l: int = 1

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def nbytes(self) -> int:
        """Hash-table bytes over all sub-indexes."""
        return sum(sub.nbytes for row in self.sub_indexes for sub in row)

    def sketch_query(self, q, i) -> np.ndarray:
        """Quantized sketch of ``q`` under matrix ``i``, lifted to the unit sphere."""
        qhat = quantize_query(self.ensemble.project(q, i), self.params.lam)
        norm = float(np.linalg.norm(qhat))
        return transform_unit_query(qhat, norm if norm > 0 else 1.0)

    def query_max_robust(self, q, rng, threshold=None, stats: RobustQueryStats | None = None):
        """Return ``(index, <q, x_index>)`` for the first qualifying candidate, else ``None``.

        A candidate qualifies when its exact inner product with ``q`` is at
        least ``threshold`` (default ``(1 - eps) c tau - lambda_tilde``).
        Within the sub-index that first produces qualifying candidates the one
        with the largest inner product is returned.
        """
        q = as_vector(q, "q")
        check_unit(q, "q")
        thr = self.params.threshold if threshold is None else float(threshold)
        st = stats if stats is not None else RobustQueryStats()
        verified = {}
        d = self.points.shape[1]
        for i in sample_matrices(self.ensemble, self.l, rng):
            st.sketches_sampled += 1
            st.sketch_madds += self.ensemble.s * d
            qs = self.sketch_query(q, int(i))
            for sub in self.sub_indexes[int(i)]:
                st.subindexes_probed += 1
                cand = sub.candidates(qs, st)
                if cand.size == 0:
                    continue
                new = [int(c) for c in cand if int(c) not in verified]
                if new:
                    ips = self.points[new] @ q
                    st.verify_madds += len(new) * d
                    verified.update(zip(new, ips.tolist()))
                ips = np.array([verified[int(c)] for c in cand])
                ok = ips >= thr
                if ok.any():
                    best = ips[ok].max()
                    winner = int(cand[ok & (ips == best)].min())
                    st.success = True
                    return winner, float(best)
        return None


def build_robust(points, params: RobustMaxipParams, seed=0) -> LshJlIndex:
    """Build the sketch ensemble and all LSH sub-indexes."""
    x = points.points if isinstance(points, PointSet) else as_matrix(points)
    check_unit(x)
    x = np.array(x, dtype=np.float64)
    x.setflags(write=False)
    n, d = x.shape
    ens = build_ensemble(n, d, params.epsilon, params.delta, seed,
                         k_override=params.k_jl, s_override=params.s)
    kappa = params.kappa if params.kappa is not None else plan_kappa(n, ens.s, params.lam, params.delta)
    l = params.l if params.l is not None else plan_sample_count(n, params.delta)
    K = params.K if params.K is not None else default_K(n)
    c_bar, r = maxip_to_ann_params(params.c, params.tau)
    radii = np.empty(ens.k)
    rows = []
    for i in range(ens.k):
        y = ens.project(x, i)
        radii[i] = float(np.linalg.norm(y, axis=1).max()) or 1.0
        y_unit = transform_unit_data(y, radii[i])
        rows.append(tuple(
            build(y_unit, LshParams(K, params.L, c_bar, r, derive_seed(seed, 0x5355, i, j),
                                    params.probe_budget))
            for j in range(kappa)))
    radii.setflags(write=False)
    return LshJlIndex(params, ens, x, radii, tuple(rows), kappa, l)
