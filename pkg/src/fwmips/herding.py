"""Kernel herding as Frank-Wolfe on ``0.5 |w - mu|^2``.

Data are lifted by a feature map ``Phi`` and herding tracks the feature mean
``mu = sum_i P_i Phi(x_i)``.  The classical recursion is

    x_{t+1} = argmax_x <w_t, Phi(x)>,   w_{t+1} = w_t + mu - Phi(x_{t+1}),

and the accelerated variant runs :func:`fw_accelerated` on the mapped points.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from ._rng import make_rng
from .errors import ConfigError, DimensionError
from .geometry import PointSet, as_matrix, as_vector
from .solver import FwConfig, FwTrace, TraceRecord, fw_accelerated, quadratic_objective


@dataclass(frozen=True)
class FeatureMap:
    """``identity``, ``random_fourier`` (Gaussian kernel) or ``degree2_tensor``."""

    kind: str = "random_fourier"
    d: int = 1
    k: int | None = None
    bandwidth: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kind == "identity":
            if self.k not in (None, self.d):
                raise ConfigError("identity feature map requires k == d")
        elif self.kind == "degree2_tensor":
            if self.k not in (None, self.d * self.d):
                raise ConfigError("degree2_tensor feature map requires k == d^2")
        elif self.kind == "random_fourier":
            if self.k is None or self.k < 1:
                raise ConfigError("random_fourier needs a feature dimension k >= 1")
            if not self.bandwidth > 0:
                raise ConfigError(f"bandwidth must be positive, got {self.bandwidth}")
        else:
            raise ConfigError(f"unknown feature map kind {self.kind!r}")

    @property
    def output_dim(self) -> int:
        if self.kind == "identity":
            return self.d
        if self.kind == "degree2_tensor":
            return self.d * self.d
        return int(self.k)

    def _rff(self):
        rng = make_rng(self.seed, 0x8FF)
        W = rng.standard_normal((self.k, self.d)) / self.bandwidth
        b = rng.uniform(0.0, 2 * math.pi, self.k)
        return W, b

    def __call__(self, x) -> np.ndarray:
        x = as_matrix(x)
        if x.shape[1] != self.d:
            raise DimensionError(f"expected dimension {self.d}, got {x.shape[1]}")
        if self.kind == "identity":
            return x.copy()
        if self.kind == "degree2_tensor":
            return np.einsum("ni,nj->nij", x, x).reshape(x.shape[0], -1)
        W, b = self._rff()
        return math.sqrt(2.0 / self.k) * np.cos(x @ W.T + b)

    def to_dict(self):
        return {"kind": self.kind, "d": self.d, "k": self.k, "bandwidth": self.bandwidth,
                "seed": self.seed}


def median_bandwidth(x, max_points=1000, seed=0) -> float:
    """Median pairwise distance (on a random subset for large inputs)."""
    x = as_matrix(x)
    if x.shape[0] > max_points:
        x = x[make_rng(seed, 0x3ED).choice(x.shape[0], max_points, replace=False)]
    sq = np.einsum("ij,ij->i", x, x)
    d2 = np.clip(sq[:, None] + sq[None, :] - 2 * x @ x.T, 0.0, None)
    iu = np.triu_indices(x.shape[0], 1)
    med = float(np.sqrt(np.median(d2[iu]))) if iu[0].size else 1.0
    return med if med > 0 else 1.0


@dataclass(frozen=True)
class HerdingInstance:
    raw: PointSet
    feature_map: FeatureMap
    mapped: PointSet
    P: np.ndarray
    mu: np.ndarray

    @classmethod
    def build(cls, x, feature_map: FeatureMap | None = None, P=None, k=64, seed=0):
        """Map ``x`` and form ``mu``; ``P`` defaults to uniform, ``Phi`` to RFF with
        the median-distance bandwidth."""
        raw = x if isinstance(x, PointSet) else PointSet(x)
        if feature_map is None:
            feature_map = FeatureMap("random_fourier", raw.d, k, median_bandwidth(raw.points, seed=seed), seed)
        mapped = PointSet(feature_map(raw.points))
        if P is None:
            P = np.full(raw.n, 1.0 / raw.n)
        P = np.asarray(P, dtype=np.float64)
        if P.shape != (raw.n,) or np.any(P < 0) or abs(P.sum() - 1.0) > 1e-9:
            raise ConfigError("P must be a probability vector over the data")
        return cls(raw, feature_map, mapped, P, P @ mapped.points)

    @classmethod
    def from_json(cls, path):
        """Load ``{"data": path, "feature_map": {...}, "P": path?}``; paths are
        relative to the JSON file."""
        from .pointio import read_points

        path = Path(path)
        spec = json.loads(path.read_text())
        raw = read_points(path.parent / spec["data"])
        fm = spec.get("feature_map")
        fmap = FeatureMap(**{**fm, "d": raw.d}) if fm else None
        P = None
        if spec.get("P"):
            P = np.loadtxt(path.parent / spec["P"], delimiter=",", ndmin=1)
        return cls.build(raw, fmap, P, k=spec.get("k", 64), seed=spec.get("seed", 0))


def herding_objective(w, mu):
    """``(0.5 |w - mu|^2, w - mu)``."""
    w, mu = as_vector(w, "w"), as_vector(mu, "mu")
    if w.shape != mu.shape:
        raise DimensionError("w and mu must share a dimension")
    diff = w - mu
    return 0.5 * float(diff @ diff), diff


def herding_classic(inst: HerdingInstance, T, w0=None):
    """Classical herding for ``T`` steps.

    Returns ``(indices, trace, w_T)``; the trace's ``objective`` column holds
    ``|mean_{i<=t} Phi(x_i) - mu|`` after step ``t``.  ``w0`` defaults to ``mu``.
    """
    if T < 1:
        raise ConfigError(f"T must be >= 1, got {T}")
    phi = inst.mapped.points
    mu = inst.mu
    w = mu.copy() if w0 is None else as_vector(w0, "w0").copy()
    total = np.zeros_like(mu)
    picks = []
    trace = FwTrace(meta={"oracle": "herding-classic"})
    for t in range(T):
        i = int(np.argmax(phi @ w))
        picks.append(i)
        w += mu - phi[i]
        total += phi[i]
        err = float(np.linalg.norm(total / (t + 1) - mu))
        trace.append(TraceRecord(t, 1.0 / (t + 1), math.nan, "exact", math.nan, err, i, phi.size))
    trace.iterations = T
    trace.reason = "budget"
    return picks, trace, w


def herding_accelerated(inst: HerdingInstance, cfg: FwConfig, oracle=None, init_weights=None):
    """Accelerated herding: FW with an approximate MaxIP oracle and ``beta = 1``.

    Starts from a seeded random sample (a vertex) unless ``init_weights`` is
    given: with uniform ``P`` the centroid already equals ``mu``.
    """
    cfg = replace(cfg, beta=1.0, init="vertex")
    obj = quadratic_objective(inst.mu)
    return fw_accelerated(obj, inst.mapped, cfg, init_weights=init_weights, oracle=oracle)
