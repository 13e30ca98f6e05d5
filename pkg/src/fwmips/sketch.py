"""Gaussian Johnson-Lindenstrauss sketches and multi-matrix ensembles.

Each matrix ``S`` in ``R^{s x d}`` has i.i.d. ``N(0, 1/s)`` entries and is
regenerated bit-exactly from ``(seed, s, d)``; matrices are never serialized.
Projections use a fixed-order ``einsum`` contraction so projecting a batch
gives the same bits as projecting its rows one at a time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from ._rng import derive_seed, make_rng
from .calibration import load_constants
from .errors import ConfigError, DimensionError, NormError
from .geometry import PointSet, as_matrix, as_vector

_STREAM = 0x4A4C  # "JL"


@dataclass(frozen=True)
class JlMatrix:
    """One ``s x d`` Gaussian sketch, fully determined by ``(seed, s, d)``."""

    s: int
    d: int
    seed: int

    @cached_property
    def entries(self) -> np.ndarray:
        m = make_rng(self.seed, _STREAM).standard_normal((self.s, self.d)) / math.sqrt(self.s)
        m.setflags(write=False)
        return m

    @property
    def frobenius(self) -> float:
        return float(np.linalg.norm(self.entries))

    @property
    def frobenius_flag(self) -> bool:
        """True when ``|S|_F > d`` (the robust-JL hypothesis is violated)."""
        return self.frobenius > self.d

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            return np.einsum("d,sd->s", x, self.entries)
        return np.einsum("nd,sd->ns", x, self.entries)


def plan_sketch_dim(n, epsilon, delta, C_s=None) -> int:
    """``s = ceil(C_s * eps^-2 * ln(n / delta))``."""
    _check_unit_interval(epsilon=epsilon, delta=delta)
    C_s = load_constants().C_s if C_s is None else C_s
    return max(1, math.ceil(C_s * math.log(max(n, 1) / delta) / epsilon**2))


def plan_ensemble_size(n, d, delta, cap=None) -> int:
    """``k_JL = min(ceil((d + ln(1/delta)) * ln(n d)), cap)``, at least 1."""
    cap = load_constants().jl_cap if cap is None else cap
    raw = math.ceil((d + math.log(1.0 / delta)) * math.log(max(n * d, 2)))
    return max(1, min(raw, int(cap)))


def plan_sample_count(n, delta, C_l=None) -> int:
    """Query-time sample count ``l = ceil(C_l * ln(n / delta))``, at least 1."""
    C_l = load_constants().C_l if C_l is None else C_l
    return max(1, math.ceil(C_l * math.log(max(n, 1) / delta)))


def _check_unit_interval(**kw):
    for name, val in kw.items():
        if not (0.0 < val < 1.0):
            raise ConfigError(f"{name} must lie in (0, 1), got {val}")


@dataclass(frozen=True)
class SketchEnsemble:
    """``k`` independent JL matrices sharing the shape ``s x d``."""

    s: int
    d: int
    seeds: tuple
    epsilon: float
    delta: float
    matrices: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.seeds) < 1:
            raise ConfigError("an ensemble needs at least one matrix")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("ensemble seeds must be distinct")
        if self.s < 1 or self.d < 1:
            raise ConfigError(f"invalid sketch shape {self.s}x{self.d}")
        object.__setattr__(self, "seeds", tuple(int(x) for x in self.seeds))
        object.__setattr__(self, "matrices", tuple(JlMatrix(self.s, self.d, x) for x in self.seeds))

    @property
    def k(self) -> int:
        return len(self.seeds)

    def __len__(self):
        return self.k

    @cached_property
    def stacked(self) -> np.ndarray:
        """All matrices as one ``(k, s, d)`` array."""
        out = np.stack([m.entries for m in self.matrices])
        out.setflags(write=False)
        return out

    def project(self, x, j) -> np.ndarray:
        """Sketch of one point (or batch) under matrix ``j``."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.d:
            raise DimensionError(f"expected dimension {self.d}, got {x.shape[-1]}")
        return self.matrices[j].apply(x)

    def project_all(self, x) -> np.ndarray:
        """``(k, s)`` array of the sketches of one point under every matrix."""
        x = as_vector(x)
        if x.shape[0] != self.d:
            raise DimensionError(f"expected dimension {self.d}, got {x.shape[0]}")
        return np.einsum("d,ksd->ks", x, self.stacked)

    def to_json(self) -> str:
        return json.dumps({"s": self.s, "d": self.d, "seeds": list(self.seeds),
                           "epsilon": self.epsilon, "delta": self.delta})

    @classmethod
    def from_json(cls, text) -> "SketchEnsemble":
        raw = json.loads(text)
        return cls(int(raw["s"]), int(raw["d"]), tuple(raw["seeds"]),
                   float(raw["epsilon"]), float(raw["delta"]))


def build_ensemble(n, d, epsilon, delta, seed, k_override=None, s_override=None,
                   C_s=None, cap=None) -> SketchEnsemble:
    """Draw an ensemble sized by the planners (or by explicit overrides)."""
    if n < 1 or d < 1:
        raise ConfigError(f"n and d must be >= 1, got n={n}, d={d}")
    _check_unit_interval(epsilon=epsilon, delta=delta)
    if k_override is not None and k_override < 1:
        raise ConfigError(f"k_override must be >= 1, got {k_override}")
    if s_override is not None and s_override < 1:
        raise ConfigError(f"s_override must be >= 1, got {s_override}")
    s = int(s_override) if s_override is not None else plan_sketch_dim(n, epsilon, delta, C_s)
    k = int(k_override) if k_override is not None else plan_ensemble_size(n, d, delta, cap)
    seeds = []
    taken = set()
    i = 0
    while len(seeds) < k:
        cand = derive_seed(seed, _STREAM, i)
        i += 1
        if cand not in taken:
            taken.add(cand)
            seeds.append(cand)
    return SketchEnsemble(s, d, tuple(seeds), float(epsilon), float(delta))


def project_batch(ens: SketchEnsemble, pts) -> list:
    """Sketch every point under every matrix; returns ``k`` arrays of shape ``(n, s)``."""
    x = pts.points if isinstance(pts, PointSet) else as_matrix(pts)
    if x.shape[1] != ens.d:
        raise DimensionError(f"expected dimension {ens.d}, got {x.shape[1]}")
    return [m.apply(x) for m in ens.matrices]


def preserved_mask(ens: SketchEnsemble, q, pts, epsilon, alpha=1e-9) -> np.ndarray:
    """Boolean ``(k, n)``: does matrix ``i`` keep ``|S_i(q - v)|^2`` within
    ``(1 +- epsilon)|q - v|^2 + alpha``?"""
    q = as_vector(q, "q")
    x = pts.points if isinstance(pts, PointSet) else as_matrix(pts)
    diff = q[None, :] - x
    true = np.einsum("nd,nd->n", diff, diff)
    sk = np.matmul(diff[None], ens.stacked.transpose(0, 2, 1))
    est = np.einsum("kns,kns->kn", sk, sk)
    return (est >= (1 - epsilon) * true - alpha) & (est <= (1 + epsilon) * true + alpha)


def good_fraction(ens: SketchEnsemble, q, pts, epsilon, alpha=1e-9, require_all=False) -> float:
    """Robust-JL fraction of good matrices for query ``q``.

    By default this is ``min_v (1/k) sum_i 1[S_i keeps |q - v|]``: every data
    point must be preserved by at least this fraction of the matrices.  With
    ``require_all=True`` it is the stricter fraction of matrices that keep
    all distances at once.
    """
    q = as_vector(q, "q")
    if abs(np.linalg.norm(q) - 1.0) > 1e-6:
        raise NormError(f"q must be unit norm, got {np.linalg.norm(q):.9g}")
    mask = preserved_mask(ens, q, pts, epsilon, alpha)
    if require_all:
        return float(mask.all(axis=1).mean())
    return float(mask.mean(axis=0).min())


def sample_matrices(ens: SketchEnsemble, l, rng) -> np.ndarray:
    """``l`` matrix indices drawn uniformly with replacement."""
    if ens.k < 1:
        raise ConfigError("empty ensemble")
    if l < 1:
        raise ConfigError(f"sample count must be >= 1, got {l}")
    return rng.integers(0, ens.k, size=int(l))
