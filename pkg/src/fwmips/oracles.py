"""Direction-search oracles for the accelerated Frank-Wolfe loop.

Every oracle is prepared once on the transformed vertex set ``psi(S)`` (unit
vectors in ``R^{d+3}``) and then answers ``search(phi, threshold, rng)``:
return ``(index, <phi, psi_index>)`` for a vertex whose exact transformed
inner product is at least ``threshold``, or ``None``.  Costs are tallied in
scalar multiply-adds.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .aipe import AipeIndex, aipe_init
from .errors import ConfigError
from .lsh_jl import LshJlIndex, RobustMaxipParams, RobustQueryStats, build_robust


@dataclass
class OracleCounters:
    queries: int = 0
    hits: int = 0
    fails: int = 0
    madds: int = 0
    last_madds: int = 0

    def record(self, madds, hit):
        self.queries += 1
        self.madds += madds
        self.last_madds = madds
        if hit:
            self.hits += 1
        else:
            self.fails += 1

    def to_dict(self):
        return {"queries": self.queries, "hits": self.hits, "fails": self.fails, "madds": self.madds}


@dataclass(frozen=True)
class ExactSpec:
    """Linear scan over all vertices."""

    name: str = "exact"


@dataclass(frozen=True)
class LshJlSpec:
    params: RobustMaxipParams = field(default_factory=RobustMaxipParams)
    name: str = "lshjl"


@dataclass(frozen=True)
class AipeSpec:
    epsilon: float = 0.2
    delta: float = 0.05
    s: int | None = None
    k: int | None = None
    m: int | None = None
    name: str = "aipe"


class ExactOracle:
    """Scores every vertex; ``n (d + 3)`` multiply-adds per query."""

    def __init__(self, spec: ExactSpec | None = None):
        self.spec = spec or ExactSpec()
        self.counters = OracleCounters()
        self.psi = None
        self.preprocess_seconds = 0.0

    def prepare(self, psi, seed=0, T=1000):
        self.psi = np.asarray(psi)

    def scores(self, phi):
        return self.psi @ phi

    def search(self, phi, threshold, rng):
        sc = self.scores(phi)
        i = int(np.argmax(sc))
        hit = sc[i] >= threshold
        self.counters.record(self.psi.size, hit)
        return (i, float(sc[i])) if hit else None


class LshJlOracle:
    """Sketch-and-hash robust MaxIP index."""

    def __init__(self, spec: LshJlSpec):
        self.spec = spec
        self.counters = OracleCounters()
        self.index: LshJlIndex | None = None
        self.last_stats: RobustQueryStats | None = None

    def prepare(self, psi, seed=0, T=1000):
        self.index = build_robust(psi, self.spec.params, seed)

    def search(self, phi, threshold, rng):
        st = RobustQueryStats()
        res = self.index.query_max_robust(phi, rng, threshold=threshold, stats=st)
        self.last_stats = st
        self.counters.record(st.madds, res is not None)
        return res


class AipeOracle:
    """Estimated argmax via AIPE QueryMax, then one exact check of the winner."""

    def __init__(self, spec: AipeSpec):
        self.spec = spec
        self.counters = OracleCounters()
        self.index: AipeIndex | None = None
        self.psi = None

    def prepare(self, psi, seed=0, T=1000):
        self.psi = np.asarray(psi)
        sp = self.spec
        self.index = aipe_init(self.psi, sp.epsilon, sp.delta, seed=seed, T=T,
                               s=sp.s, k=sp.k, m=sp.m, check_ranges=False)

    @property
    def k_used(self) -> int:
        return self.index.ade.m

    @property
    def model_madds(self) -> int:
        """``k_used * s * (n + 1)``: sketch the query and compare with every point."""
        return self.k_used * self.index.ade.ensemble.s * (self.index.n_live + 1)

    def search(self, phi, threshold, rng):
        before = self.index.stats.madds
        i, _ = self.index.query_max(phi, rng)
        ip = float(self.psi[i] @ phi)
        madds = self.index.stats.madds - before + self.psi.shape[1]
        hit = ip >= threshold
        self.counters.record(madds, hit)
        return (i, ip) if hit else None


def make_oracle(spec):
    if isinstance(spec, ExactSpec):
        return ExactOracle(spec)
    if isinstance(spec, LshJlSpec):
        return LshJlOracle(spec)
    if isinstance(spec, AipeSpec):
        return AipeOracle(spec)
    if hasattr(spec, "search") and hasattr(spec, "prepare"):
        return spec
    raise ConfigError(f"unknown oracle specification {spec!r}")
