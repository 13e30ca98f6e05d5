"""Frank-Wolfe over the convex hull of a point set.

``fw_exact`` runs the textbook method with an exact argmax.  ``fw_accelerated``
replaces the argmax by an approximate MaxIP oracle on the transformed
vertices and keeps a guess ``r`` of the best transformed inner product:

* oracle success (verified ``<phi, psi_s> >= c r``): FW step with
  ``eta_t = min(1, 2 / (c (t + 2)))``;
* oracle failure: if ``C r <= epsilon`` the duality gap is certified below
  ``epsilon`` and the run stops, otherwise ``r`` is halved and the same
  iterate is queried again (``t`` does not advance).
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from ._rng import make_rng
from .calibration import load_constants
from .errors import ConfigError, DimensionError, NotInHullError, StallError
from .geometry import PointSet, TransformPair, as_vector, check_hull_weights, transform_direct_query, transform_unit_query
from .oracles import AipeSpec, ExactOracle, ExactSpec, LshJlSpec, make_oracle

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class Objective:
    """Value and gradient callbacks; ``f_star`` is the optimum when known."""

    value: Callable[[np.ndarray], float]
    grad: Callable[[np.ndarray], np.ndarray]
    f_star: float | None = None
    beta: float = 1.0


def quadratic_objective(mu, f_star=None) -> Objective:
    """``f(w) = 0.5 |w - mu|^2`` (1-smooth)."""
    mu = as_vector(mu, "mu").copy()

    def value(w):
        diff = w - mu
        return 0.5 * float(diff @ diff)

    return Objective(value, lambda w: w - mu, f_star, 1.0)


@dataclass(frozen=True)
class FwConfig:
    epsilon: float = 1e-3
    c: float = 1.0
    beta: float = 1.0
    d_max: float | None = None  # None: taken from the point set
    max_iters: int | None = None
    oracle: object = field(default_factory=ExactSpec)
    r_init: float = 1.0
    seed: int = 0
    C_T: float | None = None
    max_r_halvings: int = 64
    radius_mode: str = "adaptive"  # or "fixed"
    init: str = "centroid"  # or "vertex"

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if not 0 < self.c <= 1:
            raise ConfigError(f"c must lie in (0, 1], got {self.c}")
        if not self.beta > 0:
            raise ConfigError(f"beta must be positive, got {self.beta}")
        if self.d_max is not None and not self.d_max > 0:
            raise ConfigError(f"d_max must be positive, got {self.d_max}")
        if self.max_iters is not None and self.max_iters < 0:
            raise ConfigError(f"max_iters must be >= 0, got {self.max_iters}")
        if not self.r_init > 0:
            raise ConfigError(f"r_init must be positive, got {self.r_init}")
        if self.radius_mode not in ("adaptive", "fixed"):
            raise ConfigError(f"unknown radius_mode {self.radius_mode!r}")
        if self.init not in ("centroid", "vertex"):
            raise ConfigError(f"unknown init {self.init!r}")

    def budget(self, d_max) -> int:
        """``T = ceil(C_T beta D^2 / (c^2 eps))``, capped by ``max_iters``."""
        C_T = load_constants().C_T if self.C_T is None else self.C_T
        D = self.d_max if self.d_max is not None else d_max
        T = max(1, math.ceil(C_T * self.beta * D * D / (self.c**2 * self.epsilon)))
        return T if self.max_iters is None else min(T, self.max_iters)


def step_size(c, t) -> float:
    """``2 / (c (t + 2))`` (unclamped)."""
    if not 0 < c <= 1:
        raise ConfigError(f"c must lie in (0, 1], got {c}")
    if t < 0:
        raise ConfigError(f"t must be >= 0, got {t}")
    return 2.0 / (c * (t + 2))


class HullPoint:
    """A point of the hull kept together with its convex weights."""

    def __init__(self, points: PointSet, weights):
        self.points = points
        self.weights = check_hull_weights(points, np.array(weights, dtype=np.float64))
        self.value = points.combination(self.weights)

    @classmethod
    def centroid(cls, points):
        return cls(points, np.full(points.n, 1.0 / points.n))

    @classmethod
    def vertex(cls, points, i):
        w = np.zeros(points.n)
        w[i] = 1.0
        return cls(points, w)

    def step(self, i, eta):
        """Move to ``(1 - eta) w + eta x_i``."""
        if not 0 <= eta <= 1:
            raise NotInHullError(f"step size {eta} leaves the hull")
        self.weights *= 1.0 - eta
        self.weights[i] += eta
        self.value = (1.0 - eta) * self.value + eta * self.points.points[i]

    def drift(self) -> float:
        """Distance between the cached value and the weighted combination."""
        return float(np.linalg.norm(self.points.combination(self.weights) - self.value))

    def verify(self, atol=1e-6):
        check_hull_weights(self.points, self.weights, self.value, atol_point=atol)


@dataclass
class TraceRecord:
    t: int
    eta: float
    r: float
    outcome: str  # exact | hit | fail
    gap_surrogate: float
    objective: float
    vertex: int = -1
    madds: int = 0


@dataclass
class FwTrace:
    records: list = field(default_factory=list)
    reason: str = ""
    iterations: int = 0
    halvings: int = 0
    wall_time: float = 0.0
    preprocess_time: float = 0.0
    counters: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def append(self, rec: TraceRecord):
        self.records.append(rec)

    def column(self, name, outcome=None) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records
                         if outcome is None or r.outcome == outcome])

    def steps(self):
        return [r for r in self.records if r.outcome != "fail"]

    def objectives(self) -> np.ndarray:
        """Objective after each accepted step."""
        return np.array([r.objective for r in self.steps()])

    def summary(self) -> dict:
        return {"reason": self.reason, "iterations": self.iterations, "halvings": self.halvings,
                "wall_time": self.wall_time, "preprocess_time": self.preprocess_time,
                "counters": self.counters, **self.meta}

    def write_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["t", "eta", "r", "outcome", "gap_surrogate", "objective", "vertex", "madds"])
            for r in self.records:
                wr.writerow([r.t, repr(r.eta), repr(r.r), r.outcome, repr(r.gap_surrogate),
                             repr(r.objective), r.vertex, r.madds])
        return path

    def write_json(self, path) -> Path:
        path = Path(path)
        path.write_text(json.dumps(self.summary(), indent=2, default=float))
        return path


def duality_gap(grad, w, s_star) -> float:
    """``<grad, w - s_star>``."""
    g, w, s = as_vector(grad, "grad"), as_vector(w, "w"), as_vector(s_star, "s_star")
    if not g.shape == w.shape == s.shape:
        raise DimensionError("grad, w and s_star must share a dimension")
    return float(g @ (w - s))


def _gradient(objective, w, d):
    g = np.asarray(objective.grad(w), dtype=np.float64)
    if g.shape != (d,):
        raise DimensionError(f"gradient has shape {g.shape}, expected ({d},)")
    return g


def _initial(points, cfg, init_weights):
    if init_weights is not None:
        return HullPoint(points, init_weights)
    if cfg.init == "vertex":
        return HullPoint.vertex(points, int(make_rng(cfg.seed, 0x1417).integers(points.n)))
    return HullPoint.centroid(points)


def _prepare(points, cfg, oracle_spec, T):
    pair = TransformPair.for_points(points)
    psi = pair.data(points.points)
    oracle = make_oracle(oracle_spec)
    t0 = time.perf_counter()
    oracle.prepare(psi, seed=cfg.seed, T=max(T, 1))
    return pair, psi, oracle, time.perf_counter() - t0


def fw_exact(objective: Objective, points: PointSet, cfg: FwConfig | None = None,
             init_weights=None, step_fn=None, iters=None):
    """Frank-Wolfe with an exact linear scan over transformed vertices.

    The step is ``2 / (t + 2)`` (``c = 1``) unless ``step_fn(t)`` is given.
    Runs ``iters`` steps (default: the configured budget).
    """
    cfg = cfg or FwConfig()
    T = cfg.budget(points.diameter_bound) if iters is None else int(iters)
    pair, psi, oracle, prep = _prepare(points, cfg, ExactSpec(), T)
    hp = _initial(points, cfg, init_weights)
    trace = FwTrace(preprocess_time=prep, meta={"oracle": "exact", "budget": T})
    start = time.perf_counter()
    d = points.d
    trace.reason = "budget"
    for t in range(T):
        w = hp.value
        g = _gradient(objective, w, d)
        phi0 = transform_direct_query(g, w)
        norm = float(np.linalg.norm(phi0))
        if norm == 0.0:
            trace.reason = "zero-gradient"
            break
        phi = transform_unit_query(phi0, norm)
        i, _ = oracle.search(phi, -np.inf, None)
        eta = min(1.0, step_fn(t) if step_fn is not None else step_size(1.0, t))
        gap = float(g @ (w - points.points[i]))
        hp.step(i, eta)
        trace.append(TraceRecord(t, eta, math.nan, "exact", gap, objective.value(hp.value),
                                 i, oracle.counters.last_madds))
        trace.iterations = t + 1
    trace.wall_time = time.perf_counter() - start
    trace.counters = oracle.counters.to_dict()
    return hp, trace


def fw_accelerated(objective: Objective, points: PointSet, cfg: FwConfig, init_weights=None,
                   oracle=None):
    """Frank-Wolfe driven by an approximate MaxIP oracle with r-halving.

    ``oracle`` may be a ready object with ``prepare``/``search`` (tests use
    this to inject stubs); otherwise ``cfg.oracle`` is instantiated.
    Returns ``(HullPoint, FwTrace)``; ``trace.reason`` is one of
    ``converged-by-threshold``, ``budget`` or ``zero-gradient``.
    """
    spec = oracle if oracle is not None else cfg.oracle
    if isinstance(spec, ExactSpec):
        raise ConfigError("fw_accelerated needs an approximate oracle (LshJl or Aipe)")
    if not (isinstance(spec, (LshJlSpec, AipeSpec)) or hasattr(spec, "search")):
        raise ConfigError(f"unsupported oracle {spec!r}")
    T = cfg.budget(points.diameter_bound)
    pair, psi, orc, prep = _prepare(points, cfg, spec, T)
    rng = make_rng(cfg.seed, 0x0AC1E)
    hp = _initial(points, cfg, init_weights)
    trace = FwTrace(preprocess_time=prep, meta={"oracle": getattr(spec, "name", type(spec).__name__),
                                                "budget": T, "D_y": pair.D_y})
    d = points.d
    r = float(cfg.r_init)
    t = 0
    run = 0
    D_x_fixed = None
    start = time.perf_counter()
    trace.reason = "budget"
    while t < T:
        w = hp.value
        g = _gradient(objective, w, d)
        phi0 = transform_direct_query(g, w)
        norm = float(np.linalg.norm(phi0))
        if norm == 0.0:
            trace.reason = "zero-gradient"
            break
        if cfg.radius_mode == "adaptive":
            D_x = norm
        else:
            if D_x_fixed is None:
                D_x_fixed = (1.0 + points.max_radius) * float(np.linalg.norm(g)) or norm
            while norm > D_x_fixed:
                D_x_fixed *= 2.0
            D_x = D_x_fixed
        C = D_x * pair.D_y
        phi = transform_unit_query(phi0, D_x)
        res = orc.search(phi, cfg.c * r, rng)
        madds = orc.counters.last_madds
        if res is None:
            trace.append(TraceRecord(t, math.nan, r, "fail", math.nan, math.nan, -1, madds))
            if C * r <= cfg.epsilon:
                trace.reason = "converged-by-threshold"
                break
            r *= 0.5
            run += 1
            trace.halvings += 1
            if run > cfg.max_r_halvings:
                trace.wall_time = time.perf_counter() - start
                trace.counters = orc.counters.to_dict()
                raise StallError(f"{run} consecutive r-halvings at t={t} (r={r:.3g}, C={C:.3g})")
            continue
        run = 0
        i, _ = res
        eta = min(1.0, step_size(cfg.c, t))
        gap = float(g @ (w - points.points[i]))
        hp.step(i, eta)
        t += 1
        trace.append(TraceRecord(t - 1, eta, r, "hit", gap, objective.value(hp.value), i, madds))
    trace.iterations = t
    trace.wall_time = time.perf_counter() - start
    trace.counters = orc.counters.to_dict()
    trace.meta["final_r"] = r
    return hp, trace
