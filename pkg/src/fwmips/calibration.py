"""Planner constants and the pilot sweeps that produce them.

The constants hidden in the big-O sizing formulas are stored in
``calibration.json`` next to this module.  ``load_constants`` reads that
file; ``run_calibration`` re-derives it from Monte-Carlo sweeps.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ._rng import make_rng
from .errors import CalibrationError


@dataclass(frozen=True)
class Constants:
    C_s: float = 1.0
    C_l: float = 1.0
    C_k: float = 1.0
    C_q: float = 1.0
    C_T: float = 2.0
    C_lambda: float = 4.0
    K: int | None = None  # None means ceil(log2 n)
    L: int = 8
    jl_cap: int = 256
    kappa_cap: int = 16

    def to_dict(self):
        return asdict(self)


_CACHE: dict = {}


def constants_path() -> Path:
    return Path(str(resources.files(__package__).joinpath("calibration.json")))


def load_constants(path=None) -> Constants:
    """Read the committed constants (cached); fall back to built-in defaults."""
    key = str(path) if path else None
    if key not in _CACHE:
        p = Path(path) if path else constants_path()
        if p.exists():
            raw = json.loads(p.read_text())
            known = {k: raw[k] for k in Constants.__dataclass_fields__ if k in raw}
            _CACHE[key] = Constants(**known)
        else:
            _CACHE[key] = Constants()
    return _CACHE[key]


def _unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def calibrate_C_s(n=500, d=64, epsilon=0.2, delta=0.05, seed=0, trials=100, matrices=100,
                  s_max=4096, z=2.0):
    """Smallest ``s`` with ``|(|Sx|^2 - 1)| <= eps`` for a ``1 - delta`` share of
    (matrix, unit x) pairs, judged by a one-sided ``z``-sigma lower bound so
    the constant generalizes beyond the pilot sample.  Returns ``(C_s, s)``."""
    rng = make_rng(seed, 0xCA5)
    x = _unit_rows(rng, trials, d)
    total = trials * matrices
    s = 8
    best = 0.0
    while s <= s_max:
        ok = 0
        for _ in range(matrices):
            S = rng.standard_normal((s, d)) / math.sqrt(s)
            ok += int(np.sum(np.abs(np.sum((x @ S.T) ** 2, axis=1) - 1.0) <= epsilon))
        frac = ok / total
        best = max(best, frac)
        if frac - z * math.sqrt(frac * (1 - frac) / total) >= 1 - delta:
            return s * epsilon**2 / math.log(n / delta), s
        s = math.ceil(s * 1.05)
    raise CalibrationError(f"JL distortion target unreachable up to s={s_max}", {"fraction": best})


def calibrate_C_l(C_s, n=200, d=50, epsilon=0.3, delta=0.05, k=64, queries=50, seed=0):
    """Samples needed so that all ``l`` sampled sketches are bad with probability
    at most ``delta``, using the measured worst good-matrix fraction."""
    from .sketch import build_ensemble, good_fraction

    rng = make_rng(seed, 0xCA7)
    pts = _unit_rows(rng, n, d)
    ens = build_ensemble(n, d, epsilon, delta, seed, k_override=k, C_s=C_s)
    g = min(good_fraction(ens, q, pts, epsilon) for q in _unit_rows(rng, queries, d))
    if g >= 1.0:
        l = 1
    elif g <= 0.0:
        raise CalibrationError("no good sketches at the pilot setting", {"good_fraction": g})
    else:
        l = max(1, math.ceil(math.log(1 / delta) / -math.log(1 - g)))
    return l / math.log(n / delta), l, g


def calibrate_aipe(C_s, n=500, d=64, epsilon=0.1, delta=0.01, T=100, seed=0, queries=200,
                   pool_factor=3, m_max=61, target=0.99):
    """Smallest odd subset size ``m`` whose ensemble-median estimate keeps the
    envelope for every point in a ``target`` share of fresh queries.

    The pool holds ``pool_factor * m`` matrices.  Returns ``(C_k, C_q, m, k)``.
    """
    from .aipe import envelope_holds
    from .sketch import plan_sketch_dim

    rng = make_rng(seed, 0xCA1)
    x = _unit_rows(rng, n, d)
    q = _unit_rows(rng, queries, d)
    s = plan_sketch_dim(n, epsilon, delta, C_s)
    ip = q @ x.T
    dists = np.empty((m_max, queries, n))
    for j in range(m_max):
        S = rng.standard_normal((s, d)) / math.sqrt(s)
        sx, sq = x @ S.T, q @ S.T
        d2 = np.einsum("qs,qs->q", sq, sq)[:, None] + np.einsum("ns,ns->n", sx, sx)[None, :] - 2 * sq @ sx.T
        dists[j] = np.sqrt(np.clip(d2, 0, None))
    best = 0.0
    for m in range(1, m_max + 1, 2):
        ok = 0
        for i in range(queries):
            sub = rng.choice(m_max, size=m, replace=False)
            w = 1 - 0.5 * np.median(dists[sub, i], axis=0) ** 2
            ok += bool(envelope_holds(w, ip[i], epsilon).all())
        frac = ok / queries
        best = max(best, frac)
        if frac >= target:
            k = pool_factor * m
            k = k if k % 2 else k + 1
            return k / math.log((n + T) / delta), m / math.log(n * T / delta), m, k
    raise CalibrationError(f"AIPE envelope target unreachable up to m={m_max}", {"fraction": best})


def calibrate_lsh(n=1000, d=64, c=0.9, tau=0.9, seed=0, probes=200, z=2.0):
    """Smallest ``L`` at ``K = ceil(log2 n)`` whose planted-query recall clears
    0.9 by ``z`` standard errors."""
    from .lsh import calibrate_L

    rng = make_rng(seed, 0xCA2)
    pts = _unit_rows(rng, n, d)
    return calibrate_L(pts, c, tau, seed=seed, probes=probes, target=0.9, z=z)


def run_calibration(path=None, seed=0, quick=False) -> Path:
    """Run every pilot sweep and write the constants as JSON."""
    path = Path(path) if path else constants_path()
    C_s, s_jl = calibrate_C_s(seed=seed, trials=50 if quick else 100)
    C_l, l, g = calibrate_C_l(C_s, seed=seed)
    C_k, C_q, m, k = calibrate_aipe(C_s, seed=seed, queries=100 if quick else 200,
                                    m_max=31 if quick else 61)
    L = calibrate_lsh(seed=seed, probes=100 if quick else 200)
    consts = Constants(C_s=round(C_s, 4), C_l=round(C_l, 4), C_k=round(C_k, 4), C_q=round(C_q, 4), L=L)
    record = {**consts.to_dict(),
              "pilot": {"seed": seed, "jl_s": s_jl, "jl_target": "n=500 d=64 eps=0.2 delta=0.05",
                        "sample_count": l, "min_good_fraction": g,
                        "aipe_m": m, "aipe_k": k, "aipe_target": "n=500 d=64 eps=0.1 delta=0.01",
                        "lsh_target": "n=1000 d=64 c=tau=0.9 recall>=0.9 (z=2 lower bound)"}}
    path.write_text(json.dumps(record, indent=2) + "\n")
    _CACHE.clear()
    return path
