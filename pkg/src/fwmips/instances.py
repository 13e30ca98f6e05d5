"""Synthetic problem instances shared by tests, benchmarks and the CLI."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import make_rng
from .geometry import PointSet


@dataclass(frozen=True)
class QuadraticInstance:
    """``f(w) = 0.5 |w - mu|^2`` over ``conv(points)`` with ``mu`` inside the hull."""

    points: PointSet
    mu: np.ndarray
    mu_weights: np.ndarray

    @property
    def f_star(self) -> float:
        return 0.0


def quadratic_instance(n, d, seed, scale=None, concentration=1.0) -> QuadraticInstance:
    """Gaussian vertices with ``E|x|^2 = scale^2`` (default ``scale = 0.5``) and a
    Dirichlet-weighted target ``mu`` in their hull."""
    rng = make_rng(seed, 0x9AD)
    scale = 0.5 if scale is None else scale
    x = rng.standard_normal((n, d)) * (scale / math.sqrt(d))
    lam = rng.dirichlet(np.full(n, concentration))
    return QuadraticInstance(PointSet(x), lam @ x, lam)


def planted_maxip_instance(n, d, seed, target=0.9, rest=0.3):
    """Unit data with one point at inner product ``target`` with the returned
    query and every other point at most ``rest``.

    Returns ``(points, query, planted_index)``.
    """
    rng = make_rng(seed, 0x91A)
    q = rng.standard_normal(d)
    q /= np.linalg.norm(q)
    x = np.empty((n, d))
    for i in range(n):
        while True:
            v = rng.standard_normal(d)
            v /= np.linalg.norm(v)
            if v @ q <= rest:
                break
        x[i] = v
    j = int(rng.integers(n))
    u = rng.standard_normal(d)
    u -= (u @ q) * q
    u /= np.linalg.norm(u)
    x[j] = target * q + math.sqrt(1 - target**2) * u
    return PointSet(x), q, j
