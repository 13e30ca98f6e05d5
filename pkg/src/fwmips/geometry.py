"""Point-set primitives and the asymmetric transforms behind direction search.

A Frank-Wolfe direction search asks for ``argmax_b <b - a, -grad f(a)>`` over
the vertices ``b``.  Two transform pairs turn that into a maximum inner product
problem on the unit sphere:

* ``phi0(a) = [grad; <a, grad>]`` and ``psi0(b) = [-b; 1]`` give
  ``<phi0(a), psi0(b)> = -<b - a, grad>`` exactly;
* ``phi1(v) = [v/D_x; 0; sqrt(1 - |v/D_x|^2)]`` and
  ``psi1(v) = [v/D_y; sqrt(1 - |v/D_y|^2); 0]`` put both sides on the sphere
  while scaling the inner product by ``1/(D_x D_y)``.

Composing them maps R^d to the unit sphere in R^{d+3}.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, NonFiniteError, NotInHullError, RadiusError

RADIUS_SLACK = 1e-12


def as_vector(x, name="vector"):
    """Return ``x`` as a finite 1-D float64 array."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionError(f"{name} must be 1-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def as_matrix(x, name="points"):
    """Return ``x`` as a finite 2-D float64 array (a single row is promoted)."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError(f"{name} contains NaN or Inf")
    return arr


def _frozen(arr):
    arr = np.array(arr, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PointSet:
    """An immutable ordered set of ``n`` points in ``R^d``.

    ``max_radius`` and ``diameter_bound`` are derived on construction; the
    diameter bound is the exact max pairwise distance for ``n <= 4096`` and
    ``2 * max_radius`` otherwise.
    """

    points: np.ndarray
    max_radius: float = field(init=False)
    diameter_bound: float = field(init=False)

    def __post_init__(self):
        pts = as_matrix(self.points)
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise DimensionError("a point set needs n >= 1 points of dimension d >= 1")
        object.__setattr__(self, "points", _frozen(pts))
        norms = np.linalg.norm(pts, axis=1)
        object.__setattr__(self, "max_radius", float(norms.max()))
        object.__setattr__(self, "diameter_bound", _diameter(pts, float(norms.max())))

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.n

    def __getitem__(self, i):
        return self.points[i]

    def appended(self, x) -> "PointSet":
        """Return a new set with ``x`` appended (metadata recomputed)."""
        x = as_vector(x)
        if x.shape[0] != self.d:
            raise DimensionError(f"expected dimension {self.d}, got {x.shape[0]}")
        return PointSet(np.vstack([self.points, x]))

    def combination(self, weights) -> np.ndarray:
        """Return ``sum_i weights[i] * x_i``."""
        return np.asarray(weights, dtype=np.float64) @ self.points


def _diameter(pts, max_radius, exact_limit=4096):
    n = pts.shape[0]
    if n == 1:
        return 0.0
    if n > exact_limit:
        return 2.0 * max_radius
    sq = np.einsum("ij,ij->i", pts, pts)
    best = 0.0
    for start in range(0, n, 512):
        blk = pts[start:start + 512]
        d2 = sq[start:start + 512, None] + sq[None, :] - 2.0 * blk @ pts.T
        best = max(best, float(d2.max()))
    # Gram-based distances can undershoot by rounding; pad so the value stays a bound.
    return float(np.sqrt(max(best, 0.0))) * (1 + 1e-12) + 1e-12


def transform_direct_query(grad, point) -> np.ndarray:
    """Query side ``phi0(a) = [grad; <a, grad>]``."""
    g = as_vector(grad, "grad")
    a = as_vector(point, "point")
    if g.shape != a.shape:
        raise DimensionError(f"grad has dimension {g.shape[0]}, point has {a.shape[0]}")
    return np.concatenate([g, [a @ g]])


def transform_direct_data(point) -> np.ndarray:
    """Data side ``psi0(b) = [-b; 1]``; accepts one point or an ``(n, d)`` batch."""
    b = np.asarray(point, dtype=np.float64)
    if not np.all(np.isfinite(b)):
        raise NonFiniteError("point contains NaN or Inf")
    if b.ndim == 1:
        return np.concatenate([-b, [1.0]])
    b = as_matrix(b)
    return np.hstack([-b, np.ones((b.shape[0], 1))])


def _unit_pad(v, radius, data_side):
    arr = np.asarray(v, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise NonFiniteError("input contains NaN or Inf")
    if not radius > 0:
        raise RadiusError(f"radius must be positive, got {radius}")
    single = arr.ndim == 1
    arr = np.atleast_2d(arr)
    norms = np.linalg.norm(arr, axis=1)
    if np.any(norms > radius * (1 + RADIUS_SLACK) + RADIUS_SLACK):
        raise RadiusError(f"norm {norms.max():.6g} exceeds radius {radius:.6g}")
    scaled = arr / radius
    fill = np.sqrt(np.clip(1.0 - np.einsum("ij,ij->i", scaled, scaled), 0.0, None))
    zero = np.zeros_like(fill)
    tail = np.stack([fill, zero] if data_side else [zero, fill], axis=1)
    out = np.hstack([scaled, tail])
    return out[0] if single else out


def transform_unit_query(v, D_x) -> np.ndarray:
    """Query side ``phi1(v) = [v/D_x; 0; sqrt(1 - |v/D_x|^2)]``."""
    return _unit_pad(v, D_x, data_side=False)


def transform_unit_data(v, D_y) -> np.ndarray:
    """Data side ``psi1(v) = [v/D_y; sqrt(1 - |v/D_y|^2); 0]``; batch-friendly."""
    return _unit_pad(v, D_y, data_side=True)


@dataclass(frozen=True)
class TransformPair:
    """Radii of the unit-sphere stage and the resulting scale constant ``C``.

    With ``phi = phi1 o phi0`` and ``psi = psi1 o psi0``,
    ``<phi(a), psi(b)> = <b - a, -grad f(a)> / C`` where ``C = D_x * D_y``.
    """

    D_x: float
    D_y: float

    def __post_init__(self):
        if not (self.D_x > 0 and self.D_y > 0 and np.isfinite(self.D_x) and np.isfinite(self.D_y)):
            raise RadiusError(f"radii must be positive and finite, got {self.D_x}, {self.D_y}")

    @property
    def C(self) -> float:
        return float(self.D_x * self.D_y)

    @classmethod
    def for_points(cls, points, D_x=1.0) -> "TransformPair":
        """Use the tightest data radius ``max_b |psi0(b)|`` for the given vertices."""
        pts = points.points if isinstance(points, PointSet) else as_matrix(points)
        D_y = float(np.sqrt(1.0 + np.max(np.einsum("ij,ij->i", pts, pts))))
        return cls(float(D_x), D_y)

    def with_query_radius(self, D_x) -> "TransformPair":
        return TransformPair(float(D_x), self.D_y)

    def data(self, points) -> np.ndarray:
        """Full data-side map ``psi`` on one point or a batch."""
        return transform_unit_data(transform_direct_data(points), self.D_y)

    def query(self, grad, point) -> np.ndarray:
        """Full query-side map ``phi``."""
        return compose_transforms(grad, point, self)


def compose_transforms(grad_fn_output, point, pair: TransformPair) -> np.ndarray:
    """Query-side composition ``phi1(phi0(a))`` using ``pair.D_x``.

    The result pairs with ``pair.data(b)`` so that
    ``C * <phi(a), psi(b)> = <b - a, -grad>``.
    """
    return transform_unit_query(transform_direct_query(grad_fn_output, point), pair.D_x)


def direct_query_norm(grad, point) -> float:
    """``|phi0(a)|``, the smallest admissible query radius for this iterate."""
    return float(np.linalg.norm(transform_direct_query(grad, point)))


def check_hull_weights(points: PointSet, weights, x=None, atol_sum=1e-9, atol_point=1e-6):
    """Validate convex-combination weights and, optionally, the point they describe."""
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (points.n,):
        raise NotInHullError(f"expected {points.n} weights, got shape {w.shape}")
    if np.any(w < 0) or not np.all(np.isfinite(w)):
        raise NotInHullError("hull weights must be finite and nonnegative")
    if abs(w.sum() - 1.0) > atol_sum:
        raise NotInHullError(f"hull weights sum to {w.sum():.12g}, not 1")
    if x is not None:
        err = np.linalg.norm(points.combination(w) - as_vector(x))
        if err > atol_point:
            raise NotInHullError(f"weights reproduce the point only to {err:.3g}")
    return w


def hull_min_ip_property(points: PointSet, x, grad, weights) -> float:
    """Return ``min_s <grad, s - x>`` after checking ``x`` is in the hull.

    For a hull point this is always ``<= 0``: the weighted average of
    ``<grad, s_i - x>`` is zero, so the minimum cannot be positive.
    """
    x = as_vector(x, "x")
    g = as_vector(grad, "grad")
    if x.shape[0] != points.d or g.shape[0] != points.d:
        raise DimensionError("x, grad and the point set must share a dimension")
    check_hull_weights(points, weights, x)
    return float(np.min(points.points @ g - x @ g))


def argmax_smallest(values) -> int:
    """Index of the maximum, ties resolved to the smallest index."""
    return int(np.argmax(np.asarray(values)))


def unit_distance_sq(a, b) -> float:
    """``|a - b|^2``, equal to ``2 - 2<a, b>`` for unit vectors."""
    diff = np.asarray(a, dtype=np.float64) - np.asarray(b, dtype=np.float64)
    return float(diff @ diff)
