"""Finite weighted nets standing in for regular sets, and ball/mass queries.

A :class:`WeightedNet` is a finite point set with nonnegative per-point mass.
Two metric modes are supported:

* Euclidean: ``points`` is an ``(N, n)`` float array.
* oracle: a symmetric distance callable ``oracle(i, j)`` over point ids
  ``0..N-1``; distances are memoized row by row.

Correctness of every query is defined by a brute-force scan; the KD-tree used
for Euclidean ball queries is only a candidate generator whose output is
re-filtered with the same exact distance formula as the scan.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import ConvexHull, cKDTree
from scipy.spatial import QhullError

from .errors import (
    CannotRescale,
    EmptyNet,
    InvalidNet,
    InvalidParams,
    InvalidRadius,
    ScaleBelowResolution,
)

RESOLUTION_FACTOR = 10.0
"""Scales below ``RESOLUTION_FACTOR * resolution`` are dominated by discreteness."""


def point_distances(points, x):
    """Exact Euclidean distances from ``x`` to every row of ``points``.

    This is the single distance formula used everywhere, so that the fast and
    brute-force paths agree bit for bit.
    """
    diff = points - np.asarray(x, dtype=float)
    return np.sqrt(np.sum(diff * diff, axis=-1))


def pair_distance(a, b):
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(np.sqrt(np.sum(diff * diff)))


@dataclass(frozen=True)
class RegularityParams:
    exponent: float
    constant: float
    scale_range: tuple

    def __post_init__(self):
        r_min, r_max = self.scale_range
        if not self.exponent > 0:
            raise InvalidParams("exponent must be positive", exponent=self.exponent)
        if not self.constant >= 1:
            raise InvalidParams("constant must be >= 1", constant=self.constant)
        if not 0 < r_min < r_max:
            raise InvalidParams("need 0 < r_min < r_max", scale_range=self.scale_range)


class WeightedNet:
    """Immutable finite weighted point set.

    Parameters
    ----------
    points : array_like, shape (N, n), or int
        Coordinates in Euclidean mode; the number of points in oracle mode.
    weights : array_like, optional
        Nonnegative masses, default uniform ``1/N``.
    resolution : float, optional
        Scale ``delta`` below which the net does not resolve the set. Defaults
        to the minimum nonzero nearest-neighbour distance.
    oracle : callable, optional
        ``oracle(i, j) -> float``; switches the net to oracle mode.
    """

    def __init__(self, points, weights=None, resolution=None, oracle=None, validate=True):
        self.oracle = oracle
        if oracle is None:
            pts = np.array(points, dtype=float)
            if pts.ndim == 1:
                pts = pts.reshape(-1, 1)
            if pts.ndim != 2:
                raise InvalidNet("points must be a 2-d array", shape=pts.shape)
            if pts.shape[0] == 0:
                raise EmptyNet("net has no points")
            if not np.all(np.isfinite(pts)):
                raise InvalidNet("coordinates must be finite")
            pts.setflags(write=False)
            self.points = pts
            size = pts.shape[0]
        else:
            size = int(points)
            if size <= 0:
                raise EmptyNet("net has no points")
            self.points = np.arange(size)
            self._rows = {}
        if weights is None:
            w = np.full(size, 1.0 / size)
        else:
            w = np.array(weights, dtype=float).reshape(-1)
        if w.shape[0] != size:
            raise InvalidNet("weights and points differ in length", n_points=size, n_weights=w.shape[0])
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise InvalidNet("weights must be finite and nonnegative")
        if not w.sum() > 0:
            raise InvalidNet("total weight must be positive")
        w.setflags(write=False)
        self.weights = w
        self._tree = None
        self._diameter = None
        if resolution is None:
            resolution = self._default_resolution()
        self.resolution = float(resolution)
        if validate:
            self._validate()

    # ------------------------------------------------------------------
    @property
    def size(self):
        return self.weights.shape[0]

    def __len__(self):
        return self.size

    @property
    def dim(self):
        return None if self.oracle is not None else self.points.shape[1]

    @property
    def euclidean(self):
        return self.oracle is None

    @property
    def total_mass(self):
        return float(self.weights.sum())

    def coords(self, i):
        if not self.euclidean:
            raise InvalidNet("oracle nets have no coordinates")
        return self.points[i]

    def distances_from(self, x):
        """Distances from ``x`` to all points.

        ``x`` is a point index, or (Euclidean mode only) a coordinate vector.
        """
        if self.euclidean:
            if isinstance(x, (int, np.integer)):
                x = self.points[int(x)]
            return point_distances(self.points, x)
        if not isinstance(x, (int, np.integer)):
            raise InvalidNet("oracle nets only accept point indices as centers")
        i = int(x)
        row = self._rows.get(i)
        if row is None:
            row = np.array([0.0 if j == i else float(self.oracle(i, j)) for j in range(self.size)])
            row.setflags(write=False)
            self._rows[i] = row
        return row

    def dist(self, i, j):
        if self.euclidean:
            return pair_distance(self.points[i], self.points[j])
        return float(self.distances_from(int(i))[int(j)])

    def lex_order(self):
        """Deterministic candidate order: ascending lexicographic coordinates."""
        if not self.euclidean:
            return np.arange(self.size)
        return np.lexsort(self.points.T[::-1])

    def subset(self, indices, weights=None, resolution=None):
        idx = np.asarray(indices, dtype=int)
        w = self.weights[idx] if weights is None else weights
        res = self.resolution if resolution is None else resolution
        if self.euclidean:
            return WeightedNet(self.points[idx], w, resolution=res, validate=False)
        parent = self
        return WeightedNet(len(idx), w, resolution=res,
                           oracle=lambda i, j: parent.dist(idx[i], idx[j]), validate=False)

    @property
    def tree(self):
        if self._tree is None and self.euclidean:
            self._tree = cKDTree(self.points)
        return self._tree

    # ------------------------------------------------------------------
    def _default_resolution(self):
        if self.size == 1:
            return 1.0
        if self.euclidean:
            dd, _ = cKDTree(self.points).query(self.points, k=2)
            nn = dd[:, 1]
        else:
            nn = np.array([np.min(np.delete(self.distances_from(i), i)) for i in range(self.size)])
        nn = nn[nn > 0]
        return float(nn.min()) if nn.size else 1.0

    def _validate(self):
        if not self.resolution > 0:
            raise InvalidNet("resolution must be positive", resolution=self.resolution)
        if self.size > 1:
            diam = diameter(self)
            if diam > 0 and self.resolution > diam:
                raise InvalidNet("resolution exceeds diameter", resolution=self.resolution, diameter=diam)
        if not self.euclidean:
            _check_triangle_sample(self)

    def to_dict(self):
        if not self.euclidean:
            raise InvalidNet("oracle nets cannot be serialized")
        return {
            "schema": "regset.net/1",
            "dim": int(self.dim),
            "points": self.points.tolist(),
            "weights": self.weights.tolist(),
            "resolution": self.resolution,
            "metric": "euclidean",
        }

    @classmethod
    def from_dict(cls, data):
        if data.get("metric", "euclidean") != "euclidean":
            raise InvalidNet("only euclidean net descriptors are supported")
        pts = np.array(data["points"], dtype=float).reshape(-1, int(data["dim"]))
        return cls(pts, data["weights"], resolution=data.get("resolution"))

    def __repr__(self):
        mode = f"euclidean({self.dim})" if self.euclidean else "oracle"
        return f"WeightedNet(size={self.size}, metric={mode}, resolution={self.resolution:g})"


def _check_triangle_sample(net, samples=200, seed=0):
    rng = np.random.default_rng(seed)
    for _ in range(samples if net.size >= 3 else 0):
        i, j, k = (int(v) for v in rng.integers(0, net.size, size=3))
        dij, djk, dik = net.dist(i, j), net.dist(j, k), net.dist(i, k)
        if min(dij, djk, dik) < 0 or abs(net.dist(j, i) - dij) > 0:
            raise InvalidNet("oracle is not a symmetric nonnegative distance", triple=(i, j, k))
        if dik > dij + djk + 1e-12 * max(1.0, dik):
            raise InvalidNet("oracle violates the triangle inequality", triple=(i, j, k))


# ----------------------------------------------------------------------
def diameter(net):
    """Maximum pairwise distance; 0 for a singleton."""
    if net.size == 0:
        raise EmptyNet("empty net")
    if net._diameter is not None:
        return net._diameter
    if net.size == 1:
        diam = 0.0
    elif net.euclidean and net.dim == 1:
        x = net.points[:, 0]
        diam = pair_distance([x.max()], [x.min()])
    elif net.euclidean and net.size > 2000:
        cand = _hull_candidates(net.points)
        diam = _brute_diameter(net.points[cand])
    elif net.euclidean:
        diam = _brute_diameter(net.points)
    else:
        diam = max(float(net.distances_from(i).max()) for i in range(net.size))
    net._diameter = diam
    return diam


def _brute_diameter(points):
    best = 0.0
    for i in range(points.shape[0] - 1):
        best = max(best, float(point_distances(points[i + 1:], points[i]).max()))
    return best


def _hull_candidates(points):
    try:
        return ConvexHull(points).vertices
    except (QhullError, ValueError):
        return np.arange(points.shape[0])


def brute_diameter(net):
    """Reference O(N^2) diameter used as an oracle in tests."""
    best = 0.0
    for i in range(net.size):
        best = max(best, float(np.max(net.distances_from(i))))
    return best


def ball_query(net, x, r, use_index=True):
    """Closed ball ``B(x, r)``: indices (ascending) of points with ``d <= r``, and their mass."""
    if r < 0:
        raise InvalidRadius("radius must be nonnegative", r=r)
    if net.euclidean and use_index:
        center = net.points[int(x)] if isinstance(x, (int, np.integer)) else np.asarray(x, dtype=float)
        cand = net.tree.query_ball_point(center, r * (1 + 1e-9) + 1e-300)
        cand = np.array(sorted(cand), dtype=int)
        if cand.size:
            cand = cand[point_distances(net.points[cand], center) <= r]
        mask = np.zeros(net.size, dtype=bool)
        mask[cand] = True
    else:
        mask = net.distances_from(x) <= r
    idx = np.flatnonzero(mask)
    return idx, float(net.weights[mask].sum())


def brute_ball_query(net, x, r):
    """Reference scan for :func:`ball_query`."""
    if r < 0:
        raise InvalidRadius("radius must be nonnegative", r=r)
    mask = net.distances_from(x) <= r
    return np.flatnonzero(mask), float(net.weights[mask].sum())


# ----------------------------------------------------------------------
@dataclass
class RegularityEstimate:
    """Empirical extremes of ``mass(B(x, r)) / r**s``.

    Unpacks as ``(c_lower, C_upper)``. Witnesses are ``(center, r, mass)``.
    """

    c_lower: float
    C_upper: float
    lower_witness: tuple
    upper_witness: tuple
    exponent: float
    scale_range: tuple
    n_centers: int = 0
    n_radii: int = 0
    extra: dict = field(default_factory=dict)

    def __iter__(self):
        return iter((self.c_lower, self.C_upper))

    @property
    def ratio(self):
        return self.C_upper / self.c_lower

    @property
    def normalized_constant(self):
        """Upper constant after rescaling the measure so the lower constant is 1."""
        return max(1.0, self.C_upper / self.c_lower)

    def to_dict(self):
        return {
            "exponent": self.exponent,
            "scale_range": list(self.scale_range),
            "c_lower": self.c_lower,
            "C_upper": self.C_upper,
            "lower_witness": list(self.lower_witness),
            "upper_witness": list(self.upper_witness),
            "n_centers": self.n_centers,
            "n_radii": self.n_radii,
        }


def _check_window(net, r_min, r_max, strict_window):
    if not 0 < r_min < r_max:
        raise InvalidParams("need 0 < r_min < r_max", scale_range=(r_min, r_max))
    guard = net.resolution * (RESOLUTION_FACTOR if strict_window else 1.0)
    if r_min < guard * (1 - 1e-12):
        raise ScaleBelowResolution("scale range reaches below the net resolution",
                                   r_min=r_min, guard=guard)


def _centers(net, centers_sample, seed):
    pos = np.flatnonzero(net.weights > 0)
    if centers_sample is None or centers_sample >= pos.size:
        return pos
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(pos, size=int(centers_sample), replace=False))


def radius_grid(r_min, r_max, radii_per_decade):
    decades = math.log10(r_max / r_min)
    num = max(2, int(math.ceil(decades * radii_per_decade)) + 1)
    radii = np.geomspace(r_min, r_max, num)
    radii[0], radii[-1] = r_min, r_max
    return radii


def estimate_regularity(net, s, scale_range, centers_sample=None, radii_per_decade=20,
                        seed=0, strict_window=False, radii=None):
    """Sampled inf/sup of ``mass(B(x, r)) / r**s`` over centers and a log-radius grid.

    Centers are drawn from positive-weight points only (all of them when
    ``centers_sample`` is None). ``strict_window`` enforces ``r_min >= 10 delta``
    instead of ``r_min >= delta``.
    """
    r_min, r_max = (float(v) for v in scale_range)
    _check_window(net, r_min, r_max, strict_window)
    grid = radius_grid(r_min, r_max, radii_per_decade) if radii is None else np.sort(np.asarray(radii, float))
    centers = _centers(net, centers_sample, seed)
    denom = grid ** s
    lo = (math.inf, None, None, None)
    hi = (-math.inf, None, None, None)
    for c in centers:
        d = net.distances_from(int(c))
        order = np.argsort(d, kind="stable")
        ds = d[order]
        cum = np.cumsum(net.weights[order])
        k = np.searchsorted(ds, grid, side="right") - 1
        mass = cum[k]
        ratio = mass / denom
        a, b = int(np.argmin(ratio)), int(np.argmax(ratio))
        if ratio[a] < lo[0]:
            lo = (float(ratio[a]), int(c), float(grid[a]), float(mass[a]))
        if ratio[b] > hi[0]:
            hi = (float(ratio[b]), int(c), float(grid[b]), float(mass[b]))
    return RegularityEstimate(lo[0], hi[0], lo[1:], hi[1:], float(s), (r_min, r_max),
                              n_centers=int(centers.size), n_radii=int(grid.size))


def exact_regularity(net, s, scale_range, centers=None, strict_window=False):
    """Exact inf/sup of ``mass(B(x, r)) / r**s`` over all ``r`` in ``[r_min, r_max]``.

    The closed-ball mass is a right-continuous step function of ``r``, so the
    supremum is attained at ``r_min`` or at a jump, and the infimum is the
    left limit at a jump (reported with the jump radius) or the value at
    ``r_max``. This is the exhaustive oracle for :func:`estimate_regularity`.
    """
    r_min, r_max = (float(v) for v in scale_range)
    _check_window(net, r_min, r_max, strict_window)
    centers = np.flatnonzero(net.weights > 0) if centers is None else np.asarray(centers, dtype=int)
    lo = (math.inf, None, None, None)
    hi = (-math.inf, None, None, None)
    for c in centers:
        d = net.distances_from(int(c))
        order = np.argsort(d, kind="stable")
        ds = d[order]
        cum = np.cumsum(net.weights[order])
        jumps = np.unique(ds[(ds > r_min) & (ds <= r_max)])
        sup_r = np.concatenate(([r_min], jumps))
        sup_m = cum[np.searchsorted(ds, sup_r, side="right") - 1]
        inf_r = np.concatenate((jumps, [r_max]))
        k_left = np.searchsorted(ds, inf_r, side="left") - 1
        inf_m = np.where(k_left >= 0, cum[np.maximum(k_left, 0)], 0.0)
        inf_m[-1] = cum[np.searchsorted(ds, r_max, side="right") - 1]
        sup_ratio = sup_m / sup_r ** s
        inf_ratio = inf_m / inf_r ** s
        a, b = int(np.argmin(inf_ratio)), int(np.argmax(sup_ratio))
        if inf_ratio[a] < lo[0]:
            lo = (float(inf_ratio[a]), int(c), float(inf_r[a]), float(inf_m[a]))
        if sup_ratio[b] > hi[0]:
            hi = (float(sup_ratio[b]), int(c), float(sup_r[b]), float(sup_m[b]))
    return RegularityEstimate(lo[0], hi[0], lo[1:], hi[1:], float(s), (r_min, r_max),
                              n_centers=int(centers.size), n_radii=-1)


def rescale_to_unit(net, s):
    """Divide all distances by the diameter and weights by ``diameter**s``."""
    diam = diameter(net)
    if net.size == 1 or diam == 0:
        raise CannotRescale("cannot rescale a net of zero diameter")
    weights = net.weights / diam ** s
    if net.euclidean:
        out = WeightedNet(net.points / diam, weights, resolution=net.resolution / diam, validate=False)
    else:
        out = WeightedNet(net.size, weights, resolution=net.resolution / diam,
                          oracle=lambda i, j: net.dist(i, j) / diam, validate=False)
    return out


def offnet_upper_ratio(net, s, radius, samples=200, seed=0):
    """Largest ``mass(B(x, r)) / r**s`` for random ``x`` in the bounding box.

    The upper bound ``2**s * C`` extends to arbitrary centers; this probes it
    for Euclidean nets. Oracle nets have no off-net centers.
    """
    if not net.euclidean:
        raise InvalidNet("off-net centers require Euclidean mode")
    rng = np.random.default_rng(seed)
    lo, hi = net.points.min(axis=0), net.points.max(axis=0)
    best = 0.0
    for _ in range(samples):
        x = lo + (hi - lo) * rng.random(net.dim)
        _, mass = ball_query(net, x, radius)
        best = max(best, mass / radius ** s)
    return best


def to_csv(net, path):
    """One point per row, weight in the last column."""
    data = np.column_stack([net.points, net.weights])
    with open(path, "w") as fh:
        for row in data:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
