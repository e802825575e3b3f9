"""Piecewise bilipschitz maps of R^n that translate small balls.

:func:`build_slab_map` realizes a :class:`BallTranslationTask` as the composite
``h^-1 o G o g`` in normalized coordinates (``p = q = 0``, ``R = 1``):

* ``g`` shrinks each ``B(x_i, r_i)`` to radius ``eps`` (identity off
  ``B(x_i, 2 r_i)``) and then applies the global radial map ``psi`` with
  ``psi(B(0, 2)) = B(0, 3 sqrt(n))``; ``h`` does the same around the ``y_i``;
* ``G`` is one slab map (or two, see below) in coordinates where the chosen
  direction ``theta`` is the last axis.

A slab map can only carry the balls to targets in the same ``theta`` order.
When the orders of the sources and targets differ along every direction tried,
an intermediate configuration ``z`` is placed in the plane of two directions
and two slab maps are composed.

:func:`build_ambient_embedding` stacks such maps level by level so that the
composite sends every point of ``E`` close to ``F``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .covering import greedy_packing, lambda_gap_cover, lemma3_constants
from .errors import (DirectionNotFound, GapNotFound, InsufficientTargets, InvalidParams,
                     OutsideCell, PrecisionLoss, SlabOverlap)
from .metric import diameter, point_distances

DIRECTION_BUDGET = 10 ** 6
MIN_EPS = 1e-12
LAMBDA = 18.0


@dataclass
class BallTranslationTask:
    p: np.ndarray
    q: np.ndarray
    R: float
    xs: np.ndarray
    ys: np.ndarray
    rs: np.ndarray
    delta: float | None = None

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        self.R = float(self.R)
        n = self.p.size
        self.xs = np.asarray(self.xs, dtype=float).reshape(-1, n)
        self.ys = np.asarray(self.ys, dtype=float).reshape(-1, n)
        self.rs = np.asarray(self.rs, dtype=float).reshape(-1)
        if self.delta is None and self.rs.size:
            self.delta = float(self.rs.min() / self.R)

    @property
    def n(self):
        return self.p.size

    @property
    def m(self):
        return self.rs.size

    def validate(self, strict=False, tol=1e-12):
        """Raise :class:`InvalidParams` naming the first violated hypothesis."""
        R, tolR = self.R, tol * self.R
        if not R > 0:
            raise InvalidParams("R must be positive", R=R)
        if not (self.xs.shape == self.ys.shape and self.xs.shape[0] == self.m):
            raise InvalidParams("xs, ys and rs must have matching lengths")
        if self.m == 0:
            return
        if strict and not self.delta < 0.5:
            raise InvalidParams("strict mode needs delta < 1/2", delta=self.delta)
        if np.any(self.rs < self.delta * R - tolR) or np.any(self.rs > R / 3 + tolR):
            raise InvalidParams("radii must lie in [delta R, R/3]", rs=self.rs, R=R, delta=self.delta)
        if np.any(point_distances(self.xs, self.p) > R + tolR):
            raise InvalidParams("source centers must lie in B(p, R)")
        if np.any(point_distances(self.ys, self.q) > R + tolR):
            raise InvalidParams("target centers must lie in B(q, R)")
        for pts, name in ((self.xs, "source"), (self.ys, "target")):
            for i in range(self.m - 1):
                sep = point_distances(pts[i + 1:], pts[i])
                if np.any(sep <= 3 * (self.rs[i] + self.rs[i + 1:])):
                    raise InvalidParams(f"{name} balls B(c, 3r) must be disjoint", index=i)

    def to_dict(self):
        return {"schema": "regset.task/1", "p": self.p.tolist(), "q": self.q.tolist(), "R": self.R,
                "delta": self.delta,
                "balls": [{"x": x.tolist(), "y": y.tolist(), "r": float(r)}
                          for x, y, r in zip(self.xs, self.ys, self.rs)]}

    @classmethod
    def from_dict(cls, data):
        balls = data.get("balls", [])
        n = len(data["p"])
        return cls(data["p"], data["q"], data["R"],
                   np.array([b["x"] for b in balls], dtype=float).reshape(-1, n),
                   np.array([b["y"] for b in balls], dtype=float).reshape(-1, n),
                   np.array([b["r"] for b in balls], dtype=float), data.get("delta"))


# ----------------------------------------------------------------------
def _pair_diffs(pts):
    pts = np.asarray(pts, dtype=float)
    i, j = np.triu_indices(pts.shape[0], 1)
    return pts[i] - pts[j]


def _min_separation(diffs, thetas):
    if diffs.shape[0] == 0:
        return np.full(thetas.shape[0], np.inf)
    return np.abs(diffs @ thetas.T).min(axis=0)


def _draws(rng, count, n):
    v = rng.standard_normal((count, n))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def _same_order(xs, ys, theta):
    return bool(np.array_equal(np.argsort(xs @ theta, kind="stable"),
                               np.argsort(ys @ theta, kind="stable")))


def choose_direction(xs, ys, eps, seed=0, budget=DIRECTION_BUDGET, accept=None, batch=1024):
    """First seeded uniform unit vector separating both lists by more than ``5 eps``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    if xs.shape != ys.shape:
        raise InvalidParams("point lists must have equal length")
    if not eps > 0:
        raise InvalidParams("eps must be positive", eps=eps)
    n = xs.shape[1]
    diffs = np.concatenate([_pair_diffs(xs), _pair_diffs(ys)])
    rng = np.random.default_rng(seed)
    drawn = 0
    while drawn < budget:
        th = _draws(rng, min(batch, budget - drawn), n)
        drawn += th.shape[0]
        ok = _min_separation(diffs, th) > 5 * eps
        for k in np.flatnonzero(ok):
            if accept is None or accept(th[k]):
                return th[k]
    raise DirectionNotFound("no separating direction within the draw budget", eps=eps, budget=budget)


def best_direction(xs, ys, seed=0, draws=512, accept=None):
    """Seeded direction maximizing the smallest projected separation; ``(theta, sep)``."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    ys = np.atleast_2d(np.asarray(ys, dtype=float))
    diffs = np.concatenate([_pair_diffs(xs), _pair_diffs(ys)])
    th = _draws(np.random.default_rng(seed), draws, xs.shape[1])
    sep = _min_separation(diffs, th)
    if accept is not None:
        sep = np.where([accept(v) for v in th], sep, -1.0)
    k = int(np.argmax(sep))
    return th[k], float(sep[k])


# ----------------------------------------------------------------------
def eval_radial(a, b, eps, x):
    """``g(a, b)`` on ``Q = [-2, 2]^(n-1)``: translate ``B(a, eps)``, stretch the rays to ``dQ``."""
    x = np.asarray(x, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(np.abs(x) > 2 + 1e-12):
        raise OutsideCell("point is outside the cube [-2, 2]^(n-1)", x=x)
    if np.array_equal(a, b):
        return x.copy()
    v = x - a
    rho = float(np.sqrt(v @ v))
    if rho <= eps:
        return x - a + b
    u = v / rho
    with np.errstate(divide="ignore", invalid="ignore"):
        exits = np.where(u != 0, (np.sign(u) * 2 - a) / u, np.inf)
    tau = float(exits.min())
    lam = (rho - eps) / (tau - eps)
    inner = a + eps * u - a + b
    outer = a + tau * u
    return (1 - lam) * inner + lam * outer


def _householder(theta):
    n = theta.size
    e = np.zeros(n)
    e[-1] = 1.0
    v = theta - e
    nv = v @ v
    if nv < 1e-30:
        return np.eye(n)
    return np.eye(n) - 2.0 * np.outer(v, v) / nv


@dataclass
class SlabStage:
    """One slab map ``G = H o G0 o H`` carrying ``B(a_i, eps)`` to ``B(b_i, eps)``."""

    theta: np.ndarray
    eps: float
    H: np.ndarray
    t: np.ndarray
    u: np.ndarray
    A: np.ndarray
    Bt: np.ndarray

    @classmethod
    def build(cls, src, dst, theta, eps):
        H = _householder(theta)
        a = src @ H.T
        b = dst @ H.T
        order = np.argsort(a[:, -1], kind="stable")
        if not np.array_equal(order, np.argsort(b[:, -1], kind="stable")):
            raise SlabOverlap("source and target orders differ along theta")
        a, b = a[order], b[order]
        t = np.concatenate([[-2.0], a[:, -1], [2.0]])
        u = np.concatenate([[-2.0], b[:, -1], [2.0]])
        if np.any(np.diff(t) <= 5 * eps) or np.any(np.diff(u) <= 5 * eps):
            raise SlabOverlap("slab breakpoints are closer than 5 eps", eps=eps)
        return cls(np.asarray(theta, dtype=float), float(eps), H, t, u, a[:, :-1], b[:, :-1])

    @property
    def m(self):
        return self.t.size - 2

    # branch formulas on rotated coordinates; each is valid on its closed region
    def slab(self, i, z):
        return np.append(eval_radial(self.A[i - 1], self.Bt[i - 1], self.eps, z[:-1]),
                         z[-1] - self.t[i] + self.u[i])

    def collar(self, i, z):
        lam = (2 * self.eps - abs(z[-1] - self.t[i])) / self.eps
        return np.append(eval_radial(lam * self.A[i - 1], lam * self.Bt[i - 1], self.eps, z[:-1]),
                         z[-1] - self.t[i] + self.u[i])

    def between(self, i, z):
        return np.append(z[:-1], self.phi_between(i, z[-1]))

    def phi_between(self, i, zn):
        e = self.eps
        lo, hi = self.t[i - 1] + 2 * e, self.t[i] - 2 * e
        w = (zn - lo) / (hi - lo)
        return w * (self.u[i] - 2 * e) + (1 - w) * (self.u[i - 1] + 2 * e)

    def band(self, z):
        return z.copy()

    def outer(self, z):
        s = float(np.max(np.abs(z[:-1])))
        return np.append(z[:-1], (3 - s) * self.phi(z[-1]) + (s - 2) * z[-1])

    def region(self, zn):
        """``(name, i)`` of the closed region holding last coordinate ``zn`` inside ``Q0``."""
        e = self.eps
        if zn <= -2 + 2 * e or zn >= 2 - 2 * e:
            return "band", 0
        k = int(np.searchsorted(self.t, zn))
        for i in (k - 1, k):
            if 1 <= i <= self.m:
                gap = abs(zn - self.t[i])
                if gap <= e:
                    return "slab", i
                if gap <= 2 * e:
                    return "collar", i
        return "between", int(np.clip(k, 1, self.m + 1))

    def phi(self, zn):
        name, i = self.region(zn)
        if name == "band":
            return zn
        if name == "between":
            return self.phi_between(i, zn)
        return zn - self.t[i] + self.u[i]

    def g0(self, z):
        if abs(z[-1]) > 2:
            return z.copy()
        s = float(np.max(np.abs(z[:-1]))) if z.size > 1 else 0.0
        if s > 3:
            return z.copy()
        if s >= 2:
            return self.outer(z)
        name, i = self.region(z[-1])
        if name == "band":
            return self.band(z)
        return getattr(self, name)(i, z)

    def __call__(self, x):
        return self.H @ self.g0(self.H @ x)

    def to_dict(self):
        return {"theta": self.theta.tolist(), "t": self.t.tolist(), "u": self.u.tolist()}


# ----------------------------------------------------------------------
def _shrink(x, c, r, eps):
    v = x - c
    rho = float(np.sqrt(v @ v))
    if rho >= 2 * r:
        return x
    if rho <= r:
        return c + v * (eps / r)
    return c + v * ((eps + (rho - r) * (2 * r - eps) / r) / rho)


def _unshrink(z, c, r, eps):
    v = z - c
    rho = float(np.sqrt(v @ v))
    if rho >= 2 * r:
        return z
    if rho <= eps:
        return c + v * (r / eps)
    return c + v * ((r + (rho - eps) * r / (2 * r - eps)) / rho)


def _psi(x, n, inverse=False):
    big = 3 * math.sqrt(n)
    rho = float(np.sqrt(x @ x))
    lo = 5 / 3
    if rho <= lo:
        return x
    if not inverse:
        new = lo + (rho - lo) * (big - lo) / (2 - lo) if rho <= 2 else rho + big - 2
    else:
        new = lo + (rho - lo) * (2 - lo) / (big - lo) if rho <= big else rho - big + 2
    return x * (new / rho)


@dataclass
class PiecewiseAmbientMap:
    """Evaluable ball-translation map of R^n; ``stages`` act in normalized coordinates."""

    task: BallTranslationTask
    eps: float
    stages: list = field(default_factory=list)
    knots: tuple | None = None
    mode: str = "adaptive"

    def _norm(self):
        t = self.task
        return (t.xs - t.p) / t.R, (t.ys - t.q) / t.R, t.rs / t.R

    def g(self, x):
        xs, _, rs = self._norm()
        for c, r in zip(xs, rs):
            if point_distances(x, c) < 2 * r:
                x = _shrink(x, c, r, self.eps)
                break
        return _psi(x, self.task.n)

    def h(self, y):
        _, ys, rs = self._norm()
        for c, r in zip(ys, rs):
            if point_distances(y, c) < 2 * r:
                y = _shrink(y, c, r, self.eps)
                break
        return _psi(y, self.task.n)

    def h_inv(self, w):
        _, ys, rs = self._norm()
        w = _psi(w, self.task.n, inverse=True)
        for c, r in zip(ys, rs):
            if point_distances(w, c) < 2 * r:
                return _unshrink(w, c, r, self.eps)
        return w

    def normalized(self, x):
        """The composite in normalized coordinates, with no closed-form shortcuts."""
        if self.knots is not None:
            kx, ky = self.knots
            return np.array([np.interp(x[0], kx, ky)]) if abs(x[0]) <= 2 else x.copy()
        w = self.g(x)
        for st in self.stages:
            w = st(w)
        return self.h_inv(w)

    def composite(self, x):
        t = self.task
        x = np.asarray(x, dtype=float)
        return t.q + t.R * self.normalized((x - t.p) / t.R)

    def __call__(self, x):
        t = self.task
        x = np.asarray(x, dtype=float)
        if point_distances(x, t.p) >= 2 * t.R:
            return x.copy() if np.array_equal(t.p, t.q) else x - t.p + t.q
        for c, y, r in zip(t.xs, t.ys, t.rs):
            if point_distances(x, c) <= r:
                return x - c + y
        return self.composite(x)

    def apply(self, pts):
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        return np.array([self(x) for x in pts])

    def to_dict(self):
        out = {"task": self.task.to_dict(), "eps": self.eps, "mode": self.mode,
               "stages": [s.to_dict() for s in self.stages]}
        if self.knots is not None:
            out["knots"] = [self.knots[0].tolist(), self.knots[1].tolist()]
        return out


def _intermediate(xs, ys, th1, th2):
    """Points in span{th1, th2} whose th1-order matches xs and th2-order matches ys."""
    m = xs.shape[0]
    alpha = np.argsort(np.argsort(xs @ th1, kind="stable"), kind="stable") - (m - 1) / 2
    beta = np.argsort(np.argsort(ys @ th2, kind="stable"), kind="stable") - (m - 1) / 2
    c12 = float(th1 @ th2)
    det = 1 - c12 * c12
    a = (alpha - c12 * beta) / det
    b = (beta - c12 * alpha) / det
    z = a[:, None] * th1[None, :] + b[:, None] * th2[None, :]
    scale = 0.9 / max(float(np.linalg.norm(z, axis=1).max()), 1e-300)
    # projected spacing along either direction is exactly ``scale``
    return z * scale, scale


def _one_dim(task, mode):
    xs, ys, rs = ((task.xs - task.p) / task.R)[:, 0], ((task.ys - task.q) / task.R)[:, 0], task.rs / task.R
    order = np.argsort(xs, kind="stable")
    if not np.array_equal(order, np.argsort(ys, kind="stable")):
        raise InvalidParams("in one dimension source and target orders must agree")
    kx = [-2.0] + [v for i in order for v in (xs[i] - rs[i], xs[i] + rs[i])] + [2.0]
    ky = [-2.0] + [v for i in order for v in (ys[i] - rs[i], ys[i] + rs[i])] + [2.0]
    if np.any(np.diff(kx) <= 0) or np.any(np.diff(ky) <= 0):
        raise SlabOverlap("knots are not increasing")
    return PiecewiseAmbientMap(task, 0.0, [], (np.array(kx), np.array(ky)), mode)


def build_slab_map(task, seed=0, mode="adaptive", eps=None, draws=512):
    """Ball-translation map for ``task`` (see module docstring)."""
    task.validate(strict=(mode == "strict"))
    n = task.n
    if n == 1:
        return _one_dim(task, mode)
    if task.m == 0:
        return PiecewiseAmbientMap(task, 1.0, [], None, mode)
    xs, ys = (task.xs - task.p) / task.R, (task.ys - task.q) / task.R
    same = lambda th: _same_order(xs, ys, th)  # noqa: E731
    if mode == "strict":
        eps = task.delta ** (2 * n + 3) if eps is None else eps
        if eps < MIN_EPS:
            raise PrecisionLoss("eps underflows the working precision", eps=eps, delta=task.delta)
        th = choose_direction(xs, ys, eps, seed)
        if same(th):
            return PiecewiseAmbientMap(task, eps, [SlabStage.build(xs, ys, th, eps)], None, mode)
        th1 = choose_direction(xs, xs, eps, seed)
        th2 = choose_direction(ys, ys, eps, seed + 1, accept=lambda v: abs(v @ th1) <= 0.5)
    else:
        th, sep = best_direction(xs, ys, seed, draws, accept=same)
        if sep > 0:
            e = min(task.delta / 4, sep / 10) if eps is None else eps
            return PiecewiseAmbientMap(task, e, [SlabStage.build(xs, ys, th, e)], None, mode)
        th1, sep1 = best_direction(xs, xs, seed, draws)
        th2, sep2 = best_direction(ys, ys, seed + 1, draws, accept=lambda v: abs(v @ th1) <= 0.5)
        if sep2 < 0:
            raise DirectionNotFound("no second direction away from the first")
    zs, spacing = _intermediate(xs, ys, th1, th2)
    if mode != "strict" and eps is None:
        eps = min(task.delta / 4, sep1 / 10, sep2 / 10, spacing / 10)
    stages = [SlabStage.build(xs, zs, th1, eps), SlabStage.build(zs, ys, th2, eps)]
    return PiecewiseAmbientMap(task, eps, stages, None, mode)


def eval_piecewise(fmap, x):
    return fmap(x)


def map_distortion(fmap, pts):
    """Exhaustive pair distortion of ``fmap`` on the probe cloud ``pts``."""
    from .embeddings import pairwise_distortion

    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    return pairwise_distortion(pts, fmap_apply(fmap, pts))


def fmap_apply(fmap, pts):
    return np.array([fmap(x) for x in np.atleast_2d(pts)])


# ----------------------------------------------------------------------
@dataclass
class AmbientStage:
    """All ball maps of one level; each acts inside ``B(p, 2R)`` and fixes the rest."""

    level: int
    words: list
    maps: list

    def __call__(self, z):
        for fm in self.maps:
            if point_distances(z, fm.task.p) < 2 * fm.task.R:
                return fm(z)
        return z


@dataclass
class AmbientEmbedding:
    d: float
    D: float
    depth: int
    x: dict
    y: dict
    rho: dict
    stages: list
    E_index: dict = field(default_factory=dict)
    F_index: dict = field(default_factory=dict)

    def __call__(self, pt, k=None):
        z = np.asarray(pt, dtype=float)
        for st in self.stages[: self.depth if k is None else k]:
            z = st(z)
        return z

    def apply(self, pts, k=None):
        return np.array([self(p, k) for p in np.atleast_2d(pts)])

    def words(self, k):
        return sorted(w for w in self.x if len(w) == k)

    def in_union(self, pt, k):
        """Whether ``pt`` lies in the open level-``k`` ball union ``B_k``."""
        return any(point_distances(pt, self.x[w]) < 2 * self.rho[w] for w in self.words(k))

    def to_dict(self):
        nodes = [{"word": list(w), "x": self.x[w].tolist(), "y": self.y[w].tolist(),
                  "rho": self.rho[w]} for w in sorted(self.x, key=lambda w: (len(w), w))]
        return {"schema": "regset.ambient/1", "d": self.d, "D": self.D, "depth": self.depth,
                "nodes": nodes,
                "stages": [[{"word": list(w), "map": fm.to_dict()} for w, fm in zip(st.words, st.maps)]
                           for st in self.stages]}


def normalize_for_ambient(net, s):
    """Scale to diameter 1/2 about the bounding-box center (inside ``B(0, 1)``)."""
    diam = diameter(net)
    if not diam > 0:
        raise InvalidParams("net must have positive diameter")
    lam = 0.5 / diam
    c = 0.5 * (net.points.min(axis=0) + net.points.max(axis=0))
    from .metric import WeightedNet

    return WeightedNet((net.points - c) * lam, net.weights * lam ** s, resolution=net.resolution * lam,
                       validate=False)


def ambient_ratio_grid(D, factor=0.98, d_min=1e-3):
    out = []
    d = 0.999 / (12 * D)
    while d >= d_min:
        out.append(d)
        d *= factor
    return out


def _build_ambient(E, F, s, C, d, D, depth, seed, mode):
    n = E.dim
    x = {(): np.zeros(n)}
    y = {(): np.zeros(n)}
    rho = {(): 1.0}
    cells = {(): np.arange(E.size)}
    E_index, F_index = {}, {}
    stages = []
    frontier = [()]
    for k in range(depth):
        r = d ** (k + 1)
        words, maps, nxt = [], [], []
        for w in frontier:
            cover = lambda_gap_cover(E, r, s, C, LAMBDA, D_cap=D, candidates=cells[w])
            pk = greedy_packing(F, y[w], 6 * D * r, d ** k, limit=cover.m)
            if pk.m < cover.m:
                raise InsufficientTargets("F-side packing smaller than the E-side cover",
                                          node=list(w), needed=cover.m, found=pk.m, level=k)
            for i, (xi, ri, yi) in enumerate(zip(cover.centers, cover.rhos, pk.centers), start=1):
                c = w + (i,)
                x[c] = E.points[xi].copy()
                y[c] = F.points[yi].copy()
                rho[c] = float(ri)
                E_index[c], F_index[c] = int(xi), int(yi)
                inside = E.distances_from(int(xi))[cells[w]] <= ri
                cells[c] = cells[w][inside]
                nxt.append(c)
            kids = [w + (i,) for i in range(1, cover.m + 1)]
            task = BallTranslationTask(y[w], y[w], rho[w],
                                       np.array([x[c] - x[w] + y[w] for c in kids]),
                                       np.array([y[c] for c in kids]),
                                       np.array([2 * rho[c] for c in kids]))
            maps.append(build_slab_map(task, seed=seed, mode=mode))
            words.append(w)
        stages.append(AmbientStage(k + 1, words, maps))
        frontier = nxt
    return AmbientEmbedding(d, D, depth, x, y, rho, stages, E_index, F_index)


def build_ambient_embedding(E, F, s, t, C, n=None, depth=3, seed=0, mode="adaptive", d=None, D=None,
                            D_candidates=(1.0, LAMBDA), grid=None):
    """Level-by-level composition of ball-translation maps with ``f(E)`` near ``F``.

    Both nets must lie in ``B(0, 1)`` with diameter 1/2.
    """
    n = E.dim if n is None else n
    if E.dim != n or F.dim != n:
        raise InvalidParams("E and F must live in R^n", n=n)
    if not s < t < n:
        raise InvalidParams("need s < t < n", s=s, t=t, n=n)
    for net, name in ((E, "E"), (F, "F")):
        if not math.isclose(diameter(net), 0.5, rel_tol=1e-9) or np.max(np.linalg.norm(net.points, axis=1)) > 1:
            raise InvalidParams(f"{name} must lie in B(0, 1) with diameter 1/2")
    if mode == "strict":
        consts = lemma3_constants(C, LAMBDA)
        if not s < consts.s0:
            raise InvalidParams("strict mode needs s < s0(C, 18)", s=s, s0=consts.s0)
        D = consts.D
        bound = (2 ** s * 60 ** t * C * C * D ** t) ** (-1 / (t - s))
        d = 0.99 * min(0.5, 1 / (12 * D), bound) if d is None else d
        return _build_ambient(E, F, s, C, d, D, depth, seed, mode)
    plan = []
    for Dv in ([D] if D is not None else D_candidates):
        for dv in ([d] if d is not None else (grid or ambient_ratio_grid(Dv))):
            plan.append((dv, Dv))
    last = None
    for dv, Dv in plan:
        try:
            return _build_ambient(E, F, s, C, dv, Dv, depth, seed, mode)
        except (InsufficientTargets, GapNotFound, InvalidParams, DirectionNotFound, SlabOverlap) as exc:
            last = exc
    if last is None:
        raise InvalidParams("empty ratio plan")
    raise last
