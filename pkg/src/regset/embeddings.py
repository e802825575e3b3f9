"""Ball hierarchies on nets and the bilipschitz correspondences built from them.

Two constructions share the :class:`BallHierarchy` container:

* ``build_subset_hierarchy`` picks ``2**(N n)`` well separated children inside
  every node ball, mirroring the corner Cantor set ``C(t)`` (mode ``"ball"``);
* ``build_embedding`` partitions ``E`` into cells with empty linear annuli and
  places one separated ``F`` point per cell (modes ``"cell"`` and ``"packing"``).

Words are tuples of 1-based symbols; the root is ``()``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .cantor import NODE_BUDGET, CantorSpec, cantor_point, gap_separation
from .covering import greedy_packing, ring_constant, ring_cover
from .errors import (DegeneratePair, GapNotFound, InsufficientChildren, InsufficientTargets,
                     InvalidParams, OutsideDomain, SpecMismatch, TooDeep)
from .metric import WeightedNet, ball_query, diameter, point_distances

PAIR_BUDGET = 2_000_000
PAIR_SAMPLE = 20_000


@dataclass
class BallHierarchy:
    """Nested balls ``B(center(w), rho(w))`` indexed by words.

    ``index[w]`` is the net index of the center; ``mode`` is ``"ball"``,
    ``"cell"`` or ``"packing"`` and fixes which separation invariant applies.
    """

    net: WeightedNet
    d: float
    depth: int
    mode: str
    D: float = 1.0
    scale: float = 1.0
    index: dict = field(default_factory=dict)
    rho: dict = field(default_factory=dict)
    children: dict = field(default_factory=dict)

    def add(self, word, idx, rho):
        self.index[word] = int(idx)
        self.rho[word] = float(rho)
        self.children.setdefault(word, [])
        if word:
            self.children[word[:-1]].append(word)

    def center(self, word):
        return self.net.points[self.index[word]]

    def level(self, k):
        return sorted(w for w in self.index if len(w) == k)

    def leaves(self):
        return self.level(self.depth)

    def branching(self, word):
        return len(self.children.get(word, []))

    @property
    def size(self):
        return len(self.index)

    def leaf_net(self, t):
        """Leaf centers as a net with Cantor-like weights ``(scale d^K)^t``."""
        leaves = self.leaves()
        side = self.scale * self.d ** self.depth
        pts = self.net.points[[self.index[w] for w in leaves]]
        return WeightedNet(pts, np.full(len(leaves), side ** t), resolution=side, validate=False)

    def to_tree(self, word=()):
        """JSON tree ``{word, center, rho, children}``."""
        return {
            "word": list(word),
            "center": self.center(word).tolist(),
            "index": self.index[word],
            "rho": self.rho[word],
            "children": [self.to_tree(c) for c in self.children.get(word, [])],
        }

    def to_dict(self):
        return {"d": self.d, "depth": self.depth, "mode": self.mode, "D": self.D,
                "scale": self.scale, "tree": self.to_tree()}

    @classmethod
    def from_dict(cls, data, net):
        h = cls(net, data["d"], data["depth"], data["mode"], data.get("D", 1.0), data.get("scale", 1.0))
        stack = [data["tree"]]
        while stack:
            node = stack.pop(0)
            h.add(tuple(node["word"]), node["index"], node["rho"])
            stack.extend(node["children"])
        return h


@dataclass
class CellPartition:
    """``cells[w]`` holds the source-net indices of the cell ``E_w``."""

    cells: dict = field(default_factory=dict)

    def level(self, k):
        return sorted(w for w in self.cells if len(w) == k)

    def labels(self, k, size):
        """Array mapping each net index to the position of its depth-``k`` cell (-1 if none)."""
        out = np.full(size, -1, dtype=int)
        for pos, w in enumerate(self.level(k)):
            out[self.cells[w]] = pos
        return out

    def to_dict(self):
        return {"cells": [{"word": list(w), "indices": self.cells[w].tolist()}
                          for w in sorted(self.cells, key=lambda w: (len(w), w))]}


@dataclass
class Correspondence:
    source: BallHierarchy
    target: object
    L_bound: float
    L_measured: float = 1.0
    partition: CellPartition | None = None
    word_map: dict = field(default_factory=dict)
    L_grouped: float | None = None

    def target_point(self, word):
        if isinstance(self.target, CantorSpec):
            return cantor_point(self.target, word)
        return self.target.center(word)

    def leaf_arrays(self):
        leaves = self.source.leaves()
        src = np.array([self.source.center(w) for w in leaves]) if self.source.net.euclidean else None
        dst = np.array([self.target_point(self.word_map[w]) for w in leaves])
        return leaves, src, dst

    def to_dict(self):
        out = {"L_bound": self.L_bound, "L_measured": self.L_measured,
               "source": self.source.to_dict(),
               "word_map": [[list(a), list(b)] for a, b in sorted(self.word_map.items())]}
        if isinstance(self.target, CantorSpec):
            t = self.target
            out["target"] = {"cantor": {"n": t.n, "t": t.t, "a": t.a, "group": t.group,
                                        "origin": list(t.origin)}}
        else:
            out["target"] = self.target.to_dict()
        if self.partition is not None:
            out["partition"] = self.partition.to_dict()
        if self.L_grouped is not None:
            out["L_grouped"] = self.L_grouped
        return out


# ----------------------------------------------------------------------
def strict_group(s, C_E, t, n, max_N=64):
    """Smallest ``N`` with ``d < 1/3`` and ``d^(s-t) < (15^s C_E)^-1`` where ``d = 2^(-N n / t)``."""
    bound = -math.log(15 ** s * C_E)
    for N in range(1, max_N + 1):
        log_d = -N * n * math.log(2) / t
        if log_d < -math.log(3) and (s - t) * log_d < bound:
            return N
    raise InvalidParams("no group size up to max_N meets the inequalities", s=s, t=t, C_E=C_E)


def _build_ball_hierarchy(net, spec, depth, scale, budget):
    d = spec.d
    b = spec.branching
    total = sum(b ** k for k in range(depth + 1))
    if total > budget:
        raise TooDeep("hierarchy node count exceeds the budget", count=total, budget=budget)
    h = BallHierarchy(net, d, depth, "ball", 1.0, scale)
    h.add((), int(net.lex_order()[0]), scale)
    frontier = [()]
    for k in range(depth):
        nxt = []
        for w in frontier:
            R = scale * d ** k
            pk = greedy_packing(net, h.center(w), 3 * scale * d ** (k + 1), R, limit=b)
            if pk.m < b:
                raise InsufficientChildren("packing produced too few children", node=list(w),
                                           found=pk.m, needed=b, level=k)
            for i, c in enumerate(pk.centers, start=1):
                h.add(w + (i,), c, scale * d ** (k + 1))
                nxt.append(w + (i,))
        frontier = nxt
    return h


def build_subset_hierarchy(net, s, C_E, t, n=1, depth=4, mode="adaptive", group=None,
                           budget=NODE_BUDGET):
    """Cantor-like hierarchy in ``net`` matching ``C(t, diam)`` in R^n.

    Returns ``(hierarchy, spec)``. In adaptive mode the group size ``N`` is the
    smallest one for which every node packing yields ``2**(N n)`` children.
    """
    if not 0 < t < s:
        raise InvalidParams("need 0 < t < s", s=s, t=t)
    scale = diameter(net)
    if not scale > 0:
        raise InvalidParams("net must have positive diameter")
    N_strict = strict_group(s, C_E, t, n)
    if group is not None:
        candidates = [int(group)]
    elif mode == "strict":
        candidates = [N_strict]
    else:
        candidates = list(range(1, N_strict + 1))
    last = None
    for N in candidates:
        spec = CantorSpec(n, t, a=scale, group=N)
        if spec.d >= 1 / 3 and depth > 0:
            continue
        try:
            return _build_ball_hierarchy(net, spec, depth, scale, budget), spec
        except InsufficientChildren as exc:
            last = exc
    if last is None:
        raise InvalidParams("no admissible group size", candidates=candidates)
    raise last


def subset_lipschitz_bound(spec):
    """``max(sqrt(n)/d, 4/(1 - 2d))``."""
    d = spec.d
    return max(math.sqrt(spec.n) / d, 4 / (1 - 2 * d))


def grouped_lipschitz_bound(spec):
    """``max(sqrt(n)/d, 4/sep)`` with the true sibling gap ``sep`` of a grouped spec.

    For ``group = 1`` this equals :func:`subset_lipschitz_bound`; for merged
    steps the corner gap is ``(1 - 2 d0) d0^(N-1)``, smaller than ``1 - 2d``.
    """
    sep = gap_separation(spec, 1) / spec.a
    return max(math.sqrt(spec.n) / spec.d, 4 / sep)


def subset_map(h, spec, seed=0):
    """Identity word map from a ball hierarchy to the Cantor set ``spec``."""
    if not math.isclose(h.d, spec.d, rel_tol=1e-12):
        raise SpecMismatch("hierarchy and Cantor spec have different ratios", d_h=h.d, d_spec=spec.d)
    corr = Correspondence(h, spec, subset_lipschitz_bound(spec), L_grouped=grouped_lipschitz_bound(spec))
    corr.word_map = {w: w for w in h.index}
    _, src, dst = corr.leaf_arrays()
    corr.L_measured = pairwise_distortion(src, dst, seed=seed)
    return corr


# ----------------------------------------------------------------------
def _unit_check(net, name):
    diam = diameter(net)
    if not math.isclose(diam, 1.0, rel_tol=1e-9):
        raise InvalidParams(f"{name} must be rescaled to diameter 1", diameter=diam)


def strict_ratio(s, t, C_E, C_F):
    """Largest admissible ``d`` (times 0.99) from the two ratio inequalities."""
    D = ring_constant(s, C_E)
    a = (2 ** s * 15 ** t * D ** s * C_E * C_F) ** (-1 / (t - s))
    return 0.99 * min(a, 1 / (2 * D))


def ratio_grid(d_max=0.25, d_min=1e-3, factor=2 ** -0.25):
    out = []
    d = d_max
    while d >= d_min:
        out.append(d)
        d *= factor
    return out


def _build_cells(E, F, s, C_E, d, depth, D, budget):
    hE = BallHierarchy(E, d, depth, "cell", D)
    hF = BallHierarchy(F, d, depth, "packing", 1.0)
    part = CellPartition()
    hE.add((), int(E.lex_order()[0]), 1.0)
    hF.add((), int(F.lex_order()[0]), 1.0)
    part.cells[()] = np.arange(E.size)
    frontier = [()]
    for k in range(depth):
        nxt = []
        r = d ** (k + 1)
        for w in frontier:
            cell = part.cells[w]
            cover = ring_cover(E, r, s, C_E, D_cap=D, candidates=cell)
            pk = greedy_packing(F, hF.center(w), 3 * r, d ** k, limit=cover.m)
            if pk.m < cover.m:
                raise InsufficientTargets("F-side packing smaller than the E-side cover",
                                          node=list(w), needed=cover.m, found=pk.m, level=k)
            left = np.zeros(E.size, dtype=bool)
            left[cell] = True
            for i, (x, rho, y) in enumerate(zip(cover.centers, cover.rhos, pk.centers), start=1):
                inside = left & (E.distances_from(int(x)) <= rho)
                child = w + (i,)
                part.cells[child] = np.flatnonzero(inside)
                left &= ~inside
                hE.add(child, x, rho)
                hF.add(child, y, r)
                nxt.append(child)
        frontier = nxt
        if len(hE.index) > budget:
            raise TooDeep("hierarchy node count exceeds the budget", count=len(hE.index), budget=budget)
    return part, hE, hF


def build_embedding(E, F, s, t, C_E, C_F, depth=3, mode="adaptive", d=None, grid=None,
                    budget=NODE_BUDGET, seed=0):
    """Cell partition of ``E``, matching packing hierarchy on ``F`` and the correspondence.

    Both nets must have diameter 1. Adaptive mode scans ``grid`` (descending)
    and keeps the first ratio for which every level succeeds.
    """
    if not 0 < s < 1 or not s < t:
        raise InvalidParams("need 0 < s < 1 and s < t", s=s, t=t)
    _unit_check(E, "E")
    _unit_check(F, "F")
    D = ring_constant(s, C_E)
    if d is not None:
        ratios = [float(d)]
    elif mode == "strict":
        ratios = [strict_ratio(s, t, C_E, C_F)]
    else:
        ratios = list(grid or ratio_grid())
    last = None
    for v in ratios:
        if not 3 * v < 1:
            continue
        try:
            part, hE, hF = _build_cells(E, F, s, C_E, v, depth, D, budget)
        except (InsufficientTargets, GapNotFound) as exc:
            last = exc
            continue
        corr = Correspondence(hE, hF, 4 * D / v, partition=part)
        corr.word_map = {w: w for w in hE.index}
        _, src, dst = corr.leaf_arrays()
        corr.L_measured = pairwise_distortion(src, dst, seed=seed)
        return part, hF, corr
    if last is None:
        raise InvalidParams("no admissible ratio", ratios=ratios)
    raise last


# ----------------------------------------------------------------------
def _locate_ball(corr, x, depth):
    h = corr.source
    word = ()
    if point_distances(h.center(()), x) > h.rho[()] * (1 + 1e-12):
        raise OutsideDomain("point is outside the root ball")
    for k in range(depth):
        for c in h.children.get(word, []):
            if point_distances(h.center(c), x) <= 3 * h.rho[c] * (1 + 1e-12):
                word = c
                break
        else:
            raise OutsideDomain("point is outside every ball at this level", level=k + 1)
    return word


def _locate_cell(corr, x, depth):
    h = corr.source
    if isinstance(x, (int, np.integer)):
        idx = int(x)
    else:
        dist = h.net.distances_from(np.asarray(x, dtype=float))
        idx = int(np.argmin(dist))
        if dist[idx] > 0:
            raise OutsideDomain("point is not a source net point")
    word = ()
    for _ in range(depth):
        for c in h.children.get(word, []):
            if idx in corr.partition.cells[c]:
                word = c
                break
        else:
            raise OutsideDomain("point is in no cell", index=idx)
    return word


def evaluate_correspondence(corr, x, depth=None):
    """Target center of the deepest source ball (or cell) containing ``x``."""
    depth = corr.source.depth if depth is None else depth
    if corr.partition is not None:
        word = _locate_cell(corr, x, depth)
    else:
        if isinstance(x, (int, np.integer)):
            x = corr.source.net.points[int(x)]
        word = _locate_ball(corr, np.asarray(x, dtype=float), depth)
    return corr.target_point(corr.word_map[word])


def distortion(f, pairs):
    """``max(d(fx,fy)/d(x,y), d(x,y)/d(fx,fy))`` over ``pairs``."""
    if len(pairs) == 0:
        raise InvalidParams("pairs must be nonempty")
    L = 1.0
    for x, y in pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        dxy = float(point_distances(x, y))
        if dxy == 0:
            raise DegeneratePair("pair endpoints coincide", x=x, y=y)
        dfy = float(point_distances(np.asarray(f(x), dtype=float), np.asarray(f(y), dtype=float)))
        if dfy == 0:
            return math.inf
        L = max(L, dfy / dxy, dxy / dfy)
    return L


def pairwise_distortion(src, dst, pair_budget=PAIR_BUDGET, sample=PAIR_SAMPLE, seed=0):
    """Exhaustive (or sampled past ``pair_budget``) distortion between matched point arrays."""
    src = np.asarray(src, dtype=float)
    dst = np.asarray(dst, dtype=float)
    m = src.shape[0]
    if m < 2:
        return 1.0
    if m * (m - 1) // 2 <= pair_budget:
        L = 1.0
        for i in range(m - 1):
            a = point_distances(src[i + 1:], src[i])
            b = point_distances(dst[i + 1:], dst[i])
            if np.any(a == 0):
                raise DegeneratePair("source points coincide", index=i)
            if np.any(b == 0):
                return math.inf
            L = max(L, float(np.max(b / a)), float(np.max(a / b)))
        return L
    rng = np.random.default_rng(seed)
    i = rng.integers(0, m, sample)
    j = rng.integers(0, m - 1, sample)
    j = j + (j >= i)
    a = point_distances(src[i], src[j])
    b = point_distances(dst[i], dst[j])
    if np.any(b == 0):
        return math.inf
    return float(max(1.0, np.max(b / a), np.max(a / b)))


def divergence_level(w, v):
    l = 0
    while l < min(len(w), len(v)) and w[l] == v[l]:
        l += 1
    return l


def bracketing_violations(h):
    """Leaf pairs breaking ``d^(l+1) <= dist / scale <= 4 d^l`` (``l`` = common prefix length)."""
    leaves = h.leaves()
    pts = np.array([h.center(w) for w in leaves])
    bad = []
    for a in range(len(leaves)):
        ds = point_distances(pts[a + 1:], pts[a]) / h.scale
        for b, dist in enumerate(ds, start=a + 1):
            l = divergence_level(leaves[a], leaves[b])
            if not h.d ** (l + 1) <= dist <= 4 * h.d ** l:
                bad.append((leaves[a], leaves[b], float(dist)))
    return bad


def _cell_distance(E, a, b):
    if E.euclidean:
        return float(cdist(E.points[a], E.points[b]).min())
    return float(min(np.min(E.distances_from(int(i))[b]) for i in a))


def verify_partition(E, part, h):
    """Exact partition, nesting, containment and sibling-separation checks."""
    out = {"partition": True, "nested": True, "contained": True, "separated": True}
    for k in range(h.depth + 1):
        words = part.level(k)
        allidx = np.concatenate([part.cells[w] for w in words]) if words else np.array([], int)
        if allidx.size != E.size or np.unique(allidx).size != E.size:
            out["partition"] = False
        for w in words:
            cell = part.cells[w]
            if w and not np.all(np.isin(cell, part.cells[w[:-1]])):
                out["nested"] = False
            if np.any(E.distances_from(h.index[w])[cell] > h.rho[w]):
                out["contained"] = False
        for w in (words if k else []):
            for v in h.children[w[:-1]]:
                if v <= w:
                    continue
                sep = _cell_distance(E, part.cells[w], part.cells[v])
                if sep < h.d ** k:
                    out["separated"] = False
    return out


def subset_in_ball(net, x, r, s, C_E, t, n=1, depth=3, mode="adaptive", budget=NODE_BUDGET):
    """t-regular leaf net (plus hierarchy and spec) inside ``E ∩ B(x, r)``."""
    idx, _ = ball_query(net, x, r)
    if idx.size < 2:
        raise InvalidParams("ball holds fewer than two net points", r=r)
    sub = net.subset(idx)
    h, spec = build_subset_hierarchy(sub, s, C_E, t, n, depth, mode, budget=budget)
    return h.leaf_net(t), h, spec
