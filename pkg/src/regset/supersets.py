"""Regular supersets planted in vacant balls, and a positive-measure set without regular subsets.

``build_superset`` adds, around every level-``k`` center of ``E``, one small
t-regular Cantor-like piece of ``X`` inside a ball far from ``E``.

``build_counterexample`` nests mid-interval families on ``[0, 1]`` with ratios
``lam_k -> 0``; lengths are exact rationals. ``nonregularity_witness`` turns
the mid-interval geometry into a cascade certificate, and
``net_witness`` runs the same argument on an explicit 1-d net.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from decimal import Decimal, localcontext
from fractions import Fraction

import numpy as np

from .cantor import NODE_BUDGET
from .covering import greedy_packing
from .embeddings import build_subset_hierarchy, strict_group
from .errors import (InsufficientChildren, InvalidParams, InvalidSchedule, NoVacantBall, TooDeep)
from .metric import WeightedNet, ball_query, diameter, point_distances

EXACT_LEVELS = 12
INTERVAL_BUDGET = 200_000


# ----------------------------------------------------------------------
@dataclass
class VacantBall:
    level: int
    parent: int
    center: int
    radius: float
    J: list
    J_prime: list
    I: list
    leaves: np.ndarray
    leaf_mass: float


@dataclass
class SupersetBuild:
    d: float
    depth: int
    t: float
    e_index: np.ndarray
    centers: list
    m: list
    balls: list
    net: WeightedNet
    audits: dict = field(default_factory=dict)

    def to_dict(self, X):
        return {
            "schema": "regset.superset/1",
            "d": self.d, "depth": self.depth, "t": self.t,
            "levels": [{"k": k, "centers": [X.points[c].tolist() for c in self.centers[k]],
                        "m": self.m[k]} for k in range(1, len(self.centers))],
            "balls": [{"k": b.level, "parent": b.parent, "y": X.points[b.center].tolist(),
                       "radius": b.radius, "n_leaves": int(b.leaves.size)} for b in self.balls],
            "audits": self.audits,
            "net": self.net.to_dict(),
        }


def _locate(E, X):
    """Indices of the points of ``E`` inside ``X`` (exact coordinate match)."""
    dist, idx = X.tree.query(E.points)
    if np.any(dist > 0):
        raise InvalidParams("E must be a subset of X", missing=int(np.sum(dist > 0)))
    return idx.astype(int)


def _level_packing(X, e_idx, k, d, region):
    """E-centers (as X indices) then X-centers away from them, both at radius 6 d^k."""
    sub = X.subset(e_idx)
    pe = greedy_packing(sub, None, 6 * d ** k, math.inf, restrict_to_ball=False)
    e_centers = e_idx[pe.centers]
    near = np.zeros(X.size, dtype=bool)
    for c in e_centers:
        near[ball_query(X, int(c), 30 * d ** k)[0]] = True
    cand = np.flatnonzero(region & ~near)
    x_centers = np.array([], dtype=int)
    if cand.size:
        px = greedy_packing(X, None, 6 * d ** k, math.inf, candidates=cand, preselected=e_centers)
        x_centers = px.centers
    return np.concatenate([e_centers, x_centers]), int(e_centers.size)


def _region(X, centers, radius):
    mask = np.zeros(X.size, dtype=bool)
    for c in centers:
        mask[ball_query(X, int(c), radius)[0]] = True
    return mask


def _plant(X, y, radius, u, C_X, t, target_scale, budget):
    idx, _ = ball_query(X, int(y), radius)
    if idx.size < 2:
        return np.array([int(y)]), radius ** t, 0.0
    sub = X.subset(idx)
    sigma = diameter(sub)
    last = None
    n_max = strict_group(u, C_X, t, X.dim)
    for N in range(1, n_max + 1):
        d_h = 2.0 ** (-N * X.dim / t)
        if d_h >= 1 / 3:
            continue
        kp = 0
        while sigma * d_h ** kp > target_scale:
            kp += 1
        try:
            h, spec = build_subset_hierarchy(sub, u, C_X, t, X.dim, kp, group=N, budget=budget)
        except InsufficientChildren as exc:
            last = exc
            continue
        leaves = idx[[h.index[w] for w in h.leaves()]]
        return leaves, (sigma * spec.d ** kp) ** t, sigma
    raise last


def build_superset(E, X, s, t, u, C_E, C_X, depth=3, mode="adaptive", d=None, grid=None,
                   budget=NODE_BUDGET):
    """t-regular net ``F`` with ``E ⊂ F ⊂ X`` (see module docstring).

    ``E`` must have diameter 1 and be a point subset of ``X``. Adaptive mode
    tries ``grid`` (descending) and keeps the first ratio where every node has a
    vacant ball.
    """
    if not 0 < s < t < u:
        raise InvalidParams("need 0 < s < t < u", s=s, t=t, u=u)
    if not math.isclose(diameter(E), 1.0, rel_tol=1e-9):
        raise InvalidParams("E must be rescaled to diameter 1", diameter=diameter(E))
    e_idx = _locate(E, X)
    if d is not None:
        ratios = [float(d)]
    elif mode == "strict":
        bound = (4.0 ** -s * 30.0 ** -u / (C_E * C_X)) ** (1 / (u - s))
        ratios = [0.99 * min(1 / 30, bound)]
    else:
        ratios = list(grid or superset_grid())
    last = None
    for v in ratios:
        try:
            return _build_superset(E, X, e_idx, s, t, u, C_X, v, depth, budget)
        except (NoVacantBall, InsufficientChildren) as exc:
            last = exc
    raise last


def superset_grid(d_max=0.06, d_min=1e-3, factor=0.8):
    out, v = [], d_max
    while v >= d_min:
        out.append(v)
        v *= factor
    return out


def _build_superset(E, X, e_idx, s, t, u, C_X, d, depth, budget):
    centers, m = [None], [0]
    e_mask = np.zeros(X.size, dtype=bool)
    e_mask[e_idx] = True
    for k in range(1, depth + 2):
        prev = centers[k - 1][: m[k - 1]] if k > 1 else e_idx[:1]
        reach = 4.0 * d ** (k - 1) if k > 1 else math.inf
        region = np.ones(X.size, dtype=bool) if k == 1 else _region(X, prev, reach)
        c, mk = _level_packing(X, e_idx, k, d, region)
        centers.append(c)
        m.append(mk)
    balls = []
    jp_ok = True
    for k in range(1, depth + 1):
        nxt = centers[k + 1]
        nxt_pts = X.points[nxt]
        for i in range(m[k]):
            xc = X.points[centers[k][i]]
            dist = point_distances(nxt_pts, xc)
            J = np.flatnonzero(dist + d ** (k + 1) <= 3 * d ** k)
            Jp = np.flatnonzero(dist <= 30 * d ** (k + 1) + d ** k)
            I = [j for j in J if np.any(e_mask[ball_query(X, int(nxt[j]), 6 * d ** (k + 1))[0]])]
            jp_ok &= bool(np.all(np.isin(Jp, J)))
            free = [int(j) for j in J if j not in set(I)]
            if not free:
                raise NoVacantBall("no vacant ball next to an E-center", level=k, index=i, d=d)
            y = int(nxt[free[0]])
            leaves, mass, _ = _plant(X, y, d ** (k + 1), u, C_X, t, d ** depth, budget)
            balls.append(VacantBall(k, i, y, d ** (k + 1), J.tolist(), Jp.tolist(), [int(j) for j in I],
                                    leaves, mass))
    pts_idx = [e_idx]
    wts = [np.full(e_idx.size, (d ** (depth + 1)) ** t)]
    for b in balls:
        pts_idx.append(b.leaves)
        wts.append(np.full(b.leaves.size, b.leaf_mass))
    allidx = np.concatenate(pts_idx)
    allw = np.concatenate(wts)
    uniq, inv = np.unique(allidx, return_inverse=True)
    w = np.zeros(uniq.size)
    np.add.at(w, inv, allw)
    net = WeightedNet(X.points[uniq], w, resolution=d ** depth, validate=False)
    build = SupersetBuild(d, depth, t, e_idx, centers, m, balls, net)
    build.audits = superset_audits(build, X, E)
    build.audits["J_prime_in_J"] = jp_ok
    return build


def superset_audits(build, X, E):
    """Exact checks: ``E ⊂ F``, same-level and ``|k-l| >= 2`` disjointness of the ``2B_{k,i}``."""
    d = build.d
    same, far = True, True
    bs = build.balls
    for a in range(len(bs)):
        pa = X.points[bs[a].center]
        for b in range(a + 1, len(bs)):
            gap = float(point_distances(pa, X.points[bs[b].center]))
            touch = gap <= 2 * bs[a].radius + 2 * bs[b].radius
            if bs[a].level == bs[b].level and touch:
                same = False
            if abs(bs[a].level - bs[b].level) >= 2 and touch:
                far = False
    fset = {tuple(p) for p in build.net.points.tolist()}
    contains = all(tuple(p) in fset for p in E.points.tolist())
    in_x = bool(np.all(X.tree.query(build.net.points)[0] == 0))
    sandwich = True
    for b in bs:
        dist_e = float(np.min(point_distances(E.points, X.points[b.center])))
        k = b.level
        if not (dist_e >= 4 * d ** (k + 1) + 2 * d ** (k + 1) - 1e-15 and dist_e - 2 * d ** (k + 1) < d ** (k - 1)):
            sandwich = False
    return {"contains_E": contains, "inside_X": in_x, "same_level_disjoint": same,
            "far_level_disjoint": far, "distance_sandwich": sandwich}


# ----------------------------------------------------------------------
def _frac(v):
    if isinstance(v, float):
        return Fraction(v).limit_denominator(10 ** 12)
    return Fraction(v)


def _exceeds(value, target):
    """``value > target`` where ``target`` is a Fraction or a Decimal."""
    if isinstance(target, Decimal):
        with localcontext() as ctx:
            ctx.prec = 60
            return Decimal(value.numerator) / Decimal(value.denominator) > target
    return value > target


def family_levels(lam, t_frac):
    """Smallest ``l`` with ``1 - (1 - lam)^l > t_frac`` (exact)."""
    lam = _frac(lam)
    if not 0 < lam < Fraction(1, 2):
        raise InvalidParams("need 0 < lambda < 1/2", lam=float(lam))
    if not 0 < t_frac < 1:
        raise InvalidParams("need 0 < t < 1", t=float(t_frac))
    l, rest = 0, Fraction(1)
    while True:
        l += 1
        rest *= 1 - lam
        if _exceeds(1 - rest, t_frac):
            return l


def interval_family(a, b, lam, t_frac, exact=True):
    """The mid-interval family on ``[a, b]``: list of ``(lo, hi, k)``."""
    if not a < b:
        raise InvalidParams("need a < b", a=a, b=b)
    l = family_levels(lam, t_frac)
    lam = _frac(lam) if exact else float(lam)
    one = Fraction(1) if exact else 1.0
    gaps = [(0 * one, one)]
    out = []
    for k in range(1, l + 1):
        nxt = []
        for lo, hi in gaps:
            c = (lo + hi) / 2
            half = lam * (hi - lo) / 2
            out.append((c - half, c + half, k))
            nxt += [(lo, c - half), (c + half, hi)]
        gaps = nxt
    if exact:
        a, b = _frac(a), _frac(b)
    return [((b - a) * lo + a, (b - a) * hi + a, k) for lo, hi, k in sorted(out, key=lambda v: v[0])]


def default_schedule(depth):
    """``lam_k = 1/(k+2)`` and ``t_k = exp(-2^-k)`` (as 60-digit Decimals)."""
    lam = [Fraction(1, k + 2) for k in range(1, depth + 1)]
    with localcontext() as ctx:
        ctx.prec = 60
        ts = [(-Decimal(2) ** -k).exp() for k in range(1, depth + 1)]
    return lam, ts


@dataclass
class IntervalFamily:
    lam: list
    t: list
    l: list
    lengths: list
    counts: list
    levels: list | None = None

    @property
    def depth(self):
        return len(self.lam)

    def target_product(self, m=None):
        m = self.depth if m is None else m
        with localcontext() as ctx:
            ctx.prec = 60
            p = Decimal(1)
            for v in self.t[:m]:
                p *= v if isinstance(v, Decimal) else Decimal(str(v))
        return p

    def to_dict(self):
        out = {"schema": "regset.intervals/1",
               "lambda": [str(v) for v in self.lam], "t": [str(v) for v in self.t], "l": self.l,
               "total_length": [str(v) for v in self.lengths],
               "total_length_float": [float(v) for v in self.lengths], "counts": self.counts}
        if self.levels is not None:
            out["levels"] = [[[str(lo), str(hi), k] for lo, hi, k in lev] for lev in self.levels]
        return out


def build_counterexample(lam_seq=None, t_seq=None, depth=8, enumerate_budget=INTERVAL_BUDGET):
    """Nested families ``I_1, ..., I_depth``; exact total lengths, intervals when affordable."""
    if lam_seq is None or t_seq is None:
        dl, dt = default_schedule(depth)
        lam_seq = dl if lam_seq is None else lam_seq
        t_seq = dt if t_seq is None else t_seq
    if len(lam_seq) < depth or len(t_seq) < depth:
        raise InvalidSchedule("schedules shorter than the depth", depth=depth)
    lam = [_frac(v) for v in lam_seq[:depth]]
    ts = list(t_seq[:depth])
    if any(b >= a for a, b in zip(lam, lam[1:])):
        raise InvalidSchedule("lambda schedule must decrease")
    if any(not 0 < float(v) < 1 for v in ts):
        raise InvalidSchedule("t values must lie in (0, 1)")
    if sum(1 - float(v) for v in ts) > 50:
        raise InvalidSchedule("product of t values is numerically zero")
    ls, lengths, counts = [], [], []
    total, count = Fraction(1), 1
    for lk, tk in zip(lam, ts):
        l = family_levels(lk, tk)
        ls.append(l)
        total *= 1 - (1 - lk) ** l
        count *= 2 ** l - 1
        lengths.append(total)
        counts.append(count)
    levels = None
    if counts[-1] <= enumerate_budget:
        exact = depth <= EXACT_LEVELS
        levels = []
        cur = [(Fraction(0) if exact else 0.0, Fraction(1) if exact else 1.0, 0)]
        for lk, tk in zip(lam, ts):
            cur = [iv for lo, hi, _ in cur for iv in interval_family(lo, hi, lk, tk, exact=exact)]
            levels.append(cur)
    return IntervalFamily(lam, ts, ls, lengths, counts, levels)


def _threshold_log(s, C):
    with localcontext() as ctx:
        ctx.prec = 60
        return -Decimal(C).ln() / Decimal(s) - Decimal(4).ln()


def _below(lam, s, C):
    """Exact-as-possible ``lam < C^(-1/s) / 4``."""
    with localcontext() as ctx:
        ctx.prec = 60
        lhs = Decimal(lam.numerator).ln() - Decimal(lam.denominator).ln()
        diff = lhs - _threshold_log(s, C)
        return diff < -Decimal(10) ** -40


def threshold_level(s, C, lam_of=lambda m: Fraction(1, m + 2), limit=10 ** 7):
    """Smallest ``m`` with ``lam_m < C^(-1/s) / 4`` for a decreasing schedule."""
    lo, hi = 1, 1
    while not _below(lam_of(hi), s, C):
        hi *= 2
        if hi > limit:
            return None
    while lo < hi:
        mid = (lo + hi) // 2
        if _below(lam_of(mid), s, C):
            hi = mid
        else:
            lo = mid + 1
    return lo


def nonregularity_witness(fam, s, C):
    """Cascade certificate against nonempty ``(s, C)``-regular subsets, or Inconclusive."""
    if not s > 0 or C < 1:
        raise InvalidParams("need s > 0 and C >= 1", s=s, C=C)
    thr = math.exp(float(_threshold_log(s, C)))
    level = next((m for m, lk in enumerate(fam.lam, start=1) if _below(lk, s, C)), None)
    report = {"s": s, "C": C, "threshold": thr, "depth": fam.depth}
    if level is None:
        report.update(verdict="Inconclusive", reason="no level with lambda_m below the threshold",
                      needed_level=threshold_level(s, C) if _is_default(fam) else None)
        return report
    lam = fam.lam[level - 1]
    l = fam.l[level - 1]
    classes = []
    for k in range(l, 0, -1):
        # I_k is the middle of J_(k-1); J \ I splits into gaps holding only classes > k
        classes.append({"class": k, "ratio": str(lam), "ratio_float": float(lam),
                        "relative_length": str(2 ** (1 - k) * lam * (1 - lam) ** (k - 1)),
                        "gap_classes_excluded": list(range(l, k, -1)),
                        "density_bound": float(C * float(lam) ** s * 4 ** s)})
    report.update(verdict="EmptyRegularSubset", level=level, lam=str(lam), classes=classes)
    return report


def _is_default(fam):
    return all(v == Fraction(1, k + 2) for k, v in enumerate(fam.lam, start=1))


# ----------------------------------------------------------------------
def family_net(fam, level=None, per_interval=5):
    """1-d net sampling ``per_interval`` evenly spaced points in each level interval."""
    level = fam.depth if level is None else level
    if fam.levels is None:
        raise TooDeep("family intervals were not enumerated")
    ivs = fam.levels[level - 1]
    pts = np.concatenate([np.linspace(float(lo), float(hi), per_interval) for lo, hi, _ in ivs])
    spacing = min(float(hi - lo) for lo, hi, _ in ivs) / (per_interval - 1)
    return WeightedNet(pts[:, None], np.full(pts.size, spacing), resolution=spacing, validate=False)


def net_witness(net, s, C):
    """Iterated cluster exclusion on a 1-d net.

    A cluster is a run of consecutive points whose internal gaps are all
    smaller than both outer gaps. With ``I`` its hull padded by half the
    resolution and ``J`` the hull padded by just under the smaller outer gap,
    ``|I| < C^(-1/s) |J| / 4`` excludes the cluster from every ``(s, C)``-regular
    subset. Points are removed until none is excluded; an empty remainder
    yields ``EmptyRegularSubset``.
    """
    if net.dim != 1:
        raise InvalidParams("net_witness needs a 1-d net")
    x = np.sort(net.points[:, 0])
    half = net.resolution / 2
    thr = math.exp(float(_threshold_log(s, C)))
    alive = np.ones(x.size, dtype=bool)
    witnesses = []
    while True:
        xs = x[alive]
        if xs.size == 0:
            return {"verdict": "EmptyRegularSubset", "threshold": thr, "witnesses": witnesses}
        gaps = np.diff(xs)
        drop = np.zeros(xs.size, dtype=bool)
        for i in range(xs.size):
            inner = 0.0
            left = gaps[i - 1] if i > 0 else math.inf
            for j in range(i, xs.size):
                if j > i:
                    inner = max(inner, gaps[j - 1])
                if inner >= left:
                    break
                right = gaps[j] if j < xs.size - 1 else math.inf
                outer = min(left, right)
                if not inner < outer or math.isinf(outer):
                    continue
                I_len = xs[j] - xs[i] + 2 * half
                J_len = xs[j] - xs[i] + 2 * outer * (1 - 1e-9)
                if I_len < thr * J_len:
                    drop[i:j + 1] = True
                    witnesses.append({"x": float(xs[i]), "r": float(J_len / 4),
                                      "ratio": float(I_len / J_len), "points": int(j - i + 1)})
        if not drop.any():
            return {"verdict": "Inconclusive", "threshold": thr, "remaining": int(xs.size),
                    "witnesses": witnesses}
        alive[np.flatnonzero(alive)[drop]] = False
