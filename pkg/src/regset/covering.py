"""Greedy packings and annulus-gap covers of weighted nets.

Primitives:

* :func:`greedy_packing` -- disjoint balls ``B(x_i, r)`` whose ``5r`` dilations
  cover ``E ∩ B(p, R)``;
* :func:`ring_cover` -- balls ``B(x_i, rho_i)`` covering ``E`` with the linear
  annulus ``(rho_i, rho_i + r]`` empty;
* :func:`lambda_gap_cover` -- the same with the geometric annulus
  ``(rho_i, lam * rho_i]`` empty and ``B(x_i, lam * rho_i / 3)`` disjoint.

Candidates are always scanned in ascending lexicographic coordinate order
(insertion order in oracle mode), so every output is reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .errors import EmptyRegion, GapNotFound, InvalidLambda, InvalidParams
from .metric import ball_query, diameter


@dataclass
class Packing:
    centers: np.ndarray
    r: float
    cover_radius: float
    candidates: np.ndarray

    @property
    def m(self):
        return int(self.centers.size)

    def to_dict(self, net):
        return {
            "centers": [_coords(net, i) for i in self.centers],
            "indices": self.centers.tolist(),
            "radii": [self.r] * self.m,
            "cover_radius": self.cover_radius,
            "mode": "packing",
        }


@dataclass
class GapCover:
    centers: np.ndarray
    rhos: np.ndarray
    r: float
    D: float
    mode: str
    lam: float | None = None
    candidates: np.ndarray | None = None

    @property
    def m(self):
        return int(self.centers.size)

    def to_dict(self, net):
        return {
            "centers": [_coords(net, i) for i in self.centers],
            "indices": self.centers.tolist(),
            "radii": self.rhos.tolist(),
            "r": self.r,
            "D": self.D,
            "mode": self.mode if self.lam is None else f"geometric({self.lam!r})",
        }


@dataclass(frozen=True)
class GapConstants:
    s0: float
    D: float
    c: float


def _coords(net, i):
    return net.points[int(i)].tolist() if net.euclidean else int(i)


def _ordered(net, candidates):
    rank = getattr(net, "_lex_rank", None)
    if rank is None:
        rank = np.empty(net.size, dtype=int)
        rank[net.lex_order()] = np.arange(net.size)
        net._lex_rank = rank
    cand = np.asarray(candidates, dtype=int)
    return cand[np.argsort(rank[cand], kind="stable")]


def _within(net, center, radius):
    """Indices (into the full net) at closed distance <= radius."""
    if net.euclidean:
        return ball_query(net, int(center), radius)[0]
    return np.flatnonzero(net.distances_from(int(center)) <= radius)


# ----------------------------------------------------------------------
def greedy_packing(net, p, r, R, restrict_to_ball=True, limit=None, candidates=None,
                   preselected=()):
    """Greedy disjoint ``r``-ball packing of ``E ∩ B(p, R)``.

    The first candidate (lexicographic order) at distance ``> 2r`` from every
    chosen center is selected until none remain; every candidate then lies
    within ``2r <= 5r`` of a center. ``limit`` stops after that many centers.
    ``preselected`` centers block candidates but are not returned.
    """
    if not 0 < r < R:
        raise InvalidParams("need 0 < r < R", r=r, R=R)
    if candidates is not None:
        cand = np.asarray(candidates, dtype=int)
    elif restrict_to_ball:
        cand = ball_query(net, p, R)[0] if net.euclidean or isinstance(p, (int, np.integer)) else None
    else:
        cand = np.arange(net.size)
    if cand is None or cand.size == 0:
        raise EmptyRegion("no net point in the packing region", p=p, R=R)
    cand = _ordered(net, cand)
    allowed = np.zeros(net.size, dtype=bool)
    allowed[cand] = True
    blocked = np.zeros(net.size, dtype=bool)
    for c in preselected:
        blocked[_within(net, c, 2 * r)] = True
    chosen = []
    for c in cand:
        if blocked[c]:
            continue
        chosen.append(int(c))
        if limit is not None and len(chosen) >= limit:
            break
        blocked[_within(net, c, 2 * r)] = True
    return Packing(np.array(chosen, dtype=int), float(r), 5.0 * r, cand)


def verify_packing(net, packing):
    """Exact checks: pairwise center distances > 2r and 5r covering of the candidates."""
    centers = packing.centers
    disjoint = True
    for a, c in enumerate(centers):
        d = net.distances_from(int(c))[centers[a + 1:]]
        if np.any(d <= 2 * packing.r):
            disjoint = False
            break
    cover = np.full(net.size, np.inf)
    for c in centers:
        cover = np.minimum(cover, net.distances_from(int(c)))
    covered = bool(np.all(cover[packing.candidates] <= packing.cover_radius))
    return {"disjoint": disjoint, "covering": covered}


def packing_count_bounds(s, C, R, r):
    """Lower and upper count bounds ``(5^s C)^-1 (R/r)^s`` and ``2^s C (R/r)^s``."""
    q = (R / r) ** s
    return q / (5 ** s * C), 2 ** s * C * q


# ----------------------------------------------------------------------
def ring_constant(s, C):
    """Multiplier cap ``(3 C 2^s)^(1/(1-s)) + 1`` for linear annulus gaps."""
    if not 0 < s < 1 or C < 1:
        raise InvalidParams("need 0 < s < 1 and C >= 1", s=s, C=C)
    return (3 * C * 2 ** s) ** (1 / (1 - s)) + 1


def annulus_gap(net, x, r, D_cap, dists=None):
    """Smallest ``rho = (l+1) r`` with no net point at distance in ``(rho, rho + r]``."""
    if r <= 0:
        raise InvalidParams("r must be positive", r=r)
    ds = np.sort(net.distances_from(int(x)) if dists is None else dists)
    l = 0
    while True:
        rho = (l + 1) * r
        if rho > D_cap * r * (1 + 1e-12):
            raise GapNotFound("no empty linear annulus up to D_cap * r", center=int(x), r=r, D_cap=D_cap)
        lo = np.searchsorted(ds, rho, side="right")
        hi = np.searchsorted(ds, rho + r, side="right")
        if hi == lo:
            return rho
        l += 1


def ring_cover(net, r, s, C, mode="adaptive", D_cap=None, candidates=None):
    """Cover ``candidates`` (default: the whole net) by balls with empty linear annuli.

    Gap emptiness is checked against every net point, candidates or not.
    """
    D = ring_constant(s, C)
    if mode == "strict":
        diam = diameter(net)
        if not r < diam / (2 * D):
            raise InvalidParams("strict mode needs r < diameter / (2D)", r=r, D=D, diameter=diam)
        D_cap = D
    elif D_cap is None:
        D_cap = D
    cand = _ordered(net, np.arange(net.size) if candidates is None else candidates)
    covered = np.zeros(net.size, dtype=bool)
    centers, rhos = [], []
    for x in cand:
        if covered[x]:
            continue
        d = net.distances_from(int(x))
        try:
            rho = annulus_gap(net, x, r, D_cap, dists=d)
        except GapNotFound as exc:
            exc.context["cover_size"] = len(centers)
            raise
        centers.append(int(x))
        rhos.append(rho)
        covered |= d <= rho
    return GapCover(np.array(centers, dtype=int), np.array(rhos), float(r), float(D_cap), "linear",
                    candidates=cand)


# ----------------------------------------------------------------------
def gap_base(s, C, lam):
    """``1 - 3 C lam^(2s) (lam^s - 1)``."""
    return 1.0 - 3.0 * C * lam ** (2 * s) * math.expm1(s * math.log(lam))


def gap_expression(s, C, lam):
    """``lam * (1 - 3 C lam^(2s) (lam^s - 1))^(-1/s)``; ``inf`` where the base is not positive."""
    inner = 3.0 * C * lam ** (2 * s) * math.expm1(s * math.log(lam))
    if inner >= 1.0:
        return math.inf
    log_val = math.log(lam) - math.log1p(-inner) / s
    return math.exp(log_val) if log_val < 700 else math.inf


def lemma3_constants(C, lam, D_choice=None):
    """Exponent cap ``s0``, multiplier ``D`` and ``c = log D / log lam``.

    ``s0`` is the supremum of ``s`` in the positivity interval of the base for
    which the expression stays ``<= D``. With ``D_choice=None``, ``D`` is twice
    the expression evaluated at half the positivity root.
    """
    if lam < 9:
        raise InvalidLambda("lambda must be at least 9", lam=lam)
    if C < 1:
        raise InvalidParams("C must be >= 1", C=C)
    s1 = brentq(lambda s: gap_base(s, C, lam), 1e-15, 1.0, xtol=1e-15, rtol=1e-14)
    D = 2.0 * gap_expression(s1 / 2, C, lam) if D_choice is None else float(D_choice)
    at_zero = lam ** (1 + 3 * C)
    if not D >= at_zero:
        raise InvalidParams("D is below the s -> 0 limit of the expression", D=D, limit=at_zero)
    grid = np.linspace(0, s1, 4001)[1:-1]
    vals = np.array([gap_expression(v, C, lam) for v in grid])
    bad = np.flatnonzero(vals > D)
    if bad.size == 0:
        s0 = float(grid[-1])
    else:
        k = int(bad[0])
        lo = float(grid[k - 1]) if k > 0 else 0.0
        hi = float(grid[k])
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mid <= 0 or gap_expression(mid, C, lam) <= D:
                lo = mid
            else:
                hi = mid
        s0 = lo
    return GapConstants(s0=s0, D=D, c=math.log(D) / math.log(lam))


def geometric_gap(ds, r, lam, D_cap):
    """Smallest ``rho = lam^l r`` with the annulus ``(rho, lam rho]`` empty, or None."""
    rho = r
    while rho <= D_cap * r * (1 + 1e-12):
        lo = np.searchsorted(ds, rho, side="right")
        hi = np.searchsorted(ds, lam * rho, side="right")
        if hi == lo:
            return rho
        rho = lam * rho
    return None


def lambda_gap_cover(net, r, s, C, lam, mode="adaptive", D_cap=None, candidates=None):
    """Geometric-gap cover with greedy largest-first selection in rounds.

    Round ``j``: ``M_j`` is the largest gap radius among uncovered candidates;
    uncovered candidates with radius ``> M_j / 2`` are selected in candidate
    order, each covering its own ball. Ties fall to candidate order.
    """
    if lam < 9:
        raise InvalidLambda("lambda must be at least 9", lam=lam)
    if mode == "strict":
        consts = lemma3_constants(C, lam)
        if not 0 < s < consts.s0:
            raise InvalidParams("strict mode needs 0 < s < s0(C, lam)", s=s, s0=consts.s0)
        D_cap = consts.D
    elif D_cap is None:
        D_cap = lam ** 2
    cand = _ordered(net, np.arange(net.size) if candidates is None else candidates)
    rad = {}
    for x in cand:
        ds = np.sort(net.distances_from(int(x)))
        rho = geometric_gap(ds, r, lam, D_cap)
        if rho is None:
            raise GapNotFound("no empty geometric annulus up to D_cap * r", center=int(x), r=r,
                              lam=lam, D_cap=D_cap)
        rad[int(x)] = rho
    covered = np.zeros(net.size, dtype=bool)
    centers, rhos = [], []
    while True:
        left = [int(x) for x in cand if not covered[x]]
        if not left:
            break
        M = max(rad[x] for x in left)
        for x in left:
            if covered[x] or not rad[x] > M / 2:
                continue
            centers.append(x)
            rhos.append(rad[x])
            covered |= net.distances_from(x) <= rad[x]
    return GapCover(np.array(centers, dtype=int), np.array(rhos), float(r), float(D_cap), "geometric",
                    lam=float(lam), candidates=cand)


def verify_gap_cover(net, cover):
    """Exact checks of every :class:`GapCover` invariant; returns a dict of booleans."""
    cand = np.arange(net.size) if cover.candidates is None else cover.candidates
    out = {"radii_in_range": bool(np.all((cover.rhos >= cover.r) &
                                         (cover.rhos <= cover.D * cover.r * (1 + 1e-12))))}
    empty, covered, order_ok, disjoint = True, np.zeros(net.size, dtype=bool), True, True
    rows = [net.distances_from(int(c)) for c in cover.centers]
    for i, (d, rho) in enumerate(zip(rows, cover.rhos)):
        outer = rho + cover.r if cover.lam is None else cover.lam * rho
        if np.any((d > rho) & (d <= outer)):
            empty = False
        covered |= d <= rho
        later = cover.centers[i + 1:]
        if np.any(d[later] <= rho):
            order_ok = False
        if cover.lam is not None:
            sep = d[later]
            if np.any(sep <= cover.lam * rho / 3 + cover.lam * cover.rhos[i + 1:] / 3):
                disjoint = False
            if np.any(sep <= cover.lam * rho):
                order_ok = False
    out["annuli_empty"] = empty
    out["covering"] = bool(np.all(covered[cand]))
    out["order_separation"] = order_ok
    if cover.lam is not None:
        out["disjoint"] = disjoint
    return out
