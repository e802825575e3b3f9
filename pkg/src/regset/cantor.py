"""Standard corner Cantor sets ``C(t, a)`` in R^n.

Each closed cube of side ``s`` has ``2**n`` children of side ``d * s`` sitting in
its corners, with ``2**n * d**t = 1``. A symbol ``i`` in ``1..2**n`` selects the
corner by the binary expansion of ``i - 1``: bit ``j`` set means the high end
along axis ``j``.

With ``group = N > 1`` the same set is described with ``N`` construction steps
merged into one: ratio ``d**N`` and ``2**(n N)`` symbols per step.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadAddress, InvalidDimension, InvalidParams, TooDeep
from .metric import WeightedNet

NODE_BUDGET = 2 ** 20


def contraction_ratio(n, t):
    """The ratio ``d = 2**(-n/t)`` solving ``2**n d**t = 1``."""
    if n < 1 or not 0 < t < n:
        raise InvalidDimension("need 0 < t < n", n=n, t=t)
    return 2.0 ** (-n / t)


@dataclass(frozen=True)
class CantorSpec:
    n: int
    t: float
    a: float = 1.0
    group: int = 1
    origin: tuple = field(default=None)

    def __post_init__(self):
        if self.a <= 0:
            raise InvalidParams("side length must be positive", a=self.a)
        if self.group < 1:
            raise InvalidParams("group must be >= 1", group=self.group)
        contraction_ratio(self.n, self.t)
        if self.origin is None:
            object.__setattr__(self, "origin", (0.0,) * self.n)
        if len(self.origin) != self.n:
            raise InvalidParams("origin has the wrong dimension", origin=self.origin)

    @property
    def base_ratio(self):
        return contraction_ratio(self.n, self.t)

    @property
    def d(self):
        return self.base_ratio ** self.group

    @property
    def branching(self):
        return 2 ** (self.n * self.group)

    def check(self):
        """Residual of ``branching * d**t = 1``."""
        return abs(self.branching * self.d ** self.t - 1.0)


def _digits(spec, symbol):
    if not 1 <= symbol <= spec.branching:
        raise BadAddress("symbol out of range", symbol=symbol, branching=spec.branching)
    base = 2 ** spec.n
    v = symbol - 1
    out = []
    for _ in range(spec.group):
        out.append(v % base)
        v //= base
    return out[::-1]


def cube_of(spec, word):
    """``(corner, side)`` of the closed cube addressed by ``word``."""
    corner = np.array(spec.origin, dtype=float)
    side = spec.a
    d0 = spec.base_ratio
    bits = 1 << np.arange(spec.n)
    for sym in word:
        for digit in _digits(spec, int(sym)):
            child = side * d0
            corner = corner + ((digit & bits) > 0) * (side - child)
            side = child
    return corner, side


def cantor_point(spec, word):
    """Center of the cube addressed by ``word``."""
    corner, side = cube_of(spec, word)
    return corner + side / 2


def cantor_cubes(spec, depth, budget=NODE_BUDGET):
    """All depth-level cubes as ``(words, corners, side)``.

    ``words`` has shape ``(branching**depth, depth)`` with symbols in
    ``1..branching``, in lexicographic word order.
    """
    if depth < 0:
        raise InvalidParams("depth must be nonnegative", depth=depth)
    count = spec.branching ** depth
    if count > budget:
        raise TooDeep("cube count exceeds the node budget", count=count, budget=budget)
    base = 2 ** spec.n
    d0 = spec.base_ratio
    offsets = ((np.arange(base)[:, None] >> np.arange(spec.n)[None, :]) & 1).astype(float)
    corners = np.array([spec.origin], dtype=float)
    digits = np.zeros((1, 0), dtype=int)
    side = spec.a
    for _ in range(depth * spec.group):
        child = side * d0
        corners = (corners[:, None, :] + offsets[None, :, :] * (side - child)).reshape(-1, spec.n)
        digits = np.concatenate([np.repeat(digits, base, axis=0),
                                 np.tile(np.arange(base), digits.shape[0])[:, None]], axis=1)
        side = child
    if depth and spec.group > 1:
        g = digits.reshape(digits.shape[0], depth, spec.group)
        weights = base ** np.arange(spec.group - 1, -1, -1)
        words = (g * weights).sum(axis=2) + 1
    else:
        words = digits + 1
    return words, corners, side


def cantor_net(spec, depth, budget=NODE_BUDGET):
    """Centers of depth-level cubes, each of mass ``(a d**depth)**t``; total mass ``a**t``."""
    _, corners, side = cantor_cubes(spec, depth, budget)
    pts = corners + side / 2
    w = np.full(pts.shape[0], side ** spec.t)
    return WeightedNet(pts, w, resolution=side if depth else spec.a, validate=False)


def cantor_line_net(t, depth, diameter=1.0, dim=1, center=None, budget=NODE_BUDGET):
    """1-d ``C(t, a)`` placed on the first axis of R^dim, scaled to the given net diameter."""
    spec = CantorSpec(1, t)
    net = cantor_net(spec, depth, budget)
    x = net.points[:, 0]
    span = x.max() - x.min()
    scale = diameter / span if span > 0 else 1.0
    c = np.zeros(dim) if center is None else np.asarray(center, dtype=float)
    pts = np.zeros((x.size, dim))
    pts[:, 0] = (x - 0.5 * (x.max() + x.min())) * scale
    pts = pts + c
    w = net.weights * scale ** t
    return WeightedNet(pts, w, resolution=net.resolution * scale, validate=False)


def gap_separation(spec, k):
    """Guaranteed distance between sibling depth-``k`` cubes: ``(1 - 2d) d^(k-1) a`` for ``group=1``."""
    if spec.group == 1:
        return (1 - 2 * spec.d) * spec.d ** (k - 1) * spec.a
    d0 = spec.base_ratio
    return (1 - 2 * d0) * d0 ** (spec.group - 1) * spec.d ** (k - 1) * spec.a


def center_separation(spec, k):
    """Lower bound on distances between centers of sibling depth-``k`` cubes."""
    d0 = spec.base_ratio
    return (1 - d0) * d0 ** (spec.group - 1) * spec.d ** (k - 1) * spec.a


def dimension_of(spec):
    return math.log(spec.branching) / -math.log(spec.d)
