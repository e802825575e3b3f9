import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from regset.cantor import CantorSpec, cantor_net
from regset.errors import (CannotRescale, EmptyNet, InvalidNet, InvalidRadius,
                           ScaleBelowResolution)
from regset.metric import (WeightedNet, ball_query, brute_ball_query, brute_diameter, diameter,
                           estimate_regularity, exact_regularity, offnet_upper_ratio,
                           rescale_to_unit)

LOG2_3 = math.log(2) / math.log(3)


def grid(n, lo=0.0, hi=1.0):
    return WeightedNet(np.linspace(lo, hi, n), np.full(n, 1.0 / n))


def test_diameter_examples():
    assert diameter(WeightedNet([[0.0], [1.0]])) == 1.0
    assert diameter(WeightedNet([[3.0, 4.0]])) == 0.0
    square = WeightedNet([[0, 0], [1, 0], [0, 1], [1, 1]])
    assert diameter(square) == pytest.approx(math.sqrt(2), abs=1e-15)
    assert diameter(square) == brute_diameter(square)


def test_empty_net_rejected():
    with pytest.raises(EmptyNet):
        WeightedNet(np.zeros((0, 2)))


def test_invalid_weights_rejected():
    with pytest.raises(InvalidNet):
        WeightedNet([[0.0], [1.0]], [1.0, -1.0])
    with pytest.raises(InvalidNet):
        WeightedNet([[0.0], [1.0]], [0.0, 0.0])
    with pytest.raises(InvalidNet):
        WeightedNet([[0.0], [1.0]], [1.0])


def test_ball_query_closed_boundary():
    net = WeightedNet([[0.0], [0.5], [1.0]], [1, 1, 1])
    idx, mass = ball_query(net, [0.0], 0.5)
    assert idx.tolist() == [0, 1]
    assert mass == 2.0
    idx, _ = ball_query(net, 1, 0.0)
    assert idx.tolist() == [1]


def test_ball_query_grid_count():
    # 101 points, [0.25, 0.75] holds 51 of them
    net = grid(101)
    idx, mass = ball_query(net, [0.5], 0.25)
    assert idx.size == 51
    assert mass == pytest.approx(51 / 101, abs=1e-15)
    assert idx.tolist() == brute_ball_query(net, [0.5], 0.25)[0].tolist()


def test_negative_radius():
    with pytest.raises(InvalidRadius):
        ball_query(grid(5), [0.0], -1e-3)


def test_estimate_uniform_grid():
    net = grid(1001)
    c, C = estimate_regularity(net, 1.0, (0.02, 0.5))
    assert c >= 0.9
    assert C <= 2.2
    ex = exact_regularity(net, 1.0, (0.02, 0.5))
    assert ex.c_lower <= c <= C <= ex.C_upper


def test_estimate_cantor_right_and_wrong_exponent():
    net = cantor_net(CantorSpec(1, LOG2_3), 8)
    est = estimate_regularity(net, LOG2_3, (3.0 ** -6, 1.0))
    assert 0 < est.c_lower <= est.C_upper < math.inf
    lo_a = estimate_regularity(net, 1.0, (3.0 ** -3, 1.0)).c_lower
    lo_b = estimate_regularity(net, 1.0, (3.0 ** -6, 1.0)).c_lower
    assert lo_b < lo_a


def test_estimate_witnesses_attained():
    net = cantor_net(CantorSpec(1, 0.5), 6)
    est = estimate_regularity(net, 0.5, (1e-2, 1.0))
    for value, (c, r, m) in ((est.c_lower, est.lower_witness), (est.C_upper, est.upper_witness)):
        _, mass = ball_query(net, c, r)
        assert mass == m
        assert mass / r ** 0.5 == value


def test_scale_below_resolution():
    net = grid(11)
    with pytest.raises(ScaleBelowResolution):
        estimate_regularity(net, 1.0, (0.05, 1.0))
    estimate_regularity(net, 1.0, (0.1, 1.0))
    with pytest.raises(ScaleBelowResolution):
        estimate_regularity(net, 1.0, (0.1, 1.0), strict_window=True)


def test_rescale_examples():
    net = WeightedNet([[0.0], [2.0]], [1.0, 1.0])
    out = rescale_to_unit(net, 1.0)
    assert out.points[:, 0].tolist() == [0.0, 1.0]
    assert out.weights.tolist() == [0.5, 0.5]
    unit = grid(11)
    same = rescale_to_unit(unit, 1.0)
    assert np.array_equal(same.points, unit.points)
    assert np.array_equal(same.weights, unit.weights)
    with pytest.raises(CannotRescale):
        rescale_to_unit(WeightedNet([[1.0]]), 1.0)


def test_rescale_preserves_constants():
    big = WeightedNet(np.linspace(0, 4, 201), np.full(201, 4 / 201))
    small = rescale_to_unit(big, 1.0)
    a = estimate_regularity(big, 1.0, (0.4, 4.0))
    b = estimate_regularity(small, 1.0, (0.1, 1.0))
    assert a.c_lower == pytest.approx(b.c_lower, rel=1e-9)
    assert a.C_upper == pytest.approx(b.C_upper, rel=1e-9)


def test_offnet_upper_ratio_within_doubling():
    net = cantor_net(CantorSpec(1, 0.5), 8)
    est = exact_regularity(net, 0.5, (1e-3, 1.0))
    assert offnet_upper_ratio(net, 0.5, 0.05) <= 2 ** 0.5 * est.C_upper


def test_oracle_net_matches_euclidean():
    pts = np.array([[0.0], [0.3], [1.0], [1.7]])
    eu = WeightedNet(pts)
    orc = WeightedNet(4, oracle=lambda i, j: abs(pts[i, 0] - pts[j, 0]))
    assert diameter(orc) == diameter(eu)
    assert ball_query(orc, 1, 0.7)[0].tolist() == ball_query(eu, 1, 0.7)[0].tolist()


def test_net_round_trip():
    net = cantor_net(CantorSpec(2, 1.2), 3)
    back = WeightedNet.from_dict(net.to_dict())
    assert np.array_equal(back.points, net.points)
    assert np.array_equal(back.weights, net.weights)
    assert back.resolution == net.resolution


coords = st.lists(st.floats(-10, 10, allow_nan=False), min_size=2, max_size=40)


@settings(max_examples=60, deadline=None)
@given(coords, st.floats(0, 5), st.floats(0, 5), st.integers(0, 39))
def test_ball_monotone_and_exact(xs, r1, r2, k):
    net = WeightedNet(np.array(xs)[:, None], validate=False)
    c = k % net.size
    lo, hi = sorted((r1, r2))
    a, ma = ball_query(net, c, lo)
    b, mb = ball_query(net, c, hi)
    assert set(a.tolist()) <= set(b.tolist())
    ref, mref = brute_ball_query(net, c, hi)
    assert b.tolist() == ref.tolist() and mb == mref


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_estimate_bounded_by_exact(seed):
    rng = np.random.default_rng(seed)
    net = WeightedNet(rng.random((30, 2)), rng.random(30) + 0.01)
    diam = diameter(net)
    window = (net.resolution, diam)
    est = estimate_regularity(net, 1.0, window)
    ex = exact_regularity(net, 1.0, window)
    assert ex.c_lower <= est.c_lower + 1e-15
    assert est.C_upper <= ex.C_upper + 1e-15
