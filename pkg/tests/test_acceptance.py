"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import itertools
import math

import numpy as np
import pytest

from _gen import identity_task, probes, random_task
from regset import serialize as io
from regset.ambient import (_psi, _shrink, build_ambient_embedding, build_slab_map, map_distortion,
                            normalize_for_ambient)
from regset.cantor import CantorSpec, cantor_line_net, cantor_net
from regset.cli import main
from regset.covering import (greedy_packing, lambda_gap_cover, packing_count_bounds, ring_constant,
                             ring_cover, verify_gap_cover, verify_packing)
from regset.embeddings import (bracketing_violations, build_embedding, build_subset_hierarchy,
                               pairwise_distortion, subset_map,
                               verify_partition)
from regset.metric import (WeightedNet, ball_query, diameter, estimate_regularity, exact_regularity,
                           rescale_to_unit)
from regset.supersets import build_counterexample, build_superset, net_witness, nonregularity_witness

LOG2_3 = math.log(2) / math.log(3)


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {n}: {detail}")
        assert ok, detail
    return emit


def _constant(net, s, window=None, exact=True, centers=None):
    window = window or (10 * net.resolution, diameter(net))
    if exact:
        return exact_regularity(net, s, window).normalized_constant
    return estimate_regularity(net, s, window, centers_sample=centers).normalized_constant


# ----------------------------------------------------------------------
def test_criterion_1_packing_counts(verdict):
    s = LOG2_3
    net = cantor_net(CantorSpec(1, s), 8)
    rng = np.random.default_rng(1)
    pairs = []
    while len(pairs) < 20:
        r = float(np.exp(rng.uniform(np.log(2e-3), np.log(0.05))))
        R = float(min(1.0, r * np.exp(rng.uniform(np.log(5), np.log(200)))))
        if R > 5 * r:
            pairs.append((r, R))
    C = _constant(net, s, (min(r for r, _ in pairs), 1.0))
    bad, exact_ok = [], True
    for j, (r, R) in enumerate(pairs):
        p = int(rng.integers(net.size))
        pk = greedy_packing(net, p, r, R)
        chk = verify_packing(net, pk)
        exact_ok &= chk["disjoint"] and chk["covering"]
        lo, hi = packing_count_bounds(s, C, R, r)
        if not lo <= pk.m <= hi:
            bad.append((r, R, pk.m, lo, hi))
    verdict(1, not bad and exact_ok, f"C={C:.4g}, 20 pairs, count violations={len(bad)}, exact={exact_ok}")


def test_criterion_2_gap_covers(verdict):
    nets = [(cantor_net(CantorSpec(1, t), 7), t) for t in (0.2, 0.3, 0.4, 0.5, 0.6)]
    nets += [(cantor_net(CantorSpec(1, t, a=a), 6), t) for t, a in ((0.35, 2.0), (0.45, 0.5))]
    nets += [(cantor_line_net(t, 6, dim=2, diameter=diam), t) for t, diam in ((0.25, 1.0), (0.4, 3.0), (0.55, 0.7))]
    failures = []
    for k, (net, s) in enumerate(nets):
        diam = diameter(net)
        r = 2e-3 * diam
        C = _constant(net, s, (r, diam))
        covers = [ring_cover(net, r, s, C)]
        covers.append(lambda_gap_cover(net, r, s, C, 9, D_cap=1e4))
        for cov in covers:
            chk = verify_gap_cover(net, cov)
            count = cov.m <= C * diam ** s / r ** s
            if not (all(chk.values()) and count):
                failures.append((k, cov.lam, chk, cov.m))
        geo = covers[1]
        c = net.points[geo.centers]
        for i, j in itertools.combinations(range(geo.m), 2):
            if np.linalg.norm(c[i] - c[j]) <= geo.lam * (geo.rhos[i] + geo.rhos[j]) / 3:
                failures.append((k, "ball overlap", i, j))
    verdict(2, not failures, f"10 nets x 2 covers, failures={failures[:3]}")


@pytest.fixture(scope="module")
def subset_case():
    src = rescale_to_unit(cantor_net(CantorSpec(1, 0.9), 17), 0.9)
    C_E = _constant(rescale_to_unit(cantor_net(CantorSpec(1, 0.9), 11), 0.9), 0.9)
    h, spec = build_subset_hierarchy(src, 0.9, C_E, 0.4, 1, 4, mode="adaptive")
    return src, C_E, h, spec


def test_criterion_3_subset_map(subset_case, verdict):
    src, C_E, h, spec = subset_case
    corr = subset_map(h, spec)
    bound = max(math.sqrt(spec.n) / spec.d, 4 / (1 - 2 * spec.d))
    ok_a = corr.L_measured <= bound and corr.L_bound == pytest.approx(bound, rel=1e-12)
    leaf = h.leaf_net(0.4)
    est = estimate_regularity(leaf, 0.4, (spec.d ** 4 * h.scale, 1.0))
    ok_b = est.c_lower > 0 and est.ratio < 1e3
    bad = bracketing_violations(h)
    verdict(3, ok_a and ok_b and not bad,
            f"C_E={C_E:.4g} N={spec.group} d={spec.d:.4g} L={corr.L_measured:.4g} <= {bound:.4g}; "
            f"ratio={est.ratio:.4g}; bracketing violations={len(bad)}")


def test_criterion_4_cell_embedding(verdict):
    E = rescale_to_unit(cantor_net(CantorSpec(1, 0.4), 8), 0.4)
    F = rescale_to_unit(cantor_net(CantorSpec(1, 0.8), 14), 0.8)
    C_E = _constant(E, 0.4)
    C_F = _constant(rescale_to_unit(cantor_net(CantorSpec(1, 0.8), 10), 0.8), 0.8)
    # adaptive mode raises InsufficientTargets on failure
    part, hF, corr = build_embedding(E, F, 0.4, 0.8, C_E, C_F, depth=3, mode="adaptive")
    chk = verify_partition(E, part, corr.source)
    D = ring_constant(0.4, C_E)
    ok = (all(chk.values()) and corr.source.D == pytest.approx(D)
          and corr.L_measured <= 4 * D / corr.source.d)
    verdict(4, ok, f"checks={chk}; D={D:.4g} d={corr.source.d:.4g} "
                   f"L={corr.L_measured:.4g} <= {4 * D / corr.source.d:.4g}")


# ----------------------------------------------------------------------
def _stage_gap(st, rng):
    """Largest mismatch of adjacent branch formulas on every interface of one slab stage."""
    e, worst = st.eps, 0.0

    def gap(a, b):
        return float(np.max(np.abs(a - b)))

    for i in range(1, st.m + 1):
        for zt in rng.uniform(-2, 2, 10):
            for sgn in (-1, 1):
                z = np.array([zt, st.t[i] + sgn * e])
                worst = max(worst, gap(st.slab(i, z), st.collar(i, z)))
                z = np.array([zt, st.t[i] + sgn * 2 * e])
                worst = max(worst, gap(st.collar(i, z), st.between(i if sgn < 0 else i + 1, z)))
    for zt in rng.uniform(-2, 2, 10):
        lo, hi = np.array([zt, -2 + 2 * e]), np.array([zt, 2 - 2 * e])
        worst = max(worst, gap(st.band(lo), st.between(1, lo)), gap(st.band(hi), st.between(st.m + 1, hi)))
    for zn in rng.uniform(-2, 2, 40):
        for side in (-2.0, 2.0):
            z = np.array([side, zn])
            name, i = st.region(zn)
            inner = st.band(z) if name == "band" else getattr(st, name)(i, z)
            worst = max(worst, gap(st.outer(z), inner))
            far = np.array([1.5 * side, zn])
            worst = max(worst, gap(st.outer(far), far))
    for zt in rng.uniform(-3, 3, 20):
        for zn in (-2.0, 2.0):
            z = np.array([zt, zn])
            worst = max(worst, gap(st.g0(z), z))
    return worst


def _gadget_gap(fmap, rng):
    """Straddle every shrink-gadget sphere and both radial-stretch spheres by 1e-13."""
    t = fmap.task
    worst = 0.0
    centers = [((t.xs - t.p) / t.R, t.rs / t.R), ((t.ys - t.q) / t.R, t.rs / t.R)]
    for cs, rs in centers:
        for c, r in zip(cs, rs):
            for rho in (r, 2 * r):
                for ang in rng.uniform(0, 2 * np.pi, 8):
                    u = np.array([np.cos(ang), np.sin(ang)])
                    a = _shrink(c + (rho - 1e-13) * u, c, r, fmap.eps)
                    b = _shrink(c + (rho + 1e-13) * u, c, r, fmap.eps)
                    worst = max(worst, float(np.linalg.norm(a - b)))
    for rho in (5 / 3, 2.0):
        for ang in rng.uniform(0, 2 * np.pi, 8):
            u = np.array([np.cos(ang), np.sin(ang)])
            worst = max(worst, float(np.linalg.norm(_psi((rho - 1e-13) * u, 2) - _psi((rho + 1e-13) * u, 2))))
    return worst


def _shortcut_gap(fmap, rng):
    """Composite versus the closed forms on the inner spheres and on the sphere of radius 2R."""
    t = fmap.task
    worst = 0.0
    for ang in rng.uniform(0, 2 * np.pi, 20):
        u = np.array([np.cos(ang), np.sin(ang)])
        x = t.p + 2 * t.R * u
        worst = max(worst, float(np.max(np.abs(fmap.composite(x) - (x - t.p + t.q)))))
        for c, y, r in zip(t.xs, t.ys, t.rs):
            x = c + r * u
            worst = max(worst, float(np.max(np.abs(fmap.composite(x) - (x - c + y)))))
    return worst


def test_criterion_5_slab_map(verdict):
    closed, cont, Ls = 0.0, 0.0, []
    for seed in range(5):
        task = random_task(seed)
        fmap = build_slab_map(task, seed=seed)
        rng = np.random.default_rng(seed)
        pts = probes(task, seed)
        for x in pts:
            if np.linalg.norm(x - task.p) > 2 * task.R:
                closed = max(closed, float(np.max(np.abs(fmap.composite(x) - (x - task.p + task.q)))))
                closed = max(closed, float(np.max(np.abs(fmap(x) - (x - task.p + task.q)))))
            for c, y, r in zip(task.xs, task.ys, task.rs):
                if np.linalg.norm(x - c) <= r:
                    closed = max(closed, float(np.max(np.abs(fmap.composite(x) - (x - c + y)))))
                    closed = max(closed, float(np.max(np.abs(fmap(x) - (x - c + y)))))
        for st in fmap.stages:
            cont = max(cont, _stage_gap(st, rng))
        cont = max(cont, _gadget_gap(fmap, rng), _shortcut_gap(fmap, rng))
        Ls.append(map_distortion(fmap, pts))
    task = identity_task(11)
    fmap = build_slab_map(task, seed=11)
    g = np.linspace(-2.2, 2.2, 24)
    grid = task.p + task.R * np.stack(np.meshgrid(g, g), axis=-1).reshape(-1, 2)
    ident = max(float(np.max(np.abs(fmap.composite(x) - x))) for x in grid)
    ok = closed <= 1e-12 and cont <= 1e-9 and ident <= 1e-9 and all(math.isfinite(L) for L in Ls)
    verdict(5, ok, f"closed-form err={closed:.3g}, interface gap={cont:.3g}, identity dev={ident:.3g}, "
                   f"max L={max(Ls):.4g}")


def test_criterion_6_ambient_embedding(verdict):
    E = normalize_for_ambient(cantor_line_net(0.2, 5, dim=2), 0.2)
    F = normalize_for_ambient(cantor_net(CantorSpec(2, 1.2), 7), 1.2)
    C = max(_constant(E, 0.2), _constant(F, 1.2, exact=False, centers=400))
    emb = build_ambient_embedding(E, F, 0.2, 1.2, C, depth=3, seed=0, mode="adaptive")
    near = float(F.tree.query(emb.apply(E.points))[0].max())
    tol = 2 * emb.D * emb.d ** 3
    rng = np.random.default_rng(0)
    pts = np.vstack([rng.uniform(-1, 1, (150, 2)), E.points[::4] + rng.normal(0, 1e-3, (8, 2))])
    stages = [emb.apply(pts, k) for k in range(emb.depth + 1)]
    unstable = 0
    for l in range(1, emb.depth + 1):
        for j, x in enumerate(pts):
            if not emb.in_union(x, l):
                unstable += sum(not np.array_equal(stages[k][j], stages[l][j]) for k in range(l, emb.depth + 1))
    L = pairwise_distortion(pts, stages[-1])
    stage_L = [pairwise_distortion(stages[k - 1], stages[k]) for k in range(1, emb.depth + 1)]
    ok = unstable == 0 and near <= tol and math.isfinite(L) and L <= 2 * max(stage_L)
    verdict(6, ok, f"C={C:.4g} d={emb.d:.4g} D={emb.D:.4g}; unstable={unstable}; "
                   f"E->F {near:.3g} <= {tol:.3g}; L={L:.4g} stage max={max(stage_L):.4g}")


def test_criterion_7_superset(verdict):
    E = cantor_line_net(0.2, 3)
    grid = np.arange(-0.5, 0.5, 2e-6)
    X = WeightedNet(np.concatenate([grid, E.points[:, 0]])[:, None], validate=False)
    C_E = _constant(E, 0.2, (E.resolution, 1.0))
    b = build_superset(E, X, 0.2, 0.5, 1.0, C_E, 2.0, depth=4, mode="adaptive")
    est = estimate_regularity(b.net, 0.5, (b.d ** 4, 1.0), centers_sample=2000)
    fset = {tuple(p) for p in b.net.points.tolist()}
    contains = all(tuple(p) in fset for p in E.points.tolist())
    jp = all(set(ball.J_prime) <= set(ball.J) for ball in b.balls)
    ok = contains and jp and all(b.audits.values()) and est.c_lower > 0 and math.isfinite(est.C_upper)
    verdict(7, ok, f"C_E={C_E:.4g} d={b.d:.4g} balls={len(b.balls)} audits={b.audits}; "
                   f"c={est.c_lower:.4g} C={est.C_upper:.4g}")


def test_criterion_8_counterexample(verdict):
    fam = build_counterexample(depth=8)
    lengths_ok = all(float(v) >= math.exp(-1) - 1e-12 for v in fam.lengths)
    mismatches = []
    for s, C in itertools.product((0.3, 0.5, 0.8), (1.0, 2.0, 4.0)):
        # lambda_m = 1/(m+2) < C^(-1/s)/4 first holds at m = floor(4 C^(1/s)) - 1
        need = math.floor(4 * C ** (1 / s)) - 1
        rep = nonregularity_witness(fam, s, C)
        expect = "EmptyRegularSubset" if need <= fam.depth else "Inconclusive"
        if rep["verdict"] != expect or (expect == "EmptyRegularSubset" and rep["level"] != need):
            mismatches.append((s, C, rep["verdict"], need))
    false_cert = []
    for s in (0.3, 0.5, 0.8, LOG2_3):
        net = cantor_net(CantorSpec(1, s), 7)
        C_own = _constant(net, s)
        for C in sorted({C_own, *(c for c in (1.0, 2.0, 4.0) if c >= C_own)}):
            if net_witness(net, s, C)["verdict"] == "EmptyRegularSubset":
                false_cert.append((s, C))
    ok = lengths_ok and not mismatches and not false_cert
    verdict(8, ok, f"level-8 length={float(fam.lengths[-1]):.12f} >= e^-1; "
                   f"witness mismatches={mismatches}; false certificates={false_cert}")


# ----------------------------------------------------------------------
def _ref_dist(a, b):
    return math.sqrt(sum((u - v) * (u - v) for u, v in zip(a, b)))


def _ref_greedy(pts, p, r, R):
    cand = sorted((i for i in range(len(pts)) if _ref_dist(pts[i], p) <= R), key=lambda i: tuple(pts[i]))
    chosen = []
    for i in cand:
        if all(_ref_dist(pts[i], pts[j]) > 2 * r for j in chosen):
            chosen.append(i)
    return cand, chosen


def test_criterion_9_oracle_equivalence(verdict):
    rng = np.random.default_rng(9)
    bad = []
    for k in range(100):
        n = int(rng.integers(2, 201))
        dim = int(rng.integers(1, 4))
        raw = rng.uniform(-1, 1, (n, dim))
        net = WeightedNet(raw, rng.uniform(0.1, 1.0, n), validate=False)
        pts = raw.tolist()
        ref_diam = max(_ref_dist(a, b) for a, b in itertools.combinations(pts, 2))
        if diameter(net) != ref_diam:
            bad.append((k, "diameter"))
        for _ in range(5):
            x = rng.uniform(-1.2, 1.2, dim)
            r = float(rng.uniform(0, 1.5))
            idx, mass = ball_query(net, x, r)
            ref = [i for i in range(n) if _ref_dist(pts[i], x) <= r]
            if idx.tolist() != ref or not math.isclose(mass, float(net.weights[ref].sum()), rel_tol=1e-12, abs_tol=0):
                bad.append((k, "ball_query"))
        img = raw @ rng.normal(size=(dim, dim)) + rng.normal(size=dim)
        ref_L = 1.0
        for i, j in itertools.combinations(range(n), 2):
            a, b = _ref_dist(pts[i], pts[j]), _ref_dist(img[i], img[j])
            ref_L = max(ref_L, b / a, a / b)
        if pairwise_distortion(raw, img) != ref_L:
            bad.append((k, "distortion"))
        p = int(rng.integers(n))
        r = float(rng.uniform(0.02, 0.3))
        R = float(rng.uniform(r * 1.01, 2.0))
        pk = greedy_packing(net, p, r, R)
        cand, chosen = _ref_greedy(pts, pts[p], r, R)
        valid = all(_ref_dist(pts[i], pts[j]) > 2 * r for i, j in itertools.combinations(chosen, 2))
        covered = all(min(_ref_dist(pts[i], pts[j]) for j in pk.centers) <= 5 * r for i in cand)
        if pk.centers.tolist() != chosen or not valid or not covered or not all(verify_packing(net, pk).values()):
            bad.append((k, "packing"))
    verdict(9, not bad, f"100 nets, mismatches={bad[:5]}")


# ----------------------------------------------------------------------
def _cli(argv, out, codes=None):
    code = main(argv + ["--out", str(out)])
    if codes is not None:
        codes[argv[0]] = code
    return {p.name: p.read_bytes() for p in sorted(out.iterdir())}


def test_criterion_10_determinism(tmp_path, capsys, verdict):
    inp = tmp_path / "in"
    inp.mkdir()
    io.dump(cantor_net(CantorSpec(1, LOG2_3), 6).to_dict(), inp / "c.json")
    io.dump(cantor_net(CantorSpec(1, 0.4), 8).to_dict(), inp / "e.json")
    io.dump(cantor_net(CantorSpec(1, 0.8), 12).to_dict(), inp / "f.json")
    io.dump(cantor_line_net(0.2, 4, dim=2).to_dict(), inp / "e2.json")
    io.dump(cantor_net(CantorSpec(2, 1.2), 5).to_dict(), inp / "f2.json")
    E = cantor_line_net(0.2, 3)
    grid = np.arange(-0.5, 0.5, 1e-5)
    io.dump(E.to_dict(), inp / "e1.json")
    io.dump(WeightedNet(np.concatenate([grid, E.points[:, 0]])[:, None], validate=False).to_dict(), inp / "x.json")
    io.dump(random_task(3).to_dict(), inp / "task.json")
    c = str(inp / "c.json")
    runs = {
        "gen-cantor": ["gen-cantor", "--t", "0.5", "--depth", "5"],
        "verify-regularity": ["verify-regularity", "--net", c, "--s", repr(LOG2_3)],
        "pack": ["pack", "--net", c, "--center-index", "3", "--r", "0.02", "--R", "0.5"],
        "gap": ["gap", "--net", c, "--r", "0.01", "--s", repr(LOG2_3), "--lam", "9", "--D-cap", "1e4"],
        "embed": ["embed", "--source", str(inp / "e.json"), "--target", str(inp / "f.json"),
                  "--s", "0.4", "--t", "0.8", "--depth", "2", "--seed", "4"],
        "ambient-map": ["ambient-map", "--task", str(inp / "task.json"), "--probes", "200", "--seed", "2"],
        "ambient-embed": ["ambient-embed", "--E", str(inp / "e2.json"), "--F", str(inp / "f2.json"),
                          "--s", "0.2", "--t", "1.2", "--C", "4", "--depth", "2", "--probes", "100"],
        "superset": ["superset", "--E", str(inp / "e1.json"), "--X", str(inp / "x.json"), "--s", "0.2",
                     "--t", "0.5", "--u", "1.0", "--C-E", "2", "--C-X", "2", "--depth", "2"],
        "counterexample": ["counterexample", "--depth", "3", "--s", "0.5", "--C", "1"],
    }
    differ, codes = [], {}
    for name, argv in runs.items():
        out = tmp_path / name
        first = _cli(argv, out, codes)
        second = _cli(argv, out)
        if first != second:
            differ.append(name)
    corr = tmp_path / "embed" / "correspondence.json"
    out = tmp_path / "distortion"
    if _cli(["distortion", "--corr", str(corr)], out) != _cli(["distortion", "--corr", str(corr)], out):
        differ.append("distortion")
    capsys.readouterr()
    failed = sorted(k for k, v in codes.items() if v != 0)
    verdict(10, not differ and not failed,
            f"{len(runs) + 1} pipelines rerun; differing={differ}; nonzero exits={failed}")
