"""``regset`` command line: run a pipeline, write artifacts, exit 0 iff every verdict passes."""

from __future__ import annotations

import argparse
import math
import os
import sys
from pathlib import Path

import numpy as np

from . import serialize as io
from .ambient import (BallTranslationTask, build_ambient_embedding, build_slab_map,
                      normalize_for_ambient)
from .cantor import NODE_BUDGET, CantorSpec, cantor_net
from .covering import (greedy_packing, lambda_gap_cover, packing_count_bounds, ring_cover,
                       verify_gap_cover, verify_packing)
from .embeddings import (bracketing_violations, build_embedding, build_subset_hierarchy,
                         pairwise_distortion, subset_map, verify_partition)
from .errors import InvalidParams, RegsetError
from .metric import (RESOLUTION_FACTOR, WeightedNet, diameter, estimate_regularity, exact_regularity,
                     rescale_to_unit, to_csv)
from .supersets import build_counterexample, build_superset, nonregularity_witness

REPORT_SCHEMA = "regset.report/1"
EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2
# sampled centers for constants the user did not supply
CENTER_SAMPLE = 2000


class Run:
    """Collects measurements, verdicts and artifact files for one command."""

    def __init__(self, command, config, out):
        self.command = command
        self.config = config
        self.out = Path(out)
        self.measured = {}
        self.verdicts = {}
        self.artifacts = []

    def verdict(self, name, ok, reason="", witness=None, skipped=False):
        status = "skipped" if skipped else ("pass" if ok else "fail")
        entry = {"status": status, "reason": reason}
        if witness is not None:
            entry["witness"] = witness
        self.verdicts[name] = entry

    def write_json(self, name, obj):
        self.out.mkdir(parents=True, exist_ok=True)
        io.dump(obj, self.out / name)
        self.artifacts.append(name)

    def path(self, name):
        self.out.mkdir(parents=True, exist_ok=True)
        self.artifacts.append(name)
        return self.out / name

    @property
    def passed(self):
        return all(v["status"] != "fail" for v in self.verdicts.values())

    def report(self, error=None):
        rep = {"schema": REPORT_SCHEMA, "command": self.command, "config": self.config,
               "measured": self.measured, "verdicts": self.verdicts, "artifacts": self.artifacts}
        if error is not None:
            rep["error"] = error
        return rep


def _threads():
    raw = os.environ.get("REGSET_THREADS")
    if raw is None:
        return 1
    try:
        val = int(raw)
    except ValueError:
        raise InvalidParams("REGSET_THREADS must be a positive integer", value=raw) from None
    if val < 1:
        raise InvalidParams("REGSET_THREADS must be a positive integer", value=raw)
    return val


def _vector(text):
    return np.array([float(v) for v in text.split(",")], dtype=float)


def _window(net, lo=None, hi=None):
    hi = diameter(net) if hi is None else hi
    if lo is None:
        lo = RESOLUTION_FACTOR * net.resolution
        if not lo < hi:
            lo = net.resolution
    return float(lo), float(hi)


def _measured_constant(net, s, centers=CENTER_SAMPLE, seed=0):
    est = estimate_regularity(net, s, _window(net), centers_sample=centers, seed=seed)
    return est.normalized_constant


def _svg_ok(dim):
    return dim <= 2


# ----------------------------------------------------------------------
def cmd_gen_cantor(a, run):
    spec = CantorSpec(a.n, a.t, a=a.a, group=a.group)
    net = cantor_net(spec, a.depth, budget=a.budget_nodes)
    run.measured.update(points=net.size, d=spec.d, branching=spec.branching, total_mass=net.total_mass)
    run.verdict("mass_equation", spec.check() < 1e-12, "branching * d^t = 1")
    run.write_json("net.json", net.to_dict())
    to_csv(net, run.path("net.csv"))
    if _svg_ok(net.dim):
        from .plotting import plot_net

        plot_net(net.points, run.path("net.svg"), title=f"C(t={a.t:g})")


def cmd_verify_regularity(a, run):
    net = io.load_net(a.net)
    window = _window(net, a.r_min, a.r_max)
    if a.exact:
        est = exact_regularity(net, a.s, window)
    else:
        est = estimate_regularity(net, a.s, window, centers_sample=a.centers, seed=a.seed)
    run.measured["regularity"] = est.to_dict()
    run.measured["normalized_constant"] = est.normalized_constant
    finite = est.c_lower > 0 and math.isfinite(est.C_upper)
    run.verdict("finite_constants", finite, "0 < c_lower and C_upper < inf",
                None if finite else {"lower": list(est.lower_witness)})
    if a.C is not None:
        ok = est.normalized_constant <= a.C
        run.verdict("constant_bound", ok, f"C_upper / c_lower <= {a.C!r}",
                    None if ok else {"upper": list(est.upper_witness), "lower": list(est.lower_witness)})


def cmd_pack(a, run):
    net = io.load_net(a.net)
    p = int(a.center_index) if a.center_index is not None else _vector(a.center)
    pk = greedy_packing(net, p, a.r, a.R)
    chk = verify_packing(net, pk)
    run.measured.update(m=pk.m, r=a.r, R=a.R)
    run.verdict("disjoint", chk["disjoint"], "pairwise center distance > 2r")
    run.verdict("covering", chk["covering"], "every point within 5r of a center")
    if a.C is not None and a.s is not None:
        lo, hi = packing_count_bounds(a.s, a.C, a.R, a.r)
        run.measured["count_bounds"] = [lo, hi]
        run.verdict("count_bounds", lo <= pk.m <= hi, "Vitali-type count bracket")
    run.write_json("packing.json", {"schema": "regset.packing/1", **pk.to_dict(net),
                                    "verified": all(chk.values())})
    if _svg_ok(net.dim):
        from .plotting import plot_balls

        plot_balls(net.points, net.points[pk.centers], [a.r] * pk.m, run.path("packing.svg"))


def cmd_gap(a, run):
    net = io.load_net(a.net)
    C = a.C if a.C is not None else _measured_constant(net, a.s)
    if a.lam is None:
        cover = ring_cover(net, a.r, a.s, C, mode=a.mode, D_cap=a.D_cap)
    else:
        cover = lambda_gap_cover(net, a.r, a.s, C, a.lam, mode=a.mode, D_cap=a.D_cap)
    chk = verify_gap_cover(net, cover)
    run.measured.update(m=cover.m, C=C, D=cover.D)
    for key, ok in chk.items():
        run.verdict(key, ok, "exact gap-cover invariant")
    if a.mode == "strict" or a.check_count:
        bound = C * diameter(net) ** a.s / a.r ** a.s
        run.verdict("count_bound", cover.m <= bound, "m <= C d(E)^s / r^s")
    run.write_json("cover.json", {"schema": "regset.cover/1", **cover.to_dict(net),
                                  "verified": all(chk.values())})
    if _svg_ok(net.dim):
        from .plotting import plot_balls

        plot_balls(net.points, net.points[cover.centers], cover.rhos, run.path("cover.svg"))


def cmd_embed(a, run):
    src = io.load_net(a.source)
    C_E = a.C_E if a.C_E is not None else _measured_constant(src, a.s)
    run.measured["C_E"] = C_E
    if a.target == "cantor":
        n = a.n or src.dim
        h, spec = build_subset_hierarchy(src, a.s, C_E, a.t, n, a.depth, a.mode, budget=a.budget_nodes)
        corr = subset_map(h, spec, seed=a.seed)
        bad = bracketing_violations(h)
        run.measured.update(group=spec.group, d=spec.d, L_bound=corr.L_bound, L_grouped=corr.L_grouped,
                            L_measured=corr.L_measured, leaves=len(h.leaves()))
        run.verdict("distortion_bound", corr.L_measured <= corr.L_bound, "L_measured <= max(sqrt(n)/d, 4/(1-2d))")
        run.verdict("grouped_bound", corr.L_measured <= corr.L_grouped, "L_measured <= max(sqrt(n)/d, 4/sep)")
        run.verdict("bracketing", not bad, "d^(l+1) <= dist <= 4 d^l on leaf pairs",
                    None if not bad else {"pair": [list(bad[0][0]), list(bad[0][1])], "dist": bad[0][2]})
    else:
        tgt = io.load_net(a.target)
        E, F = rescale_to_unit(src, a.s), rescale_to_unit(tgt, a.t)
        C_F = a.C_F if a.C_F is not None else _measured_constant(F, a.t)
        part, hF, corr = build_embedding(E, F, a.s, a.t, C_E, C_F, a.depth, a.mode,
                                         budget=a.budget_nodes, seed=a.seed)
        chk = verify_partition(E, part, corr.source)
        run.measured.update(C_F=C_F, d=corr.source.d, D=corr.source.D, L_bound=corr.L_bound,
                            L_measured=corr.L_measured, leaves=len(corr.source.leaves()))
        for key, ok in chk.items():
            run.verdict(key, ok, "exact cell-partition invariant")
        run.verdict("distortion_bound", corr.L_measured <= corr.L_bound, "L_measured <= 4D/d")
    _, s_pts, t_pts = corr.leaf_arrays()
    run.write_json("hierarchy.json", corr.to_dict())
    run.write_json("correspondence.json", io.correspondence_dict(s_pts, t_pts))


def cmd_distortion(a, run):
    src, dst = io.load_correspondence(a.corr)
    L = pairwise_distortion(src, dst, seed=a.seed)
    run.measured.update(L=L, pairs=src.shape[0] * (src.shape[0] - 1) // 2)
    run.verdict("finite", math.isfinite(L), "no collapsed pairs")
    if a.L is not None:
        run.verdict("bound", L <= a.L, f"L <= {a.L!r}")


def cmd_ambient_map(a, run):
    task = BallTranslationTask.from_dict(io.load(a.task, "regset.task/1"))
    fmap = build_slab_map(task, seed=a.seed, mode=a.mode)
    pts = io.load_points(a.probe) if a.probe else _probe_cloud(task, a.seed, a.probes)
    img = np.array([fmap(x) for x in pts])
    L = pairwise_distortion(pts, img)
    inner = [float(np.max(np.abs(fmap(x) - (x - c + y))))
             for c, y, r in zip(task.xs, task.ys, task.rs)
             for x in pts[np.linalg.norm(pts - c, axis=1) <= r]]
    outer = [float(np.max(np.abs(fmap(x) - (x - task.p + task.q))))
             for x in pts[np.linalg.norm(pts - task.p, axis=1) > 2 * task.R]]
    run.measured.update(eps=fmap.eps, stages=len(fmap.stages), L=L,
                        inner_error=max(inner, default=0.0), outer_error=max(outer, default=0.0))
    run.verdict("finite_distortion", math.isfinite(L), "no probe collisions")
    run.verdict("inner_translation", max(inner, default=0.0) <= 1e-12, "f(x) = x - x_i + y_i",
                skipped=not inner)
    run.verdict("outer_translation", max(outer, default=0.0) <= 1e-12, "f(x) = x - p + q",
                skipped=not outer)
    io.write_points_csv(img, run.path("images.csv"))
    run.write_json("map.json", fmap.to_dict())
    if _svg_ok(task.n):
        from .plotting import plot_ambient

        plot_ambient(pts, img, run.path("ambient.svg"))


def _probe_cloud(task, seed, count):
    rng = np.random.default_rng(seed)
    return task.p + task.R * rng.uniform(-2.5, 2.5, (count, task.n))


def _pad(net, dim):
    """Isometric inclusion R^k -> R^dim by zero coordinates."""
    if net.dim >= dim:
        return net
    pts = np.hstack([net.points, np.zeros((net.size, dim - net.dim))])
    return WeightedNet(pts, net.weights, resolution=net.resolution, validate=False)


def cmd_ambient_embed(a, run):
    E0, F0 = io.load_net(a.E), io.load_net(a.F)
    n = max(E0.dim, F0.dim)
    run.measured["padded"] = [E0.dim < n, F0.dim < n]
    E = normalize_for_ambient(_pad(E0, n), a.s)
    F = normalize_for_ambient(_pad(F0, n), a.t)
    C = a.C if a.C is not None else max(_measured_constant(E, a.s), _measured_constant(F, a.t))
    emb = build_ambient_embedding(E, F, a.s, a.t, C, depth=a.depth, seed=a.seed, mode=a.mode)
    imgs = emb.apply(E.points)
    near = F.tree.query(imgs)[0]
    tol = 2 * emb.D * emb.d ** emb.depth
    rng = np.random.default_rng(a.seed)
    probes = rng.uniform(-1, 1, (a.probes, E.dim))
    stages = [probes] + [emb.apply(probes, k) for k in range(1, emb.depth + 1)]
    unstable = 0
    for l in range(1, emb.depth + 1):
        for j, x in enumerate(probes):
            if not emb.in_union(x, l):
                unstable += sum(not np.array_equal(stages[k][j], stages[l][j]) for k in range(l, emb.depth + 1))
    L = pairwise_distortion(probes, stages[-1])
    stage_L = [pairwise_distortion(stages[k - 1], stages[k]) for k in range(1, emb.depth + 1)]
    step = float(np.max(np.linalg.norm(stages[-1] - stages[-2], axis=1)))
    step_tol = 4 * emb.D * emb.d ** (emb.depth - 1)
    run.measured.update(d=emb.d, D=emb.D, C=C, max_E_to_F=float(near.max()), tolerance=tol,
                        L=L, stage_L=stage_L, last_step=step, last_step_tolerance=step_tol)
    run.verdict("convergence", step <= step_tol, "|f_K - f_(K-1)| <= 4 D d^(K-1) on probes")
    run.verdict("E_into_F", bool(near.max() <= tol), "every E image within 2 D d^K of F")
    run.verdict("exterior_stability", unstable == 0, "f_k = f_l outside B_l")
    run.verdict("composition_distortion", math.isfinite(L) and L <= 2 * max(stage_L),
                "L(f_K) <= 2 max stage L")
    io.write_points_csv(imgs, run.path("images.csv"))
    run.write_json("embedding.json", emb.to_dict())
    if _svg_ok(E.dim):
        from .plotting import plot_ambient

        plot_ambient(probes, stages[-1], run.path("ambient.svg"))


def cmd_superset(a, run):
    E0, X0 = io.load_net(a.E), io.load_net(a.X)
    diam = diameter(E0)
    E = WeightedNet(E0.points / diam, E0.weights / diam ** a.s, resolution=E0.resolution / diam,
                    validate=False)
    X = WeightedNet(X0.points / diam, X0.weights / diam ** a.u, resolution=X0.resolution / diam,
                    validate=False)
    C_E = a.C_E if a.C_E is not None else _measured_constant(E, a.s)
    C_X = a.C_X if a.C_X is not None else _measured_constant(X, a.u)
    b = build_superset(E, X, a.s, a.t, a.u, C_E, C_X, a.depth, a.mode)
    est = estimate_regularity(b.net, a.t, (b.d ** b.depth, diameter(b.net)), centers_sample=CENTER_SAMPLE)
    run.measured.update(d=b.d, m=b.m[1:], points=b.net.size, regularity=est.to_dict(), C_E=C_E, C_X=C_X)
    for key, ok in b.audits.items():
        run.verdict(key, ok, "exact superset audit")
    run.verdict("t_regular", est.c_lower > 0 and math.isfinite(est.C_upper), "finite constants on [d^K, d(F)]")
    run.write_json("superset.json", b.to_dict(X))
    if _svg_ok(X.dim):
        from .plotting import plot_net

        plot_net(b.net.points, run.path("superset.svg"), weights=b.net.weights)


def cmd_counterexample(a, run):
    fam = build_counterexample(depth=a.depth)
    prod = fam.target_product()
    total = fam.lengths[-1]
    run.measured.update(depth=fam.depth, l=fam.l, counts=fam.counts, total_length=float(total),
                        target_product=float(prod))
    run.verdict("measure", float(total) >= float(prod) - 1e-12, "level total length >= product of t_k")
    run.write_json("intervals.json", fam.to_dict())
    if a.s is not None:
        wit = nonregularity_witness(fam, a.s, a.C)
        run.write_json("witness.json", wit)
        run.measured["witness"] = wit["verdict"]
        run.verdict("witness", True, wit["verdict"], skipped=wit["verdict"] == "Inconclusive")
    if fam.levels is not None:
        from .plotting import plot_intervals

        plot_intervals(fam.levels, run.path("intervals.svg"))


COMMANDS = {
    "gen-cantor": cmd_gen_cantor,
    "pack": cmd_pack,
    "gap": cmd_gap,
    "embed": cmd_embed,
    "ambient-map": cmd_ambient_map,
    "ambient-embed": cmd_ambient_embed,
    "superset": cmd_superset,
    "counterexample": cmd_counterexample,
    "verify-regularity": cmd_verify_regularity,
    "distortion": cmd_distortion,
}


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--mode", choices=("strict", "adaptive"), default="adaptive")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--budget-nodes", type=int, default=NODE_BUDGET)
    common.add_argument("--out", default="regset-out")

    ap = argparse.ArgumentParser(prog="regset", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-cantor", parents=[common], help="corner Cantor net")
    p.add_argument("--n", type=int, default=1)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--depth", type=int, default=6)
    p.add_argument("--a", type=float, default=1.0)
    p.add_argument("--group", type=int, default=1)

    p = sub.add_parser("verify-regularity", parents=[common], help="estimate regularity constants")
    p.add_argument("--net", required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--C", type=float)
    p.add_argument("--r-min", type=float)
    p.add_argument("--r-max", type=float)
    p.add_argument("--exact", action="store_true")
    p.add_argument("--centers", type=int, default=CENTER_SAMPLE, help="sampled centers")

    p = sub.add_parser("pack", parents=[common], help="greedy disjoint packing")
    p.add_argument("--net", required=True)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--center")
    g.add_argument("--center-index", type=int)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--R", type=float, required=True)
    p.add_argument("--s", type=float)
    p.add_argument("--C", type=float)

    p = sub.add_parser("gap", parents=[common], help="annulus-gap cover")
    p.add_argument("--net", required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--C", type=float)
    p.add_argument("--lam", type=float)
    p.add_argument("--D-cap", type=float, help="adaptive cap on rho / r")
    p.add_argument("--check-count", action="store_true")

    p = sub.add_parser("embed", parents=[common], help="hierarchical bilipschitz correspondence")
    p.add_argument("--source", required=True)
    p.add_argument("--target", required=True, help="net file, or 'cantor'")
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--n", type=int)
    p.add_argument("--C-E", type=float)
    p.add_argument("--C-F", type=float)

    p = sub.add_parser("distortion", parents=[common], help="distortion of a correspondence file")
    p.add_argument("--corr", required=True)
    p.add_argument("--L", type=float)

    p = sub.add_parser("ambient-map", parents=[common], help="ball-translation map of R^n")
    p.add_argument("--task", required=True)
    p.add_argument("--probe")
    p.add_argument("--probes", type=int, default=1000)

    p = sub.add_parser("ambient-embed", parents=[common], help="global map sending E near F")
    p.add_argument("--E", required=True)
    p.add_argument("--F", required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--C", type=float)
    p.add_argument("--depth", type=int, default=3)
    p.add_argument("--probes", type=int, default=1000)

    p = sub.add_parser("superset", parents=[common], help="regular superset inside X")
    p.add_argument("--E", required=True)
    p.add_argument("--X", required=True)
    p.add_argument("--s", type=float, required=True)
    p.add_argument("--t", type=float, required=True)
    p.add_argument("--u", type=float, required=True)
    p.add_argument("--C-E", type=float)
    p.add_argument("--C-X", type=float)
    p.add_argument("--depth", type=int, default=3)

    p = sub.add_parser("counterexample", parents=[common], help="nested interval families")
    p.add_argument("--depth", type=int, default=8)
    p.add_argument("--s", type=float)
    p.add_argument("--C", type=float, default=1.0)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    config = {k: v for k, v in sorted(vars(args).items())}
    run = Run(args.command, config, args.out)
    try:
        config["threads"] = _threads()
        COMMANDS[args.command](args, run)
    except RegsetError as exc:
        run.artifacts.append("report.json")
        rep = run.report(error=exc.to_dict())
        run.out.mkdir(parents=True, exist_ok=True)
        io.dump(rep, run.out / "report.json")
        sys.stdout.write(io.dumps(rep))
        return EXIT_ERROR
    run.artifacts.append("report.json")
    rep = run.report()
    run.out.mkdir(parents=True, exist_ok=True)
    io.dump(rep, run.out / "report.json")
    sys.stdout.write(io.dumps(rep))
    return EXIT_PASS if run.passed else EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
