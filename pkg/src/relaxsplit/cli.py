"""Batch experiment runner.

Every subcommand builds one of the application problems, runs the
splitting solver, and leaves plain files behind: a trace CSV (plus a
plot-ready companion with log10 columns), a summary JSON record, and
whatever the driver naturally produces (MatrixMarket vectors, PGM
images, partition lines, sweep tables).  Outputs are byte-identical
across reruns of the same flags; wall-clock columns are zeroed unless
--timing is passed.

Exit status: 0 when the final solve converged, 2 when it did not,
1 on a usage error (nothing is written in that case).
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys

import numpy as np

from . import linops, oracles
from .apps import cluster, lad, pgm, phase, rpca, sslr, ssp
from .relax import TRACE_HEADER, SolverTrace
from .solvers import (ContinuationSchedule, SolveOptions, admm, continuation,
                      default_w0, rs_pgd)

DEFAULT_RHO_GRID = "1,2,3,4,6,10,16,25,40,63,100"


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on bad flags; the contract here is 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _schedule(text):
    parts = text.split(":")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(
            f"expected nu0:factor:numin, got {text!r}")
    try:
        return tuple(float(p) for p in parts)
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric schedule {text!r}")


def _float_list(text):
    try:
        vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"non-numeric grid {text!r}")
    if not vals:
        raise argparse.ArgumentTypeError("empty grid")
    return vals


# ---------------------------------------------------------------- output

def _concat_rows(traces):
    """Renumber staged traces into one sequence of rows.

    Warm-start rows of later stages repeat the previous iterate and are
    dropped, so `iter` counts actual solver steps across the whole run.
    """
    rows = []
    k = 0
    for t, tr in enumerate(traces):
        for i in range(len(tr)):
            if t > 0 and i == 0:
                continue
            rows.append((k, tr.objective[i], tr.optimality[i], tr.gap[i],
                         tr.inner_iters[i], tr.ms[i]))
            k += 1
    return rows


def _log10(v):
    return repr(math.log10(v)) if v > 0 else "nan"


def _write_trace(path, rows, zero_ms):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(TRACE_HEADER)
        for k, obj, wit, gap, inner, ms in rows:
            wr.writerow([k, repr(obj), repr(wit), repr(gap), inner,
                         "0.0" if zero_ms else repr(ms)])


def _write_plot(path, rows):
    with open(path, "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(["iter", "objective", "optimality",
                     "log10_objective", "log10_optimality"])
        for k, obj, wit, _gap, _inner, _ms in rows:
            wr.writerow([k, repr(obj), repr(wit), _log10(obj), _log10(wit)])


def _write_summary(path, summary, timing):
    out = dict(summary)
    if not timing:
        out["wall_ms"] = 0.0
    with open(path, "w") as f:
        json.dump(out, f, sort_keys=True, indent=2)
        f.write("\n")


def _emit_run(args, traces, extras=None, converged=None):
    """Write trace.csv / plot.csv / summary.json; return the exit code."""
    if isinstance(traces, SolverTrace):
        traces = [traces]
    if converged is None:
        converged = bool(traces[-1].converged)
    rows = _concat_rows(traces)
    summary = {
        "iterations": int(rows[-1][0]),
        "final_objective": float(rows[-1][1]),
        "final_gap": float(rows[-1][3]),
        "converged": bool(converged),
        "wall_ms": float(sum(tr.ms[-1] for tr in traces)),
    }
    summary.update(extras or {})
    os.makedirs(args.out, exist_ok=True)
    trace_path = args.trace_out or os.path.join(args.out, "trace.csv")
    parent = os.path.dirname(trace_path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    _write_trace(trace_path, rows, zero_ms=not args.timing)
    _write_plot(os.path.join(args.out, "plot.csv"), rows)
    _write_summary(os.path.join(args.out, "summary.json"), summary,
                   args.timing)
    return 0 if converged else 2


def _emit_table(args, header, rows, extras, converged):
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "table.csv"), "w", newline="") as f:
        wr = csv.writer(f)
        wr.writerow(header)
        for row in rows:
            wr.writerow([v if isinstance(v, int) else repr(float(v))
                         for v in row])
    summary = {"rows": len(rows), "converged": bool(converged),
               "wall_ms": 0.0}
    summary.update(extras or {})
    _write_summary(os.path.join(args.out, "summary.json"), summary,
                   args.timing)
    return 0 if converged else 2


def _opts(args, max_iter, tol, **kw):
    return SolveOptions(
        max_iter=max_iter if args.max_iter is None else args.max_iter,
        tol_optimality=tol if args.tol is None else args.tol, **kw)


# ------------------------------------------------------------- commands

def _cmd_lad(args):
    nu = args.nu
    if args.data:
        A, b, header = lad.load_instance(args.data)
        if nu is None and "nu" in header:
            nu = float(header["nu"])
    else:
        A, b, _ = lad.generate(args.m, args.n,
                               outlier_fraction=args.outliers,
                               seed=args.seed)
    p = lad.build_problem(A, b, 1.0 if nu is None else nu)
    w, x, trace = rs_pgd(p, opts=_opts(args, 1000, 1e-10))
    code = _emit_run(args, trace,
                     {"l1_objective": lad.l1_objective(A, b, x)})
    linops.save_vector(os.path.join(args.out, "x.mtx"), x)
    return code


def _cmd_phase(args):
    inst = phase.random_instance(args.n, args.k, seed=args.seed)
    x, trace = phase.solve(inst, nu=args.nu, init_iters=args.init_iters,
                           seed=args.seed, opts=_opts(args, 200, 1e-22))
    err = phase.phase_error(x, inst.x_true)
    code = _emit_run(args, trace, {"phase_error": float(err)})
    linops.save_vector(os.path.join(args.out, "x.mtx"), x)
    return code


def _cmd_phase_trimmed(args):
    inst = phase.random_instance(args.n, args.k, seed=args.seed)
    inst = phase.corrupt(inst, args.corrupt_frac, value=args.corrupt_value,
                         seed=args.seed)
    x, v, trace = phase.trimmed_solve(
        inst, args.tau, gamma=args.gamma, nu=args.nu,
        init_iters=args.init_iters, seed=args.seed,
        opts=_opts(args, 300, 1e-22))
    err = phase.phase_error(x, inst.x_true)
    code = _emit_run(args, trace, {"phase_error": float(err),
                                   "tau": float(args.tau)})
    linops.save_vector(os.path.join(args.out, "x.mtx"), x)
    linops.save_vector(os.path.join(args.out, "weights.mtx"), v)
    return code


def _cmd_sslr(args):
    labeled = args.k if args.k is not None else max(1, round(0.02 * args.m))
    opts = _opts(args, 500, 1e-14)
    if args.gamma_grid is not None:
        rows = []
        all_conv = True
        for g in args.gamma_grid:
            accs, its, objs = [], [], []
            for i in range(args.seeds):
                train, labels, l, test, test_labels = sslr.generate(
                    args.m, args.n, labeled, seed=args.seed + i,
                    sep=args.sep)
                p = sslr.build_problem(train, labels[:l], args.lam, g,
                                       args.nu)
                w, x, tr = rs_pgd(p, opts=opts)
                accs.append(sslr.accuracy(x, test, test_labels))
                its.append(tr.iterations)
                objs.append(tr.objective[-1])
                all_conv = all_conv and tr.converged
            rows.append((g, np.mean(accs), np.var(accs), np.mean(its),
                         np.mean(objs)))
        return _emit_table(
            args,
            ["gamma", "mean_accuracy", "var_accuracy", "mean_iterations",
             "mean_final_objective"],
            rows, {"seeds": args.seeds, "labeled": int(labeled)}, all_conv)
    train, labels, l, test, test_labels = sslr.generate(
        args.m, args.n, labeled, seed=args.seed, sep=args.sep)
    p = sslr.build_problem(train, labels[:l], args.lam, args.gamma, args.nu)
    w, x, trace = rs_pgd(p, opts=opts)
    code = _emit_run(args, trace, {
        "test_accuracy": sslr.accuracy(x, test, test_labels),
        "labeled": int(l),
    })
    linops.save_vector(os.path.join(args.out, "x.mtx"), x)
    return code


def _cmd_ssp(args):
    inst = ssp.generate(args.n, seed=args.seed)
    nu0, factor, nu_min = args.schedule or (1.0, 0.2, 1e-5)
    sched = ContinuationSchedule(
        nu0, factor, nu_min,
        _opts(args, 2000, 1e-24, tol_objective_delta=1e-15))
    x, traces = ssp.solve(inst, schedule=sched)
    x_vi = ssp.value_iteration(inst)
    pol = ssp.extract_policy(x, inst)
    code = _emit_run(args, traces,
                     {"vi_gap": float(np.max(np.abs(x - x_vi)))})
    with open(os.path.join(args.out, "policy.txt"), "w") as f:
        f.write(" ".join(str(int(a)) for a in pol) + "\n")
    linops.save_vector(os.path.join(args.out, "x.mtx"), x)
    return code


def _cmd_cluster(args):
    pts, planted = cluster.generate(args.clusters, args.per_cluster,
                                    args.dim, seed=args.seed)
    p = cluster.build_problem(pts, args.lam, nu=args.nu, kappa=args.kappa)
    # start from the data: w^0 = A u, so the first trace row is the relaxed
    # objective at x = u and the run documents a descent from the raw points
    w, x, trace = rs_pgd(
        p, w0=default_w0(p, pts.reshape(-1)),
        opts=_opts(args, 2000, 1e-16, tol_objective_delta=1e-14))
    labels = cluster.partition_from_w(w, pts.shape[0], args.dim)
    code = _emit_run(args, trace, {
        "num_clusters_found": int(labels.max() + 1),
        "matches_planted": bool(cluster.partitions_agree(labels, planted)),
    })
    with open(os.path.join(args.out, "partition.txt"), "w") as f:
        f.write(" ".join(str(int(c)) for c in labels) + "\n")
    return code


def _cmd_rpca(args):
    if args.data:
        D = linops.load_matrix(args.data)
        background = None
    else:
        D, background, _spikes = rpca.generate(args.m, args.n, args.rank,
                                               seed=args.seed)
    nu0, factor, nu_min = args.schedule or (1.0, 0.4, 2e-3)
    L, R, W, traces = rpca.solve_annealed(D, args.rank, nu0=nu0,
                                          factor=factor, nu_min=nu_min)
    L, R, W, polish = rpca.rpca_solve(
        D, args.rank, nu_min,
        sweeps=100 if args.max_iter is None else args.max_iter,
        tol=1e-10 if args.tol is None else args.tol, factors=(L, R))
    traces.append(polish)
    fg = rpca.foreground(D, W, L, R)
    extras = {"rank": int(args.rank), "nu_final": float(nu_min)}
    if background is not None:
        extras["background_error"] = float(
            np.linalg.norm(L @ R - background)
            / np.linalg.norm(background))
    code = _emit_run(args, traces, extras, converged=polish.converged)
    pgm.write_pgm(os.path.join(args.out, "background.pgm"), L @ R)
    pgm.write_pgm(os.path.join(args.out, "foreground.pgm"), fg)
    pgm.write_pgm(os.path.join(args.out, "mask.pgm"),
                  rpca.foreground_mask(fg).astype(float))
    return code


def _cmd_admm_compare(args):
    A, b, _ = lad.generate(args.m, args.n, seed=args.seed)
    tol = 1e-6 if args.tol is None else args.tol
    max_iter = 20000 if args.max_iter is None else args.max_iter
    # each solver is scored against its own limit: rs against the relaxed
    # fixed point it stops at, admm against the exact l1 regression
    # solution it converges to
    x_exact, _ = oracles.lad_reference(A, b)
    rows = []
    all_conv = True
    for rho in args.rho_grid:
        nu = 1.0 / rho
        p = lad.build_problem(A, b, nu)
        w, x_rs, rtr = rs_pgd(p, opts=SolveOptions(
            max_iter=max_iter, tol_optimality=1e-14, keep_iterates=True))
        x_adm, w_adm, atr = admm(p.h, p.A, p.g, rho, opts=SolveOptions(
            max_iter=max_iter, tol_optimality=1e-12, keep_iterates=True))
        rs_path = rtr.meta["x_path"]
        adm_path = atr.meta["x_path"]
        rs_k = oracles.iterations_to_limit(rs_path, rs_path[-1], tol)
        adm_k = oracles.iterations_to_limit(adm_path, x_exact, tol)
        rows.append((rho, nu, rs_k, adm_k,
                     lad.l1_objective(A, b, x_rs),
                     lad.l1_objective(A, b, x_adm)))
        # a count equal to the path length means the run was cut off
        # before reaching its limit ball, so the number is censored
        all_conv = all_conv and rtr.converged and adm_k < len(adm_path)
    return _emit_table(
        args,
        ["rho", "nu", "rs_iters", "admm_iters", "rs_objective",
         "admm_objective"],
        rows, {"tol": float(tol)}, all_conv)


def _cmd_continuation(args):
    A, b, _ = lad.generate(args.m, args.n, outlier_fraction=args.outliers,
                           seed=args.seed)
    nu0, factor, nu_min = args.schedule or (1.0, 0.5, 0.01)
    sched = ContinuationSchedule(nu0, factor, nu_min,
                                 _opts(args, 2000, 1e-18))
    p = lad.build_problem(A, b, nu0)
    w, x, traces = continuation(p, sched)
    code = _emit_run(args, traces, {
        "l1_objective": lad.l1_objective(A, b, x),
        "coupling_gap": float(np.linalg.norm(p.A.apply(x) - w)),
        "nu_final": float(sched.stages()[-1]),
    })
    linops.save_vector(os.path.join(args.out, "x.mtx"), x)
    return code


# --------------------------------------------------------------- parser

def _build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--out", default=".", metavar="DIR")
    common.add_argument("--trace-out", dest="trace_out", metavar="PATH")
    common.add_argument("--max-iter", dest="max_iter", type=int)
    common.add_argument("--tol", type=float)
    common.add_argument("--timing", action="store_true",
                        help="record wall-clock columns instead of zeros")

    parser = _Parser(prog="relaxsplit",
                     description="relax-and-split experiment runner")
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    q = sub.add_parser("lad", parents=[common],
                       help="l1 regression with planted outliers")
    q.add_argument("--m", type=int, default=500)
    q.add_argument("--n", type=int, default=200)
    q.add_argument("--nu", type=float)
    q.add_argument("--outliers", type=float, default=0.1)
    q.add_argument("--data", metavar="DIR",
                   help="load a saved instance instead of generating")
    q.set_defaults(func=_cmd_lad)

    q = sub.add_parser("phase", parents=[common],
                       help="phase retrieval from signed Hadamard stacks")
    q.add_argument("--n", type=int, default=64)
    q.add_argument("--k", type=int, default=4)
    q.add_argument("--nu", type=float, default=1.0)
    q.add_argument("--init-iters", dest="init_iters", type=int, default=10)
    q.set_defaults(func=_cmd_phase)

    q = sub.add_parser("phase-trimmed", parents=[common],
                       help="phase retrieval with corrupted measurements")
    q.add_argument("--n", type=int, default=64)
    q.add_argument("--k", type=int, default=8)
    q.add_argument("--nu", type=float, default=1.0)
    q.add_argument("--tau", type=float, required=True,
                   help="trimming budget (kept measurement mass)")
    q.add_argument("--gamma", type=float, default=1.0)
    q.add_argument("--corrupt-frac", dest="corrupt_frac", type=float,
                   default=0.3)
    q.add_argument("--corrupt-value", dest="corrupt_value", type=float,
                   default=1000.0)
    q.add_argument("--init-iters", dest="init_iters", type=int, default=10)
    q.set_defaults(func=_cmd_phase_trimmed)

    q = sub.add_parser("sslr", parents=[common],
                       help="semi-supervised logistic regression")
    q.add_argument("--m", type=int, default=1000)
    q.add_argument("--n", type=int, default=10)
    q.add_argument("--k", type=int, help="labeled rows (default 2%% of m)")
    q.add_argument("--sep", type=float, default=4.0,
                   help="distance between the two class means")
    q.add_argument("--lambda", dest="lam", type=float, default=0.1)
    q.add_argument("--gamma", type=float, default=0.1)
    q.add_argument("--nu", type=float, default=1.0)
    q.add_argument("--gamma-grid", dest="gamma_grid", type=_float_list,
                   metavar="G0,G1,...")
    q.add_argument("--seeds", type=int, default=20,
                   help="seeds per grid point in sweep mode")
    q.set_defaults(func=_cmd_sslr)

    q = sub.add_parser("ssp", parents=[common],
                       help="stochastic shortest path via Bellman residuals")
    q.add_argument("--n", type=int, default=25)
    q.add_argument("--schedule", type=_schedule, metavar="NU0:FACTOR:NUMIN")
    q.set_defaults(func=_cmd_ssp)

    q = sub.add_parser("cluster", parents=[common],
                       help="convex / SCAD sum-of-norms clustering")
    q.add_argument("--clusters", type=int, default=3)
    q.add_argument("--per-cluster", dest="per_cluster", type=int, default=10)
    q.add_argument("--dim", type=int, default=2)
    q.add_argument("--lambda", dest="lam", type=float, default=0.5)
    q.add_argument("--nu", type=float, default=1.0)
    q.add_argument("--kappa", type=float,
                   help="SCAD truncation knee; omit for the convex penalty")
    q.set_defaults(func=_cmd_cluster)

    q = sub.add_parser("rpca", parents=[common],
                       help="exact robust PCA on a spiked low-rank matrix")
    q.add_argument("--m", type=int, default=20)
    q.add_argument("--n", type=int, default=30)
    q.add_argument("--rank", type=int, default=2)
    q.add_argument("--schedule", type=_schedule, metavar="NU0:FACTOR:NUMIN")
    q.add_argument("--data", metavar="PATH",
                   help="MatrixMarket file holding the data matrix")
    q.set_defaults(func=_cmd_rpca)

    q = sub.add_parser("admm-compare", parents=[common],
                       help="iterations-to-tol versus ADMM over a rho grid")
    q.add_argument("--m", type=int, default=200)
    q.add_argument("--n", type=int, default=50)
    q.add_argument("--rho-grid", dest="rho_grid", type=_float_list,
                   default=_float_list(DEFAULT_RHO_GRID),
                   metavar="R0,R1,...")
    q.set_defaults(func=_cmd_admm_compare)

    q = sub.add_parser("continuation", parents=[common],
                       help="nu ladder down to an l1 regression solution")
    q.add_argument("--m", type=int, default=300)
    q.add_argument("--n", type=int, default=5)
    q.add_argument("--outliers", type=float, default=0.1)
    q.add_argument("--schedule", type=_schedule, metavar="NU0:FACTOR:NUMIN")
    q.set_defaults(func=_cmd_continuation)

    return parser


def main(argv=None):
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
