"""Command-line interface.

Subcommands: gen (synthetic data), graph (build G1/G2), sample (run a
sampler), complete (solve the regularized system), eval (RMSE), experiment
(config-driven sweep).
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
import time

import numpy as np

from .bandlimited import aopt_local_search, bandlimited_basis
from .completion import CompletionProblem, dglr_solve, rmse_eval, save_report
from .experiments import (
    export_metrics,
    load_ratings,
    parse_config,
    run_experiment,
    save_ratings,
)
from .graphs import (
    ProductOperator,
    content_graph,
    knn_feature_graph,
    laplacian_from_weights,
    synthetic_netflix,
)
from .linalg import SolverOptions, load_edge_list, save_edge_list
from .sampling import (
    SampleSet,
    gcs_sample,
    igcs_sample,
    random_sample,
    save_sample_set,
)


def _load_graph(path):
    return laplacian_from_weights(load_edge_list(path))


def _load_pairs(path):
    pairs = []
    with open(path, newline="") as f:
        for lineno, parts in enumerate(csv.reader(f), start=1):
            if not parts:
                continue
            if lineno == 1 and parts[0].strip() == "row":
                continue
            try:
                pairs.append((int(parts[0]), int(parts[1])))
            except (ValueError, IndexError):
                raise SystemExit(f"{path}:{lineno}: expected 'row,col'")
    return pairs


def _write_dense_csv(X, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        for row in np.asarray(X):
            writer.writerow([repr(float(v)) for v in row])


def _cmd_gen(args):
    bundle = synthetic_netflix(args.m, args.n, args.row_comm, args.col_comm,
                               noise_sigma=args.noise_sigma, seed=args.seed,
                               p_in=args.p_in, p_out=args.p_out)
    os.makedirs(args.out_dir, exist_ok=True)
    ratings = os.path.join(args.out_dir, "ratings.csv")
    save_ratings(bundle.ratings, ratings)
    rg = os.path.join(args.out_dir, "row_graph.txt")
    cg = os.path.join(args.out_dir, "col_graph.txt")
    save_edge_list(bundle.row_graph.weights, rg)
    save_edge_list(bundle.col_graph.weights, cg)
    gt = os.path.join(args.out_dir, "ground_truth.csv")
    _write_dense_csv(bundle.ground_truth, gt)
    for path in (ratings, rg, cg, gt):
        print(f"wrote {path}")
    return 0


def _cmd_graph(args):
    if (args.ratings is None) == (args.features is None):
        raise SystemExit("pass exactly one of --ratings (G2) or --features (G1)")
    if args.ratings:
        data = load_ratings(args.ratings)
        g = content_graph(data, axis=args.axis, d_s=args.d_s, gamma=args.gamma)
    else:
        feats = np.loadtxt(args.features, delimiter=",", ndmin=2)
        g = knn_feature_graph(feats, k=args.k)
    save_edge_list(g.weights, args.out)
    print(f"wrote {args.out} ({g.n} nodes, {g.weights.nnz // 2} edges, "
          f"{g.n_components()} component(s))")
    return 0


def _resolve_cli_budget(budget: str, mn: int) -> int:
    value = float(budget)
    if 0 < value < 1:
        return int(round(value * mn))
    return int(value)


def _cmd_sample(args):
    row_graph = _load_graph(args.row_graph) if args.row_graph else None
    col_graph = _load_graph(args.col_graph) if args.col_graph else None
    if args.method != "random" and (row_graph is None or col_graph is None):
        raise SystemExit(f"--method {args.method} needs --row-graph and --col-graph")
    if row_graph is not None and col_graph is not None:
        m, n = row_graph.n, col_graph.n
    elif args.m and args.n:
        m, n = args.m, args.n
    else:
        raise SystemExit("pass --row-graph/--col-graph or --m/--n")

    mn = m * n
    K = _resolve_cli_budget(args.budget, mn)
    allowed = None
    if args.pool:
        mask = np.zeros(mn, dtype=bool)
        for i, j in _load_pairs(args.pool):
            mask[i + m * j] = True
        allowed = mask
    opts = SolverOptions(seed=args.seed)

    t0 = time.perf_counter()
    iter_counts = None
    if args.method == "gcs":
        op = ProductOperator(row_graph, col_graph, args.alpha, args.beta)
        ss, state = gcs_sample(op, K, allowed=allowed, opts=opts)
        iter_counts = state.iter_counts
    elif args.method == "igcs":
        ss, state = igcs_sample(row_graph, col_graph, args.alpha, args.beta,
                                q=args.q, zeta=args.zeta, K=K, allowed=allowed,
                                opts=opts)
        iter_counts = state.iter_counts
    elif args.method == "random":
        ss = random_sample(m, n, K, seed=args.seed, allowed=allowed)
    elif args.method == "aopt":
        basis = bandlimited_basis(row_graph, col_graph, args.k1, args.k2)
        op = ProductOperator(row_graph, col_graph, args.alpha, args.beta)
        ss = aopt_local_search(basis, op, K, args.l_pool, opts=opts,
                               allowed=allowed)
    wall = time.perf_counter() - t0

    save_sample_set(ss, args.out, meta={
        "method": args.method, "K": K, "seed": args.seed,
        "alpha": args.alpha, "beta": args.beta,
        "q": args.q if args.method == "igcs" else None,
        "zeta": args.zeta if args.method == "igcs" else None,
        "iter_counts": iter_counts, "wall_time_seconds": wall,
    })
    print(f"wrote {args.out} ({len(ss)} samples, {wall:.3f}s)")
    return 0


def _cmd_complete(args):
    data = load_ratings(args.ratings)
    row_graph = _load_graph(args.row_graph)
    col_graph = _load_graph(args.col_graph)
    pairs = _load_pairs(args.omega)
    omega = SampleSet(tuple(pairs), m=data.m, budget=len(pairs))
    positions = [idx for idx, (i, j) in enumerate(zip(data.rows, data.cols))
                 if (int(i), int(j)) in set(omega.pairs)]
    if len(positions) != len(omega):
        raise SystemExit("omega contains entries missing from the ratings file")
    problem = CompletionProblem(
        observations=data.subset(np.array(positions, dtype=np.int64)),
        omega=omega, row_graph=row_graph, col_graph=col_graph,
        alpha=args.alpha, beta=args.beta)
    report = dglr_solve(problem, SolverOptions(tol=args.tol, seed=args.seed))
    save_report(report, args.out, x_csv_path=args.x_out)
    print(f"wrote {args.out} (residual {report.residual:.3e}, "
          f"lambda_min_est {report.lambda_min_est:.6f})")
    if args.x_out:
        print(f"wrote {args.x_out}")
    return 0


def _cmd_eval(args):
    X = np.loadtxt(args.completed, delimiter=",", ndmin=2)
    truth = load_ratings(args.truth)
    pairs = _load_pairs(args.eval_set)
    rmse = rmse_eval(X, truth.to_dense(), pairs)
    print(f"rmse {rmse!r} over {len(pairs)} entries")
    return 0


def _cmd_experiment(args):
    cfg = parse_config(args.config)
    rows = run_experiment(cfg)
    out = os.path.join(cfg.output_dir, "metrics.csv")
    if rows:
        export_metrics(rows, out)
        print(f"wrote {out} ({len(rows)} rows)")
    failures = os.path.join(cfg.output_dir, "failures.log")
    if os.path.exists(failures):
        print(f"some cells failed; see {failures}", file=sys.stderr)
        return 1
    if not rows:
        print("no cells ran", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="discshift",
        description="Greedy disc-shift sampling and dual-graph regularized completion")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic block-smooth dataset")
    p.add_argument("--m", type=int, default=60)
    p.add_argument("--n", type=int, default=40)
    p.add_argument("--row-comm", type=int, default=4)
    p.add_argument("--col-comm", type=int, default=4)
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--p-in", type=float, default=0.3)
    p.add_argument("--p-out", type=float, default=0.01)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_gen)

    p = sub.add_parser("graph", help="build a similarity graph (G1 or G2)")
    p.add_argument("--ratings", help="ratings CSV for the content graph (G2)")
    p.add_argument("--axis", choices=("rows", "cols"), default="rows")
    p.add_argument("--d-s", type=float, default=None,
                   help="distance threshold (default: 60th percentile)")
    p.add_argument("--gamma", type=float, default=None,
                   help="kernel width (default: mean squared deviation)")
    p.add_argument("--features", help="feature CSV for the kNN graph (G1)")
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_graph)

    p = sub.add_parser("sample", help="select matrix entries to observe")
    p.add_argument("--method", choices=("gcs", "igcs", "random", "aopt"),
                   required=True)
    p.add_argument("--budget", required=True,
                   help="absolute K, or a fraction of m*n when < 1")
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--q", type=float, default=0.5)
    p.add_argument("--zeta", type=int, default=1)
    p.add_argument("--l-pool", type=int, default=1)
    p.add_argument("--k1", type=int, default=4)
    p.add_argument("--k2", type=int, default=4)
    p.add_argument("--pool", help="CSV of allowed row,col entries")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--row-graph", help="row-graph adjacency edge list")
    p.add_argument("--col-graph", help="column-graph adjacency edge list")
    p.add_argument("--m", type=int, help="rows (random sampling without graphs)")
    p.add_argument("--n", type=int, help="cols (random sampling without graphs)")
    p.add_argument("--out", required=True, help="output CSV (JSON sidecar beside it)")
    p.set_defaults(fn=_cmd_sample)

    p = sub.add_parser("complete", help="solve the regularized completion system")
    p.add_argument("--ratings", required=True)
    p.add_argument("--omega", required=True, help="CSV of observed row,col entries")
    p.add_argument("--row-graph", required=True)
    p.add_argument("--col-graph", required=True)
    p.add_argument("--alpha", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.1)
    p.add_argument("--tol", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="report JSON path")
    p.add_argument("--x-out", help="optional dense CSV of the reconstruction")
    p.set_defaults(fn=_cmd_complete)

    p = sub.add_parser("eval", help="score a reconstruction on held-out entries")
    p.add_argument("--completed", required=True, help="dense CSV of X*")
    p.add_argument("--truth", required=True, help="ratings CSV with true values")
    p.add_argument("--eval-set", required=True, help="CSV of row,col entries")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("experiment", help="run a config-driven sweep")
    p.add_argument("--config", required=True)
    p.set_defaults(fn=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
