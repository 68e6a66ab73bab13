"""Dataset ingestion, split protocol, experiment orchestration, metric export.

An experiment cell is one (seed, method, budget) triple: build graphs, sample
from the pool, complete from the initial data plus the samples, score RMSE on
entries the solver never saw. Wall time is measured around sampling only.
"""

from __future__ import annotations

import os
import re
import time
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .bandlimited import aopt_local_search, bandlimited_basis
from .completion import CompletionProblem, dglr_solve, rmse_eval, save_report
from .graphs import (
    GraphLaplacian,
    ProductOperator,
    RatingMatrix,
    content_graph,
    knn_feature_graph,
    synthetic_netflix,
)
from .linalg import SolverOptions, load_edge_list
from .sampling import (
    SampleSet,
    gcs_sample,
    igcs_sample,
    random_sample,
    save_sample_set,
)

METRICS_HEADER = "method,seed,K,rmse,lambda_min_est,wall_time_seconds,lobpcg_total_iters"


@dataclass
class ExperimentConfig:
    """Everything one experiment sweep needs.

    dataset is either a ratings CSV path or a generator spec like
    `synthetic:m=60,n=40,row_comm=4,col_comm=4,noise_sigma=0.6`. Budgets are
    fractions of m*n (floats below 1) or absolute counts; when the list is
    empty the sweep runs the single budget sample_budget_fraction.
    """

    dataset: str
    initial_fraction: float = 0.0
    sample_budget_fraction: float = 1.0
    eval_fraction: float = 0.0
    methods: List[str] = field(default_factory=lambda: ["gcs"])
    budgets: List[float] = field(default_factory=list)
    alpha: float = 0.1
    beta: float = 0.1
    q: float = 0.5
    zeta: int = 1
    l_pool: int = 1
    k1: int = 4
    k2: int = 4
    graph_source: str = "provided"
    knn_k: int = 10
    seeds: List[int] = field(default_factory=lambda: [0])
    output_dir: str = "out"
    row_graph: Optional[str] = None
    col_graph: Optional[str] = None
    features_row: Optional[str] = None
    features_col: Optional[str] = None
    tol: Optional[float] = None

    def __post_init__(self):
        for name in ("initial_fraction", "sample_budget_fraction", "eval_fraction"):
            v = getattr(self, name)
            if not (0.0 <= v <= 1.0):
                raise ValueError(f"{name} must lie in [0, 1]")
        total = self.initial_fraction + self.sample_budget_fraction + self.eval_fraction
        if total > 1.0 + 1e-12:
            raise ValueError(f"split fractions sum to {total} > 1")
        known = {"gcs", "igcs", "random", "aopt"}
        bad = [m for m in self.methods if m not in known]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {sorted(known)}")


@dataclass(frozen=True)
class MetricsRow:
    method: str
    seed: int
    K: int
    rmse: float
    lambda_min_est: float
    wall_time_seconds: float
    lobpcg_total_iters: int

    def __post_init__(self):
        for name in ("rmse", "lambda_min_est", "wall_time_seconds"):
            if not np.isfinite(getattr(self, name)):
                raise ValueError(f"{name} must be finite")


_DIRECTIVE = re.compile(r"#\s*m\s*=\s*(\d+)\s+n\s*=\s*(\d+)")


def load_ratings(path) -> RatingMatrix:
    """Read a `row,col,value` CSV. A `# m=<M> n=<N>` comment fixes dimensions;
    otherwise they are inferred from the data. Duplicates and malformed lines
    raise with their line number.
    """
    m = n = None
    rows, cols, vals, lines = [], [], [], []
    with open(path) as f:
        for lineno, raw in enumerate(f, start=1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                match = _DIRECTIVE.search(line)
                if match:
                    m, n = int(match.group(1)), int(match.group(2))
                continue
            parts = [p.strip() for p in line.split(",")]
            if parts[0] == "row":
                continue  # header
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'row,col,value'")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: expected 'row,col,value'") from None
            rows.append(i)
            cols.append(j)
            vals.append(v)
            lines.append(lineno)

    if m is None:
        m = max(rows, default=-1) + 1
        n = max(cols, default=-1) + 1
    seen = {}
    for i, j, lineno in zip(rows, cols, lines):
        if not (0 <= i < m and 0 <= j < n):
            raise ValueError(f"{path}:{lineno}: index ({i},{j}) out of range for {m}x{n}")
        if (i, j) in seen:
            raise ValueError(
                f"{path}:{lineno}: duplicate entry ({i},{j}), first at line {seen[(i, j)]}")
        seen[(i, j)] = lineno
    return RatingMatrix(m, n, np.array(rows, dtype=np.int64),
                        np.array(cols, dtype=np.int64), np.array(vals))


def save_ratings(data: RatingMatrix, path) -> None:
    with open(path, "w") as f:
        f.write(f"# m={data.m} n={data.n}\n")
        f.write("row,col,value\n")
        for i, j, v in zip(data.rows, data.cols, data.vals):
            f.write(f"{i},{j},{float(v)!r}\n")


def split_dataset(data: RatingMatrix, cfg: ExperimentConfig,
                  seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint (initial, pool, eval) split of the known entries.

    Returns position arrays indexing data's triplets. Sizes are
    round(fraction * n_known) for initial and pool; eval takes
    round(eval_fraction * n_known), all drawn from one seeded shuffle.
    """
    n_known = data.n_known
    n_init = int(round(cfg.initial_fraction * n_known))
    n_pool = int(round(cfg.sample_budget_fraction * n_known))
    n_eval = int(round(cfg.eval_fraction * n_known))
    if n_init + n_pool + n_eval > n_known:
        raise ValueError(
            f"split sizes {n_init}+{n_pool}+{n_eval} overflow {n_known} known entries")
    perm = np.random.default_rng(seed).permutation(n_known)
    gamma = np.sort(perm[:n_init])
    pool = np.sort(perm[n_init:n_init + n_pool])
    evalset = np.sort(perm[n_init + n_pool:n_init + n_pool + n_eval])
    return gamma, pool, evalset


def _parse_generator_spec(spec: str) -> dict:
    body = spec.split(":", 1)[1] if ":" in spec else ""
    params = {}
    for part in filter(None, (p.strip() for p in body.split(","))):
        if "=" not in part:
            raise ValueError(f"bad generator parameter {part!r}")
        key, val = (s.strip() for s in part.split("=", 1))
        params[key] = val
    out = {
        "m": int(params.pop("m", 60)),
        "n": int(params.pop("n", 40)),
        "n_row_comm": int(params.pop("row_comm", 4)),
        "n_col_comm": int(params.pop("col_comm", 4)),
        "noise_sigma": float(params.pop("noise_sigma", 0.0)),
        "p_in": float(params.pop("p_in", 0.3)),
        "p_out": float(params.pop("p_out", 0.01)),
    }
    if params:
        raise ValueError(f"unknown generator parameters {sorted(params)}")
    return out


def resolve_dataset(dataset: str, seed: int):
    """Load a ratings file or run a generator spec.

    Returns (ratings, ground_truth or None, row_graph or None, col_graph or None).
    """
    if dataset.startswith("synthetic"):
        kw = _parse_generator_spec(dataset)
        bundle = synthetic_netflix(seed=seed, **kw)
        return bundle.ratings, bundle.ground_truth, bundle.row_graph, bundle.col_graph
    data = load_ratings(dataset)
    return data, None, None, None


def _resolve_graphs(cfg: ExperimentConfig, data: RatingMatrix, gamma: np.ndarray,
                    gen_row: Optional[GraphLaplacian], gen_col: Optional[GraphLaplacian]):
    if cfg.graph_source == "provided":
        if gen_row is not None and gen_col is not None:
            return gen_row, gen_col
        if not (cfg.row_graph and cfg.col_graph):
            raise ValueError("graph_source=provided needs row_graph/col_graph paths")
        row = load_edge_list(cfg.row_graph, n=data.m)
        col = load_edge_list(cfg.col_graph, n=data.n)
        from .graphs import laplacian_from_weights
        return laplacian_from_weights(row), laplacian_from_weights(col)
    if cfg.graph_source == "g2_content":
        if gamma.size == 0:
            raise ValueError("g2_content needs a nonempty initial split")
        base = data.subset(gamma)  # never look past the initial data
        return content_graph(base, axis="rows"), content_graph(base, axis="cols")
    if cfg.graph_source == "g1_features":
        if not (cfg.features_row and cfg.features_col):
            raise ValueError("g1_features needs features_row/features_col paths")
        feat_r = np.loadtxt(cfg.features_row, delimiter=",", ndmin=2)
        feat_c = np.loadtxt(cfg.features_col, delimiter=",", ndmin=2)
        return (knn_feature_graph(feat_r, k=cfg.knn_k),
                knn_feature_graph(feat_c, k=cfg.knn_k))
    raise ValueError(f"unknown graph_source {cfg.graph_source!r}")


def resolve_budget(budget, mn: int, pool_size: int) -> int:
    """Fractions of mn resolve by rounding; absolute counts pass through."""
    if isinstance(budget, float) and 0 < budget < 1:
        K = int(round(budget * mn))
    else:
        K = int(budget)
    if not (1 <= K <= pool_size):
        raise ValueError(f"budget {budget} -> K={K} outside pool of {pool_size}")
    return K


def _run_sampler(cfg: ExperimentConfig, method: str, K: int, seed: int,
                 row_graph, col_graph, gamma_diag, pool_mask):
    """Dispatch one sampler; returns (SampleSet, lobpcg_total_iters, wall_time)."""
    opts = SolverOptions(seed=seed)
    m, n = row_graph.n, col_graph.n
    t0 = time.perf_counter()
    if method == "gcs":
        op = ProductOperator(row_graph, col_graph, cfg.alpha, cfg.beta,
                             gamma_diag.copy())
        ss, state = gcs_sample(op, K, allowed=pool_mask, opts=opts)
        iters = sum(state.iter_counts)
    elif method == "igcs":
        ss, state = igcs_sample(row_graph, col_graph, cfg.alpha, cfg.beta,
                                q=cfg.q, zeta=cfg.zeta, K=K, allowed=pool_mask,
                                opts=opts)
        iters = sum(state.iter_counts)
    elif method == "random":
        ss = random_sample(m, n, K, seed=seed, allowed=pool_mask)
        iters = 0
    elif method == "aopt":
        basis = bandlimited_basis(row_graph, col_graph, cfg.k1, cfg.k2)
        op = ProductOperator(row_graph, col_graph, cfg.alpha, cfg.beta,
                             gamma_diag.copy())
        ss = aopt_local_search(basis, op, K, cfg.l_pool, opts=opts,
                               allowed=pool_mask)
        iters = 0
    else:
        raise ValueError(f"unknown method {method!r}")
    return ss, iters, time.perf_counter() - t0


def run_experiment(cfg: ExperimentConfig) -> List[MetricsRow]:
    """Run the full (seed x method x budget) sweep.

    Each cell writes its SampleSet CSV/JSON and completion report under
    cfg.output_dir. A failing cell is recorded in failures.log and skipped;
    the remaining cells still run.
    """
    os.makedirs(cfg.output_dir, exist_ok=True)
    rows: List[MetricsRow] = []
    failures: List[str] = []

    for seed in cfg.seeds:
        data, truth, gen_row, gen_col = resolve_dataset(cfg.dataset, seed)
        gamma, pool, evalset = split_dataset(data, cfg, seed)
        row_graph, col_graph = _resolve_graphs(cfg, data, gamma, gen_row, gen_col)
        m, n = data.m, data.n
        mn = m * n

        pos_of = {(int(i), int(j)): idx
                  for idx, (i, j) in enumerate(zip(data.rows, data.cols))}
        gamma_pairs = [(int(data.rows[p]), int(data.cols[p])) for p in gamma]
        pool_pairs = [(int(data.rows[p]), int(data.cols[p])) for p in pool]
        eval_pairs = [(int(data.rows[p]), int(data.cols[p])) for p in evalset]

        gamma_diag = np.zeros(mn)
        for i, j in gamma_pairs:
            gamma_diag[i + m * j] = 1.0
        pool_mask = np.zeros(mn, dtype=bool)
        for i, j in pool_pairs:
            pool_mask[i + m * j] = True

        score_target = truth if truth is not None else data.to_dense()

        for method in cfg.methods:
            for budget in (cfg.budgets or [cfg.sample_budget_fraction]):
                tag = None
                try:
                    K = resolve_budget(budget, mn, pool.size)
                    tag = f"{method}_seed{seed}_K{K}"
                    ss, iters, wall = _run_sampler(
                        cfg, method, K, seed, row_graph, col_graph,
                        gamma_diag, pool_mask)

                    omega_pairs = gamma_pairs + list(ss.pairs)
                    positions = [pos_of[pr] for pr in omega_pairs]
                    observations = data.subset(np.array(positions, dtype=np.int64))
                    problem = CompletionProblem(
                        observations=observations,
                        omega=SampleSet(tuple(omega_pairs), m=m,
                                        budget=len(omega_pairs)),
                        row_graph=row_graph, col_graph=col_graph,
                        alpha=cfg.alpha, beta=cfg.beta)
                    report = dglr_solve(problem, SolverOptions(tol=cfg.tol, seed=seed))

                    cell_eval = eval_pairs if eval_pairs else \
                        [pr for pr in pool_pairs if pr not in set(ss.pairs)]
                    rmse = rmse_eval(report.x_star, score_target, cell_eval)

                    save_sample_set(
                        ss, os.path.join(cfg.output_dir, tag + ".csv"),
                        meta={"method": method, "K": K, "seed": seed,
                              "alpha": cfg.alpha, "beta": cfg.beta,
                              "q": cfg.q if method == "igcs" else None,
                              "zeta": cfg.zeta if method == "igcs" else None,
                              "iter_counts": None,
                              "wall_time_seconds": wall})
                    report.rmse = rmse
                    save_report(report, os.path.join(cfg.output_dir, tag + "_report.json"))

                    rows.append(MetricsRow(
                        method=method, seed=seed, K=K, rmse=rmse,
                        lambda_min_est=report.lambda_min_est,
                        wall_time_seconds=wall, lobpcg_total_iters=iters))
                except Exception as e:  # failure isolation per cell
                    failures.append(
                        f"{method},{seed},{budget},{type(e).__name__}: {e}")

    if failures:
        with open(os.path.join(cfg.output_dir, "failures.log"), "w") as f:
            f.write("\n".join(failures) + "\n")
    rows.sort(key=lambda r: (r.method, r.seed, r.K))
    return rows


def export_metrics(rows: Sequence[MetricsRow], path) -> None:
    """Plot-ready CSV, one row per experiment cell."""
    if not rows:
        raise ValueError("no metric rows to export")
    with open(path, "w") as f:
        f.write(METRICS_HEADER + "\n")
        for r in rows:
            f.write(f"{r.method},{r.seed},{r.K},{r.rmse!r},{r.lambda_min_est!r},"
                    f"{r.wall_time_seconds!r},{r.lobpcg_total_iters}\n")


def load_metrics(path) -> List[MetricsRow]:
    rows = []
    with open(path) as f:
        header = f.readline().strip()
        if header != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header {header!r}")
        for line in f:
            if not line.strip():
                continue
            method, seed, K, rmse, lam, wall, iters = line.strip().split(",")
            rows.append(MetricsRow(method, int(seed), int(K), float(rmse),
                                   float(lam), float(wall), int(iters)))
    return rows


def parse_config(path) -> ExperimentConfig:
    """Parse `key = value` lines into an ExperimentConfig.

    Lists are comma separated; `#` starts a comment. Unknown keys raise.
    """
    raw = {}
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected 'key = value'")
            key, val = (s.strip() for s in line.split("=", 1))
            raw[key] = val

    def _num(s: str):
        try:
            return int(s)
        except ValueError:
            return float(s)

    kwargs = {}
    for key, val in raw.items():
        if key in ("methods",):
            kwargs[key] = [v.strip() for v in val.split(",") if v.strip()]
        elif key in ("seeds",):
            kwargs[key] = [int(v) for v in val.split(",") if v.strip()]
        elif key in ("budgets",):
            kwargs[key] = [_num(v) for v in val.split(",") if v.strip()]
        elif key in ("initial_fraction", "sample_budget_fraction", "eval_fraction",
                     "alpha", "beta", "q", "tol"):
            kwargs[key] = float(val)
        elif key in ("zeta", "l_pool", "k1", "k2", "knn_k"):
            kwargs[key] = int(val)
        elif key in ("dataset", "graph_source", "output_dir", "row_graph",
                     "col_graph", "features_row", "features_col"):
            kwargs[key] = val
        else:
            raise ValueError(f"{path}: unknown config key {key!r}")
    if "dataset" not in kwargs:
        raise ValueError(f"{path}: config must set 'dataset'")
    return ExperimentConfig(**kwargs)
