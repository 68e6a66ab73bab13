"""End-to-end tests for the command-line interface."""

import json
import subprocess
import sys

import numpy as np
import pytest

from discshift.cli import main
from discshift.experiments import load_metrics, load_ratings
from discshift.linalg import load_edge_list
from discshift.sampling import load_sample_set

GEN_ARGS = ["--m", "12", "--n", "9", "--row-comm", "3", "--col-comm", "3",
            "--p-in", "0.9", "--p-out", "0.2", "--seed", "0"]


@pytest.fixture()
def dataset(tmp_path):
    out = tmp_path / "data"
    assert main(["gen", *GEN_ARGS, "--out-dir", str(out)]) == 0
    return out


def test_gen_writes_bundle(dataset):
    data = load_ratings(dataset / "ratings.csv")
    assert (data.m, data.n) == (12, 9)
    for name in ("row_graph.txt", "col_graph.txt", "ground_truth.csv"):
        assert (dataset / name).exists()
    truth = np.loadtxt(dataset / "ground_truth.csv", delimiter=",", ndmin=2)
    assert truth.shape == (12, 9)
    assert load_edge_list(dataset / "row_graph.txt").n == 12


def test_graph_knn(tmp_path):
    feats = tmp_path / "feats.csv"
    np.savetxt(feats, np.random.default_rng(0).normal(size=(8, 3)),
               delimiter=",")
    out = tmp_path / "g.txt"
    code = main(["graph", "--features", str(feats), "--k", "3",
                 "--out", str(out)])
    assert code == 0
    assert load_edge_list(out).n == 8


def test_graph_content(dataset, tmp_path):
    out = tmp_path / "g2.txt"
    code = main(["graph", "--ratings", str(dataset / "ratings.csv"),
                 "--axis", "rows", "--out", str(out)])
    assert code == 0
    assert load_edge_list(out).n == 12


def test_graph_requires_one_source(tmp_path):
    with pytest.raises(SystemExit, match="exactly one"):
        main(["graph", "--out", str(tmp_path / "g.txt")])


def test_sample_gcs(dataset, tmp_path):
    out = tmp_path / "s.csv"
    code = main(["sample", "--method", "gcs", "--budget", "6",
                 "--row-graph", str(dataset / "row_graph.txt"),
                 "--col-graph", str(dataset / "col_graph.txt"),
                 "--alpha", "1.0", "--beta", "1.0", "--out", str(out)])
    assert code == 0
    ss, meta = load_sample_set(out, m=12)
    assert len(ss) == 6 and len(set(ss.pairs)) == 6
    assert meta["method"] == "gcs" and meta["K"] == 6
    assert meta["q"] is None
    assert len(meta["iter_counts"]) == 6


def test_sample_fractional_budget(dataset, tmp_path):
    out = tmp_path / "s.csv"
    main(["sample", "--method", "random", "--budget", "0.1",
          "--row-graph", str(dataset / "row_graph.txt"),
          "--col-graph", str(dataset / "col_graph.txt"), "--out", str(out)])
    ss, _ = load_sample_set(out, m=12)
    assert len(ss) == round(0.1 * 108)


def test_sample_random_without_graphs(tmp_path):
    out = tmp_path / "s.csv"
    code = main(["sample", "--method", "random", "--budget", "5",
                 "--m", "4", "--n", "3", "--seed", "1", "--out", str(out)])
    assert code == 0
    ss, _ = load_sample_set(out, m=4)
    assert len(ss) == 5
    assert all(0 <= i < 4 and 0 <= j < 3 for i, j in ss.pairs)


def test_sample_igcs_respects_pool(dataset, tmp_path):
    pool = tmp_path / "pool.csv"
    allowed = [(i, j) for i in range(6) for j in range(4)]
    pool.write_text("".join(f"{i},{j}\n" for i, j in allowed))
    out = tmp_path / "s.csv"
    code = main(["sample", "--method", "igcs", "--budget", "8",
                 "--zeta", "2", "--pool", str(pool),
                 "--row-graph", str(dataset / "row_graph.txt"),
                 "--col-graph", str(dataset / "col_graph.txt"),
                 "--out", str(out)])
    assert code == 0
    ss, meta = load_sample_set(out, m=12)
    assert set(ss.pairs) <= set(allowed)
    assert meta["zeta"] == 2


def test_sample_gcs_needs_graphs(tmp_path):
    with pytest.raises(SystemExit, match="needs --row-graph"):
        main(["sample", "--method", "gcs", "--budget", "3",
              "--m", "4", "--n", "3", "--out", str(tmp_path / "s.csv")])


def test_sample_aopt(dataset, tmp_path):
    out = tmp_path / "s.csv"
    code = main(["sample", "--method", "aopt", "--budget", "5",
                 "--k1", "2", "--k2", "2", "--l-pool", "3",
                 "--row-graph", str(dataset / "row_graph.txt"),
                 "--col-graph", str(dataset / "col_graph.txt"),
                 "--out", str(out)])
    assert code == 0
    ss, _ = load_sample_set(out, m=12)
    assert len(ss) == 5


def test_complete_and_eval(dataset, tmp_path, capsys):
    data = load_ratings(dataset / "ratings.csv")
    rng = np.random.default_rng(2)
    picked = rng.choice(data.n_known, size=40, replace=False)
    omega = tmp_path / "omega.csv"
    omega.write_text("".join(f"{data.rows[p]},{data.cols[p]}\n"
                             for p in picked))
    report = tmp_path / "report.json"
    x_out = tmp_path / "x.csv"
    code = main(["complete", "--ratings", str(dataset / "ratings.csv"),
                 "--omega", str(omega),
                 "--row-graph", str(dataset / "row_graph.txt"),
                 "--col-graph", str(dataset / "col_graph.txt"),
                 "--alpha", "1.0", "--beta", "1.0",
                 "--out", str(report), "--x-out", str(x_out)])
    assert code == 0
    doc = json.loads(report.read_text())
    assert doc["shape"] == [12, 9]
    assert doc["residual"] < 1e-6
    X = np.loadtxt(x_out, delimiter=",", ndmin=2)
    assert X.shape == (12, 9)

    held_out = [p for p in range(data.n_known) if p not in set(picked)][:20]
    eval_csv = tmp_path / "eval.csv"
    eval_csv.write_text("".join(f"{data.rows[p]},{data.cols[p]}\n"
                                for p in held_out))
    code = main(["eval", "--completed", str(x_out),
                 "--truth", str(dataset / "ratings.csv"),
                 "--eval-set", str(eval_csv)])
    assert code == 0
    out = capsys.readouterr().out
    assert "rmse" in out and "20 entries" in out


def test_complete_rejects_unknown_omega(tmp_path):
    from discshift.experiments import save_ratings
    from discshift.graphs import RatingMatrix
    from discshift.linalg import SparseSym, save_edge_list

    ratings = tmp_path / "r.csv"
    save_ratings(RatingMatrix(2, 2, [0, 1], [0, 1], [1.0, 2.0]), ratings)
    path2 = SparseSym.from_dense(np.array([[0.0, 1.0], [1.0, 0.0]]))
    g = tmp_path / "g.txt"
    save_edge_list(path2, g)
    omega = tmp_path / "omega.csv"
    omega.write_text("0,1\n")  # in range but never rated
    with pytest.raises(SystemExit, match="missing from the ratings"):
        main(["complete", "--ratings", str(ratings), "--omega", str(omega),
              "--row-graph", str(g), "--col-graph", str(g),
              "--out", str(tmp_path / "r.json")])


def test_experiment_subcommand(tmp_path, capsys):
    out_dir = tmp_path / "results"
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "dataset = synthetic:m=12,n=9,row_comm=3,col_comm=3,p_in=0.9,p_out=0.2\n"
        "methods = random, gcs\n"
        "budgets = 6\n"
        "seeds = 0\n"
        "sample_budget_fraction = 0.5\n"
        f"output_dir = {out_dir}\n"
    )
    code = main(["experiment", "--config", str(cfg)])
    assert code == 0
    rows = load_metrics(out_dir / "metrics.csv")
    assert [(r.method, r.K) for r in rows] == [("gcs", 6), ("random", 6)]


def test_experiment_reports_failures(tmp_path, capsys):
    out_dir = tmp_path / "results"
    cfg = tmp_path / "exp.cfg"
    cfg.write_text(
        "dataset = synthetic:m=12,n=9,row_comm=3,col_comm=3,p_in=0.9,p_out=0.2\n"
        "methods = random\n"
        "budgets = 9999\n"  # beyond the pool
        "seeds = 0\n"
        "sample_budget_fraction = 0.5\n"
        f"output_dir = {out_dir}\n"
    )
    code = main(["experiment", "--config", str(cfg)])
    assert code == 1
    assert (out_dir / "failures.log").exists()
    assert "failures.log" in capsys.readouterr().err


def test_unknown_subcommand_exits():
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_module_help_runs():
    proc = subprocess.run([sys.executable, "-m", "discshift.cli", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "sample" in proc.stdout and "complete" in proc.stdout
