"""Tests for the bandlimited basis, A-optimal selection, and reconstruction."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from discshift.bandlimited import (
    AOPT_EPS,
    aopt_local_search,
    aopt_objective,
    bandlimited_basis,
    bandlimited_reconstruct,
)
from discshift.graphs import ProductOperator, laplacian_from_weights, lin_index
from discshift.linalg import SolverOptions, SparseSym
from discshift.sampling import SampleSet, gcs_sample


def path_graph(n):
    W = np.zeros((n, n))
    for i in range(n - 1):
        W[i, i + 1] = W[i + 1, i] = 1.0
    return laplacian_from_weights(SparseSym.from_dense(W))


def random_graph(n, seed, p=0.6):
    rng = np.random.default_rng(seed)
    while True:
        W = np.triu((rng.random((n, n)) < p) * rng.uniform(0.5, 1.5, (n, n)), 1)
        G = laplacian_from_weights(SparseSym.from_dense(W + W.T))
        if G.n_components() == 1:
            return G


def brute_force_aopt(basis, op, K, L_pool):
    """Reference reimplementation of the pooled greedy selection."""
    Q = np.zeros((op.size, op.size))
    from discshift.graphs import product_dense

    Q = product_dense(op)
    sampled = op.sample_diag.astype(bool).copy()
    chosen = []
    pairs = []
    for _ in range(K):
        _, vecs = np.linalg.eigh(Q)
        phi = vecs[:, 0]
        cand = np.flatnonzero(~sampled)
        n_pool = min(L_pool, cand.size)
        pool = []
        remaining = cand.tolist()
        for _ in range(n_pool):
            mags = np.abs(phi[remaining])
            pick = remaining[int(np.flatnonzero(mags >= mags.max() - 1e-4)[0])]
            pool.append(pick)
            remaining.remove(pick)
        best_idx, best_val = None, None
        for c in sorted(pool):
            val = aopt_objective(basis, chosen + [c])
            if best_val is None or val < best_val - 1e-12:
                best_idx, best_val = c, val
        chosen.append(best_idx)
        sampled[best_idx] = True
        Q[best_idx, best_idx] += 1.0
        pairs.append((best_idx % op.m, best_idx // op.m))
    return pairs


# -------------------------------------------------------------------- basis


def test_basis_rank_one_is_constants():
    rg, cg = path_graph(4), path_graph(3)
    basis = bandlimited_basis(rg, cg, k1=1, k2=1)
    assert_allclose(np.abs(basis.U[:, 0]), np.full(3, 1 / np.sqrt(3)), atol=1e-12)
    assert_allclose(np.abs(basis.V[:, 0]), np.full(4, 1 / np.sqrt(4)), atol=1e-12)


def test_basis_orthonormal_columns():
    rg, cg = random_graph(5, 0), random_graph(4, 1)
    basis = bandlimited_basis(rg, cg, k1=3, k2=2)
    T = basis.materialize()
    assert_allclose(T.T @ T, np.eye(6), atol=1e-9)


def test_basis_rows_match_kron():
    rg, cg = random_graph(4, 2), random_graph(5, 3)
    basis = bandlimited_basis(rg, cg, k1=2, k2=3)
    T = np.kron(basis.U, basis.V)
    lin = [0, 5, 11, 19]
    assert_allclose(basis.rows(lin), T[lin], atol=1e-12)
    assert_allclose(basis.materialize(), T, atol=1e-12)


def test_basis_apply_matches_materialized():
    rng = np.random.default_rng(4)
    rg, cg = random_graph(4, 5), random_graph(3, 6)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    T = basis.materialize()
    for _ in range(5):
        z = rng.standard_normal(4)
        assert np.max(np.abs(basis.apply(z) - T @ z)) <= 1e-12


def test_basis_apply_t_is_adjoint():
    rng = np.random.default_rng(7)
    rg, cg = random_graph(4, 8), random_graph(3, 9)
    basis = bandlimited_basis(rg, cg, k1=3, k2=2)
    T = basis.materialize()
    y = rng.standard_normal(12)
    assert_allclose(basis.apply_t(y), T.T @ y, atol=1e-12)


def test_basis_validates_ranks():
    rg, cg = path_graph(3), path_graph(2)
    with pytest.raises(ValueError):
        bandlimited_basis(rg, cg, k1=3, k2=1)
    with pytest.raises(ValueError):
        bandlimited_basis(rg, cg, k1=1, k2=0)


# ---------------------------------------------------------------- objective


def test_aopt_full_sampling_scores_rank():
    rg, cg = random_graph(4, 10), random_graph(3, 11)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    full = SampleSet(tuple((i, j) for j in range(3) for i in range(4)),
                     m=4, budget=12)
    # T has orthonormal columns, so the full Gram is the identity
    assert aopt_objective(basis, full) == pytest.approx(4.0, abs=1e-9)


def test_aopt_empty_selection():
    rg, cg = path_graph(4), path_graph(3)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    assert aopt_objective(basis, []) == pytest.approx(4.0 / AOPT_EPS)


def test_aopt_matches_dense_inverse():
    # full-rank selections are scored unregularized and match to 1e-9;
    # deficient Grams sit at scale 1/eps where only a relative check is fair
    rng = np.random.default_rng(12)
    rg, cg = random_graph(4, 13), random_graph(4, 14)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    for size in [5, 9]:
        lin = rng.choice(16, size=size, replace=False).tolist()
        R = basis.rows(lin)
        ref = float(np.trace(np.linalg.inv(R.T @ R)))
        assert abs(aopt_objective(basis, lin) - ref) <= 1e-9


def test_aopt_deficient_selection_regularized():
    rng = np.random.default_rng(30)
    rg, cg = random_graph(4, 13), random_graph(4, 14)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    lin = rng.choice(16, size=2, replace=False).tolist()
    R = basis.rows(lin)
    ref = float(np.trace(np.linalg.inv(R.T @ R + AOPT_EPS * np.eye(4))))
    val = aopt_objective(basis, lin)
    assert abs(val - ref) / ref <= 1e-7


# ------------------------------------------------------------- local search


def test_local_search_full_pool_is_plain_greedy():
    rg, cg = random_graph(4, 15), random_graph(3, 16)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    op = ProductOperator(rg, cg, 0.1, 0.1)
    ss = aopt_local_search(basis, op, K=5, L_pool=12)
    assert list(ss.pairs) == brute_force_aopt(basis, op, 5, 12)


def test_local_search_pool_one_is_gcs():
    rg, cg = path_graph(3), path_graph(2)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    op = ProductOperator(rg, cg, 0.1, 0.1)
    ss = aopt_local_search(basis, op, K=3, L_pool=1)
    gcs, _ = gcs_sample(op, 3)
    assert ss.pairs == gcs.pairs


def test_local_search_mid_pool_matches_reference():
    rg, cg = random_graph(4, 17), random_graph(3, 18)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    op = ProductOperator(rg, cg, 0.1, 0.1)
    ss = aopt_local_search(basis, op, K=3, L_pool=4)
    assert list(ss.pairs) == brute_force_aopt(basis, op, 3, 4)


def test_local_search_validates_pool():
    rg, cg = path_graph(3), path_graph(2)
    basis = bandlimited_basis(rg, cg, k1=1, k2=1)
    op = ProductOperator(rg, cg, 0.1, 0.1)
    with pytest.raises(ValueError):
        aopt_local_search(basis, op, K=1, L_pool=0)
    with pytest.raises(ValueError):
        aopt_local_search(basis, op, K=7, L_pool=1)


# ----------------------------------------------------------- reconstruction


def test_reconstruct_full_sampling_exact():
    rng = np.random.default_rng(20)
    rg, cg = random_graph(4, 21), random_graph(5, 22)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    x = basis.apply(rng.standard_normal(4))
    lin = list(range(20))
    xhat = bandlimited_reconstruct(basis, lin, x[lin])
    assert np.max(np.abs(xhat - x)) <= 1e-10


def test_reconstruct_partial_sampling():
    rng = np.random.default_rng(23)
    rg, cg = random_graph(4, 24), random_graph(5, 25)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    x = basis.apply(rng.standard_normal(4))
    lin = sorted(rng.choice(20, size=8, replace=False).tolist())
    assert np.linalg.matrix_rank(basis.rows(lin)) == 4  # setup sanity
    xhat = bandlimited_reconstruct(basis, lin, x[lin])
    assert np.linalg.norm(xhat - x) <= 1e-8


def test_reconstruct_rank_deficiency_raises():
    rg, cg = path_graph(4), path_graph(5)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    with pytest.raises(np.linalg.LinAlgError, match="rank"):
        bandlimited_reconstruct(basis, [0, 1, 2], np.zeros(3))


def test_reconstruct_validates_alignment():
    rg, cg = path_graph(4), path_graph(5)
    basis = bandlimited_basis(rg, cg, k1=2, k2=2)
    with pytest.raises(ValueError):
        bandlimited_reconstruct(basis, [0, 1, 2, 3], np.zeros(3))
