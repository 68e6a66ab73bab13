"""Graph construction and the implicit product-graph operator.

Feature kNN graphs, content (co-rating) graphs, planted-partition community
graphs, a synthetic block-smooth ratings generator, and the never-materialized
operator  Q = diag(s) + alpha * I (x) L_r + beta * L_c (x) I  acting on
column-major vectorized m x n matrices.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .linalg import SparseSym, dense_sym_eig


def lin_index(i: int, j: int, m: int) -> int:
    """Column-major linear index l = i + m*j (0-based)."""
    if not (0 <= i < m):
        raise ValueError(f"row {i} out of range for m={m}")
    if j < 0:
        raise ValueError(f"negative column {j}")
    return i + m * j


def mat_index(l: int, m: int):
    """Inverse of lin_index: l -> (i, j)."""
    if l < 0:
        raise ValueError(f"negative linear index {l}")
    return l % m, l // m


@dataclass(frozen=True)
class GraphLaplacian:
    """Weighted undirected graph with its combinatorial Laplacian L = D - W."""

    n: int
    weights: SparseSym
    laplacian: SparseSym
    max_degree: float

    def csr(self) -> sp.csr_matrix:
        return self.laplacian._scipy()

    def n_components(self) -> int:
        if self.n == 0:
            return 0
        ncomp, _ = connected_components(self.weights._scipy(), directed=False)
        return int(ncomp)


def laplacian_from_weights(W: SparseSym) -> GraphLaplacian:
    """Build L = D - W from a nonnegative, zero-diagonal adjacency."""
    Wm = W._scipy()
    if Wm.nnz and Wm.data.min() < 0:
        raise ValueError("negative edge weight")
    diag = Wm.diagonal()
    if np.any(diag != 0):
        raise ValueError("adjacency diagonal must be zero")
    degrees = np.asarray(Wm.sum(axis=1)).ravel()
    L = sp.diags(degrees) - Wm
    max_degree = float(degrees.max()) if W.n else 0.0
    lap = SparseSym.from_scipy(L)
    # Row sums of D - W are zero by construction; guard against bad input.
    row_sums = lap._scipy() @ np.ones(W.n)
    if W.n and np.max(np.abs(row_sums)) > 1e-10:
        raise ValueError("Laplacian row sums exceed 1e-10")
    return GraphLaplacian(n=W.n, weights=W, laplacian=lap, max_degree=max_degree)


def trivial_graph() -> GraphLaplacian:
    """Single node, no edges. Used to run samplers in single-graph mode."""
    empty = SparseSym.from_dense(np.zeros((1, 1)))
    return laplacian_from_weights(empty)


def graph_variation(G: GraphLaplacian, x) -> float:
    """Quadratic form x' L x = sum_{ij} W_ij (x_i - x_j)^2 / accounting."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (G.n,):
        raise ValueError(f"dimension mismatch: graph has {G.n} nodes, x is {x.shape}")
    return float(x @ (G.csr() @ x))


def knn_feature_graph(features, k: int = 10) -> GraphLaplacian:
    """Weighted k-nearest-neighbor graph over feature vectors.

    Parameters
    ----------
    features : (n, d) array
    k : int
        Neighbor count (default 10). Neighbor sets are tie-inclusive: every
        node at the k-th nearest distance is kept.

    Weights are exp(-d^2 / sigma^2) with sigma the mean distance over all
    retained neighbor pairs; the directed graph is symmetrized by
    max(w_ij, w_ji). Zero distances get weight 1 even when sigma == 0.
    """
    X = np.asarray(features, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    n = X.shape[0]
    if not np.all(np.isfinite(X)):
        raise ValueError("features contain NaN/Inf")
    if k < 1 or k >= n:
        raise ValueError(f"k={k} must satisfy 1 <= k <= n-1 (n={n})")

    sq = np.sum(X * X, axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (X @ X.T)
    np.clip(d2, 0.0, None, out=d2)
    dist = np.sqrt(d2)
    np.fill_diagonal(dist, np.inf)

    # k-th nearest distance per node; ties at that distance are all kept.
    kth = np.partition(dist, k - 1, axis=1)[:, k - 1]
    neighbor = dist <= kth[:, None]

    sel = dist[neighbor]
    sigma = float(sel.mean())
    W = np.zeros((n, n))
    if sigma > 0:
        W[neighbor] = np.exp(-(dist[neighbor] ** 2) / sigma**2)
    else:
        # All retained distances are zero; the kernel degenerates to 1.
        W[neighbor] = 1.0
    W = np.maximum(W, W.T)
    np.fill_diagonal(W, 0.0)
    return laplacian_from_weights(SparseSym.from_dense(W))


@dataclass(frozen=True)
class RatingMatrix:
    """Partially observed m x n rating matrix stored as triplets."""

    m: int
    n: int
    rows: np.ndarray
    cols: np.ndarray
    vals: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", np.asarray(self.rows, dtype=np.int64))
        object.__setattr__(self, "cols", np.asarray(self.cols, dtype=np.int64))
        object.__setattr__(self, "vals", np.asarray(self.vals, dtype=np.float64))
        if not (self.rows.shape == self.cols.shape == self.vals.shape):
            raise ValueError("triplet arrays must align")
        if self.rows.size:
            if self.rows.min() < 0 or self.rows.max() >= self.m:
                raise ValueError("row index out of range")
            if self.cols.min() < 0 or self.cols.max() >= self.n:
                raise ValueError("col index out of range")
            if not np.all(np.isfinite(self.vals)):
                raise ValueError("non-finite rating value")
            lin = self.rows * self.n + self.cols
            if np.unique(lin).size != lin.size:
                raise ValueError("duplicate (row, col) entry")

    @property
    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.vals.tolist()))

    @property
    def known_mask(self):
        return set(zip(self.rows.tolist(), self.cols.tolist()))

    @property
    def n_known(self) -> int:
        return int(self.rows.size)

    def density(self) -> float:
        return self.n_known / float(self.m * self.n)

    def to_dense(self, fill: float = 0.0) -> np.ndarray:
        Y = np.full((self.m, self.n), fill, dtype=np.float64)
        Y[self.rows, self.cols] = self.vals
        return Y

    def mask_bool(self) -> np.ndarray:
        M = np.zeros((self.m, self.n), dtype=bool)
        M[self.rows, self.cols] = True
        return M

    def subset(self, positions) -> "RatingMatrix":
        idx = np.asarray(positions, dtype=np.int64)
        return RatingMatrix(self.m, self.n, self.rows[idx], self.cols[idx], self.vals[idx])

    @classmethod
    def from_dense(cls, Y, mask=None) -> "RatingMatrix":
        Y = np.asarray(Y, dtype=np.float64)
        m, n = Y.shape
        if mask is None:
            mask = np.isfinite(Y)
        rows, cols = np.nonzero(mask)
        return cls(m, n, rows, cols, Y[rows, cols])


def content_graph(Z: RatingMatrix, axis: str = "rows", d_s: Optional[float] = None,
                  gamma: Optional[float] = None) -> GraphLaplacian:
    """Similarity graph from co-rating overlap.

    For nodes i, j with overlap R_ij (entries rated by both), the distance is
    d_ij = ||z_i(R_ij) - z_j(R_ij)||_2 / sqrt(|R_ij|), infinite when the
    overlap is empty. Weights are exp(-(d_ij - d_min)^2 / gamma) for
    d_ij <= d_s and 0 otherwise.

    Defaults: d_s is the 60th percentile of the finite pairwise distances and
    gamma the mean of (d_ij - d_min)^2 over retained edges. A disconnected
    result is allowed but reported via a warning with the component count.
    """
    if axis not in ("rows", "cols"):
        raise ValueError("axis must be 'rows' or 'cols'")
    V = Z.to_dense()
    M = Z.mask_bool().astype(np.float64)
    if axis == "cols":
        V = V.T
        M = M.T
    n = V.shape[0]
    if n < 2:
        raise ValueError("need at least 2 nodes to build a graph")

    A = V * M
    counts = M @ M.T
    s_sq = (A * A) @ M.T
    cross = A @ A.T
    d2_sum = s_sq + s_sq.T - 2.0 * cross
    np.clip(d2_sum, 0.0, None, out=d2_sum)

    with np.errstate(divide="ignore", invalid="ignore"):
        dist = np.sqrt(d2_sum / counts)
    dist[counts == 0] = np.inf
    np.fill_diagonal(dist, np.inf)

    offdiag = ~np.eye(n, dtype=bool)
    finite = np.isfinite(dist) & offdiag
    if not finite.any():
        raise ValueError("every pairwise overlap is empty; no graph can be built")

    d_min = float(dist[finite].min())
    if d_s is None:
        d_s = float(np.percentile(dist[finite], 60))
    retained = finite & (dist <= d_s)
    if gamma is None:
        dev = (dist[retained] - d_min) ** 2
        gamma = float(dev.mean()) if dev.size else 0.0

    W = np.zeros((n, n))
    if gamma > 0:
        W[retained] = np.exp(-((dist[retained] - d_min) ** 2) / gamma)
    else:
        # All retained distances sit at d_min; the kernel degenerates to 1.
        W[retained] = 1.0
    W = np.maximum(W, W.T)  # symmetric by construction; guard roundoff
    np.fill_diagonal(W, 0.0)

    G = laplacian_from_weights(SparseSym.from_dense(W))
    ncomp = G.n_components()
    if ncomp > 1:
        warnings.warn(f"content graph is disconnected ({ncomp} components)")
    return G


def community_graph(n_nodes: int, n_communities: int, p_in: float, p_out: float,
                    seed: int = 0, max_retries: int = 50):
    """Planted-partition graph with unit weights, resampled until connected.

    Returns (GraphLaplacian, labels). Communities are contiguous index blocks
    with sizes differing by at most one.
    """
    if n_communities < 1 or n_communities > n_nodes:
        raise ValueError("need 1 <= n_communities <= n_nodes")
    if not (0 <= p_out < p_in <= 1):
        raise ValueError("need 0 <= p_out < p_in <= 1")
    sizes = [n_nodes // n_communities + (1 if c < n_nodes % n_communities else 0)
             for c in range(n_communities)]
    labels = np.repeat(np.arange(n_communities), sizes)
    rng = np.random.default_rng(seed)

    same = labels[:, None] == labels[None, :]
    probs = np.where(same, p_in, p_out)
    iu = np.triu_indices(n_nodes, k=1)

    for _ in range(max_retries):
        draw = rng.random(iu[0].size) < probs[iu]
        W = np.zeros((n_nodes, n_nodes))
        W[iu[0][draw], iu[1][draw]] = 1.0
        W += W.T
        Wsp = SparseSym.from_dense(W)
        ncomp, _ = connected_components(Wsp._scipy(), directed=False)
        if ncomp == 1:
            return laplacian_from_weights(Wsp), labels
    raise RuntimeError(
        f"could not draw a connected graph in {max_retries} attempts "
        f"(n={n_nodes}, k={n_communities}, p_in={p_in}, p_out={p_out})"
    )


@dataclass(frozen=True)
class SyntheticRatings:
    """Output bundle of synthetic_netflix."""

    ratings: RatingMatrix
    row_graph: GraphLaplacian
    col_graph: GraphLaplacian
    ground_truth: np.ndarray
    row_labels: np.ndarray
    col_labels: np.ndarray


def synthetic_netflix(m: int, n: int, n_row_comm: int = 4, n_col_comm: int = 4,
                      noise_sigma: float = 0.0, seed: int = 0,
                      p_in: float = 0.3, p_out: float = 0.01) -> SyntheticRatings:
    """Fully observed block-smooth rating matrix with its factor graphs.

    Ground truth = per-(row block, col block) base level in {1..5} plus a
    smooth perturbation spanned by the 3 lowest nonconstant eigenvectors of
    each factor Laplacian, clipped to [1, 5]. Observations add optional
    i.i.d. Gaussian noise (std = noise_sigma), clipped to the same range, at
    100% density.
    """
    if m < 2 or n < 2:
        raise ValueError("need m, n >= 2")
    if n_row_comm > m or n_col_comm > n:
        raise ValueError("community counts cannot exceed dimensions")
    rng = np.random.default_rng(seed)
    row_graph, row_labels = community_graph(
        m, n_row_comm, p_in, p_out, seed=int(rng.integers(2**31)))
    col_graph, col_labels = community_graph(
        n, n_col_comm, p_in, p_out, seed=int(rng.integers(2**31)))

    levels = rng.integers(1, 6, size=(n_row_comm, n_col_comm)).astype(np.float64)
    base = levels[row_labels][:, col_labels]

    n_modes = 3
    row_pairs = dense_sym_eig(row_graph.laplacian.to_dense())
    col_pairs = dense_sym_eig(col_graph.laplacian.to_dense())
    Ur = np.column_stack([p.vec for p in row_pairs[1:1 + min(n_modes, m - 1)]])
    Uc = np.column_stack([p.vec for p in col_pairs[1:1 + min(n_modes, n - 1)]])
    C = rng.standard_normal((Ur.shape[1], Uc.shape[1]))
    bump = Ur @ C @ Uc.T
    peak = np.max(np.abs(bump))
    if peak > 0:
        bump *= 0.5 / peak

    truth = np.clip(base + bump, 1.0, 5.0)
    obs = truth
    if noise_sigma > 0:
        obs = np.clip(truth + rng.normal(0.0, noise_sigma, size=truth.shape), 1.0, 5.0)
    return SyntheticRatings(
        ratings=RatingMatrix.from_dense(obs),
        row_graph=row_graph,
        col_graph=col_graph,
        ground_truth=truth,
        row_labels=row_labels,
        col_labels=col_labels,
    )


@dataclass
class ProductOperator:
    """Q = diag(sample) + alpha * I (x) L_r + beta * L_c (x) I, applied implicitly.

    sample_diag is the 0/1 indicator over the mn product-graph nodes in
    column-major order. Everything else is immutable; samplers mutate only
    their own copy of sample_diag.
    """

    row_graph: GraphLaplacian
    col_graph: GraphLaplacian
    alpha: float
    beta: float
    sample_diag: np.ndarray = None

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("alpha and beta must be nonnegative")
        if self.sample_diag is None:
            self.sample_diag = np.zeros(self.size, dtype=np.float64)
        else:
            self.sample_diag = np.asarray(self.sample_diag, dtype=np.float64)
            if self.sample_diag.shape != (self.size,):
                raise ValueError("sample_diag must have length m*n")
            bad = ~np.isin(self.sample_diag, (0.0, 1.0))
            if bad.any():
                raise ValueError("sample_diag entries must be 0 or 1")
        # cache csr views; reshape-based matvec never materializes mn x mn
        self._Lr = self.row_graph.csr()
        self._Lc = self.col_graph.csr()

    @property
    def m(self) -> int:
        return self.row_graph.n

    @property
    def n(self) -> int:
        return self.col_graph.n

    @property
    def size(self) -> int:
        return self.row_graph.n * self.col_graph.n

    def copy(self) -> "ProductOperator":
        return ProductOperator(self.row_graph, self.col_graph, self.alpha,
                               self.beta, self.sample_diag.copy())

    def diagonal(self) -> np.ndarray:
        dr = self._Lr.diagonal()
        dc = self._Lc.diagonal()
        smooth = self.alpha * np.tile(dr, self.n) + self.beta * np.repeat(dc, self.m)
        return self.sample_diag + smooth

    def apply(self, x: np.ndarray) -> np.ndarray:
        return product_apply(self, x)

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return product_apply(self, x)


def product_apply(op: ProductOperator, x) -> np.ndarray:
    """Apply Q to a column-major vectorized m x n matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (op.size,):
        raise ValueError(f"dimension mismatch: operator is {op.size}, vector is {x.shape}")
    X = x.reshape((op.m, op.n), order="F")
    smooth = op.alpha * (op._Lr @ X) + op.beta * (op._Lc @ X.T).T
    return op.sample_diag * x + smooth.ravel(order="F")


def product_dense(op: ProductOperator, cap: int = 4096) -> np.ndarray:
    """Materialize Q. Oracle/test use only; refuses mn above `cap`."""
    mn = op.size
    if mn > cap:
        raise ValueError(f"refusing to materialize {mn} x {mn} product operator")
    Lr = op.row_graph.laplacian.to_dense()
    Lc = op.col_graph.laplacian.to_dense()
    Q = op.alpha * np.kron(np.eye(op.n), Lr) + op.beta * np.kron(Lc, np.eye(op.m))
    Q[np.diag_indices(mn)] += op.sample_diag
    return Q
