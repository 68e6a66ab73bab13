"""Sparse symmetric linear algebra kernels.

CSR storage, SpMV, conjugate gradient, a single-vector LOBPCG for the smallest
eigenpair (with warm start), a dense symmetric eigendecomposition oracle for
small problems, and Gershgorin disc utilities.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

# Module-wide solver defaults. CG is used for linear systems, LOBPCG for the
# smallest eigenpair; both caps are generous for the problem sizes here.
CG_TOL = 1e-8
LOBPCG_TOL = 1e-6
LOBPCG_MAX_ITER = 500
DENSE_EIG_CAP = 512

SYMMETRY_TOL = 1e-12


class ConvergenceError(RuntimeError):
    """Iterative solver failed to reach its tolerance."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class SparseSym:
    """Symmetric sparse matrix in CSR form.

    Parameters
    ----------
    n : int
        Dimension.
    row_offsets, col_indices, values : ndarray
        Standard CSR arrays. The stored pattern must be structurally and
        numerically symmetric (tolerance 1e-12) with no duplicate entries.
    """

    n: int
    row_offsets: np.ndarray
    col_indices: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_offsets", np.asarray(self.row_offsets, dtype=np.int64))
        object.__setattr__(self, "col_indices", np.asarray(self.col_indices, dtype=np.int64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        if self.row_offsets.shape != (self.n + 1,):
            raise ValueError("row_offsets must have length n + 1")
        if np.any(np.diff(self.row_offsets) < 0):
            raise ValueError("row_offsets must be monotone")
        if self.col_indices.shape != self.values.shape:
            raise ValueError("col_indices and values must align")
        m = self._scipy()
        # Duplicate detection: canonical CSR has strictly increasing column
        # indices within each row.
        for i in range(self.n):
            cols = m.indices[m.indptr[i]:m.indptr[i + 1]]
            if cols.size and np.any(np.diff(cols) <= 0):
                raise ValueError(f"duplicate or unsorted entries in row {i}")
        d = m - m.T
        if d.nnz and np.max(np.abs(d.data)) > SYMMETRY_TOL:
            raise ValueError("matrix is not symmetric within 1e-12")

    def _scipy(self) -> sp.csr_matrix:
        m = sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(self.n, self.n)
        )
        m.sort_indices()
        return m

    @property
    def nnz(self) -> int:
        return int(self.values.size)

    def to_dense(self) -> np.ndarray:
        return self._scipy().toarray()

    def diagonal(self) -> np.ndarray:
        return self._scipy().diagonal()

    @classmethod
    def from_scipy(cls, m) -> "SparseSym":
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a, tol: float = 0.0) -> "SparseSym":
        a = np.asarray(a, dtype=np.float64)
        if tol > 0:
            a = np.where(np.abs(a) > tol, a, 0.0)
        return cls.from_scipy(sp.csr_matrix(a))

    @classmethod
    def identity(cls, n: int) -> "SparseSym":
        return cls.from_scipy(sp.identity(n, format="csr"))


LinearOperator = Union[SparseSym, np.ndarray, sp.spmatrix, Callable[[np.ndarray], np.ndarray]]


def as_apply(A: LinearOperator) -> Callable[[np.ndarray], np.ndarray]:
    """Normalize matrices / callables to an apply(x) closure."""
    if isinstance(A, SparseSym):
        m = A._scipy()
        return lambda x: m @ x
    if sp.issparse(A):
        return lambda x: A @ x
    if isinstance(A, np.ndarray):
        return lambda x: A @ x
    if callable(A):
        return A
    raise TypeError(f"cannot interpret {type(A)!r} as a linear operator")


def spmv(A: SparseSym, x) -> np.ndarray:
    """Sparse matrix-vector product A @ x.

    Accumulation order is fixed (row-major CSR traversal), so results are
    bit-identical across runs for identical inputs.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.n,):
        raise ValueError(f"dimension mismatch: operator is {A.n}, vector is {x.shape}")
    return A._scipy() @ x


@dataclass(frozen=True)
class EigenPair:
    """Eigenvalue with its unit-norm eigenvector plus solver bookkeeping."""

    value: float
    vec: np.ndarray
    residual: float = 0.0
    iterations: int = 0
    converged: bool = True


@dataclass(frozen=True)
class DiscBound:
    """Gershgorin disc of one matrix row: [center - radius, center + radius]."""

    center: float
    radius: float

    @property
    def left(self) -> float:
        return self.center - self.radius

    @property
    def right(self) -> float:
        return self.center + self.radius


@dataclass(frozen=True)
class SolverOptions:
    """Tolerances for the iterative solvers.

    tol / max_iter of None pick the per-solver defaults (CG: 1e-8 and 10n,
    LOBPCG: 1e-6 and 500). seed drives any random initial vectors.
    """

    tol: Optional[float] = None
    max_iter: Optional[int] = None
    seed: int = 0

    def __post_init__(self):
        if self.tol is not None and not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be at least 1")


def cg_solve(apply: LinearOperator, b, opts: Optional[SolverOptions] = None,
             x0=None) -> np.ndarray:
    """Conjugate gradient for a symmetric positive definite system.

    Parameters
    ----------
    apply : operator
        SPD operator (callable, SparseSym, scipy sparse, or dense array).
    b : ndarray
        Right-hand side. b = 0 returns x = 0 immediately.
    opts : SolverOptions
        tol is a relative residual bound (default 1e-8); max_iter defaults
        to 10n.
    x0 : ndarray, optional
        Initial guess.

    Raises
    ------
    ConvergenceError
        If max_iter is exhausted (final residual attached) or the iteration
        produces non-finite values / detects an indefinite operator.
    """
    opts = opts or SolverOptions()
    A = as_apply(apply)
    b = np.asarray(b, dtype=np.float64)
    n = b.size
    tol = CG_TOL if opts.tol is None else opts.tol
    max_iter = 10 * n if opts.max_iter is None else opts.max_iter

    b_norm = np.linalg.norm(b)
    if b_norm == 0.0:
        return np.zeros(n)

    if x0 is None:
        x = np.zeros(n)
        r = b.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        r = b - A(x)
    p = r.copy()
    rs = float(r @ r)
    if np.sqrt(rs) / b_norm <= tol:
        return x

    for _ in range(max_iter):
        Ap = A(p)
        pAp = float(p @ Ap)
        if not np.isfinite(pAp):
            raise ConvergenceError("NaN/Inf encountered in CG")
        if pAp <= 0.0:
            raise ConvergenceError("operator is not positive definite (p'Ap <= 0)")
        gamma = rs / pAp
        x = x + gamma * p
        r = r - gamma * Ap
        rs_new = float(r @ r)
        if not np.isfinite(rs_new):
            raise ConvergenceError("NaN/Inf encountered in CG")
        if np.sqrt(rs_new) / b_norm <= tol:
            return x
        p = r + (rs_new / rs) * p
        rs = rs_new

    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations "
        f"(relative residual {np.sqrt(rs) / b_norm:.3e})",
        residual=np.sqrt(rs) / b_norm,
    )


def _orthonormalize(columns: Sequence[np.ndarray], drop_tol: float = 1e-12):
    """Sequential Gram-Schmidt with a second orthogonalization pass.

    Near-dependent columns are dropped, which is what turns a degenerate
    three-term LOBPCG basis into a plain steepest-descent step.
    """
    basis = []
    for c in columns:
        v = np.array(c, dtype=np.float64)
        scale = np.linalg.norm(v)
        if scale == 0.0:
            continue
        for _ in range(2):
            for u in basis:
                v -= (u @ v) * u
        norm = np.linalg.norm(v)
        if norm > drop_tol * scale:
            basis.append(v / norm)
    return basis


def lobpcg_smallest(apply: LinearOperator, x0, opts: Optional[SolverOptions] = None,
                    diag_precond=None) -> EigenPair:
    """Smallest eigenpair of a symmetric PSD operator, block size 1.

    Each iteration does a Rayleigh-Ritz step on span{x, w, p} where w is the
    (optionally Jacobi-preconditioned) residual and p the previous search
    direction. x0 seeds the subspace, so passing the previous eigenvector
    warm-starts the solve.

    Parameters
    ----------
    apply : operator
    x0 : ndarray
        Nonzero initial vector.
    opts : SolverOptions
        tol bounds the absolute residual ||A v - lambda v|| (default 1e-6);
        max_iter defaults to 500.
    diag_precond : ndarray, optional
        Positive diagonal of the operator; enables the Jacobi preconditioner.

    Returns
    -------
    EigenPair
        Best iterate; `converged` is False if the tolerance was not reached
        within max_iter.
    """
    opts = opts or SolverOptions()
    A = as_apply(apply)
    x = np.asarray(x0, dtype=np.float64).copy()
    norm0 = np.linalg.norm(x)
    if norm0 == 0.0 or not np.isfinite(norm0):
        raise ValueError("initial vector must be nonzero and finite")
    x /= norm0

    tol = LOBPCG_TOL if opts.tol is None else opts.tol
    max_iter = LOBPCG_MAX_ITER if opts.max_iter is None else opts.max_iter

    if diag_precond is not None:
        d = np.asarray(diag_precond, dtype=np.float64)
        d = np.where(d > 1e-12, d, 1.0)
        precond = lambda r: r / d
    else:
        precond = lambda r: r

    Ax = A(x)
    lam = float(x @ Ax)
    p = None
    res = np.linalg.norm(Ax - lam * x)

    for it in range(max_iter):
        if res <= tol:
            return EigenPair(lam, x, residual=float(res), iterations=it, converged=True)
        w = precond(Ax - lam * x)
        cand = [x, w] if p is None else [x, w, p]
        basis = _orthonormalize(cand)
        if len(basis) == 1:
            # Residual vanished relative to the basis scale; polish the
            # Rayleigh quotient and report what we have.
            lam = float(x @ Ax)
            res = np.linalg.norm(Ax - lam * x)
            return EigenPair(lam, x, residual=float(res), iterations=it + 1,
                             converged=bool(res <= tol))
        B = np.column_stack(basis)
        AB = np.column_stack([A(u) for u in basis])
        G = B.T @ AB
        G = 0.5 * (G + G.T)
        evals, evecs = np.linalg.eigh(G)
        c = evecs[:, 0]
        x_new = B @ c
        Ax_new = AB @ c
        # Next conjugate direction: the part of the step outside the old x.
        step = B[:, 1:] @ c[1:]
        step_norm = np.linalg.norm(step)
        p = step / step_norm if step_norm > 1e-14 else None
        nrm = np.linalg.norm(x_new)
        x = x_new / nrm
        Ax = Ax_new / nrm
        lam = float(evals[0])
        res = np.linalg.norm(Ax - lam * x)

    return EigenPair(lam, x, residual=float(res), iterations=max_iter,
                     converged=bool(res <= tol))


def dense_sym_eig(A, cap: int = DENSE_EIG_CAP):
    """Full spectrum of a dense symmetric matrix, ascending.

    Small-problem oracle; refuses matrices above `cap` or with asymmetry
    beyond 1e-10. Returns a list of EigenPair with orthonormal eigenvectors.
    """
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    n = A.shape[0]
    if n > cap:
        raise ValueError(f"dimension {n} above dense oracle cap {cap}")
    if n and np.max(np.abs(A - A.T)) > 1e-10:
        raise ValueError("matrix asymmetry beyond 1e-10")
    evals, evecs = np.linalg.eigh(0.5 * (A + A.T))
    resid = np.linalg.norm(A @ evecs - evecs * evals, axis=0)
    return [
        EigenPair(float(evals[i]), evecs[:, i], residual=float(resid[i]))
        for i in range(n)
    ]


def gershgorin_bounds(A: SparseSym):
    """Per-row Gershgorin discs; min over left ends lower-bounds every eigenvalue."""
    discs = []
    for i in range(A.n):
        lo, hi = A.row_offsets[i], A.row_offsets[i + 1]
        cols = A.col_indices[lo:hi]
        vals = A.values[lo:hi]
        on_diag = cols == i
        center = float(vals[on_diag].sum())
        radius = float(np.abs(vals[~on_diag]).sum())
        discs.append(DiscBound(center=center, radius=radius))
    return discs


def save_edge_list(A: SparseSym, path) -> None:
    """Write the upper triangle (incl. diagonal) as `i j value` lines, 0-based."""
    with open(path, "w") as f:
        for i in range(A.n):
            lo, hi = A.row_offsets[i], A.row_offsets[i + 1]
            for c, v in zip(A.col_indices[lo:hi], A.values[lo:hi]):
                if c >= i:
                    f.write(f"{i} {c} {float(v)!r}\n")


def load_edge_list(path, n: Optional[int] = None) -> SparseSym:
    """Read an `i j value` upper-triangle edge list and mirror it."""
    rows, cols, vals = [], [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 3:
                raise ValueError(f"{path}:{lineno}: expected 'i j value'")
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError as e:
                raise ValueError(f"{path}:{lineno}: {e}") from None
            if i < 0 or j < 0:
                raise ValueError(f"{path}:{lineno}: negative index")
            if j < i:
                raise ValueError(f"{path}:{lineno}: lower-triangle entry in upper-triangle file")
            rows.append(i)
            cols.append(j)
            vals.append(v)
            if i != j:
                rows.append(j)
                cols.append(i)
                vals.append(v)
    size = n if n is not None else (max(max(rows, default=-1), max(cols, default=-1)) + 1)
    m = sp.csr_matrix((vals, (rows, cols)), shape=(size, size))
    return SparseSym.from_scipy(m)
