"""Direct solution of the per-step saddle-point system

    [ A   B^T ] [ x   ]   [ f ]
    [ B   0   ] [ lam ] = [ q ]

with A = M + tau S symmetric positive definite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.linalg import lapack

from .assembly import ConstraintMatrix

# above this many unknowns non-banded systems go to sparse LU instead of dense
DENSE_LIMIT = 3000
RESIDUAL_RTOL = 1e-9


class KKTError(RuntimeError):
    pass


class RankDeficientError(KKTError):
    def __init__(self, rows, labels):
        self.rows = list(rows)
        self.labels = list(labels)
        super().__init__(f"constraint rows are linearly dependent: {', '.join(self.labels)}")


class SolverBreakdown(KKTError):
    def __init__(self, message, pivots=None):
        self.pivots = pivots
        super().__init__(message)


@dataclass
class SaddleSystem:
    A: object  # sparse or dense, symmetric positive definite
    B: ConstraintMatrix
    rhs_primal: np.ndarray

    @property
    def rhs_dual(self) -> np.ndarray:
        return self.B.rhs

    @property
    def num_primal(self) -> int:
        return self.A.shape[0]

    def block_matrix(self, dense: bool = True):
        A = sp.csr_matrix(self.A)
        B = self.B.matrix
        m = B.shape[0]
        K = sp.bmat([[A, B.T], [B, sp.csr_matrix((m, m))]], format="csc")
        return K.toarray() if dense else K

    def block_rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_primal, self.rhs_dual])


@dataclass
class KKTSolution:
    x: np.ndarray
    multipliers: np.ndarray
    residual: float
    warnings: list = field(default_factory=list)


def kkt_residual(sys: SaddleSystem, x, lam) -> float:
    B = sys.B.matrix
    r1 = sys.A @ x + B.T @ lam - sys.rhs_primal
    r2 = B @ x - sys.rhs_dual
    return float(np.max(np.abs(r1), initial=0.0) + np.max(np.abs(r2), initial=0.0))


def dependent_rows(B, tol: float = 1e-10) -> np.ndarray:
    """Rows of B that lie in the span of the other rows (pivoted QR on B^T)."""
    Bd = B.toarray() if sp.issparse(B) else np.asarray(B)
    if Bd.shape[0] == 0:
        return np.zeros(0, dtype=int)
    _, R, piv = sla.qr(Bd.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    scale = diag[0] if diag.size and diag[0] > 0 else 1.0
    rank = int(np.sum(diag > tol * scale))
    extra = list(piv[rank:]) + list(range(min(Bd.shape), Bd.shape[0]))
    return np.array(sorted(set(int(r) for r in extra)), dtype=int)


def _dense_factor(K):
    """Bunch-Kaufman LDL^T (LAPACK sytrf) of the dense block matrix."""
    K = K.toarray() if sp.issparse(K) else np.asarray(K)
    lu, ipiv, info = lapack.dsytrf(K, lower=1)
    if info < 0:
        raise SolverBreakdown(f"dsytrf: illegal argument {-info}")
    diag = np.abs(np.diag(lu))
    if info > 0:
        raise SolverBreakdown(f"exactly singular pivot D[{info - 1}]", pivots=diag)

    def solve(rhs):
        sol, info = lapack.dsytrs(lu, ipiv, rhs, lower=1)
        if info != 0:
            raise SolverBreakdown(f"dsytrs failed with info={info}", pivots=diag)
        return sol

    return solve, diag


def _sparse_factor(K):
    try:
        lu = spla.splu(sp.csc_matrix(K))
    except RuntimeError as exc:
        raise SolverBreakdown(f"sparse LU failed: {exc}") from exc
    return lu.solve, np.abs(lu.U.diagonal())


def _banded_factor(rows, cols, data, size):
    """LU with partial pivoting (LAPACK gbtrf) of a banded matrix in COO form."""
    off = rows - cols
    kl = int(max(off.max(initial=0), 0))
    ku = int(max(-off.min(initial=0), 0))
    ab = np.zeros((2 * kl + ku + 1, size))
    ab[kl + ku + off, cols] = data
    lu, piv, info = lapack.dgbtrf(ab, kl, ku)
    diag = np.abs(lu[kl + ku])
    if info != 0:
        raise SolverBreakdown(f"dgbtrf: singular pivot U[{info - 1}]", pivots=diag)

    def solve(rhs):
        sol, info = lapack.dgbtrs(lu, kl, ku, rhs, piv)
        if info != 0:
            raise SolverBreakdown(f"dgbtrs failed with info={info}", pivots=diag)
        return sol

    return solve, diag


def band_ordering(sys: SaddleSystem, dofs_per_node: int) -> np.ndarray:
    """Permutation that interleaves each multiplier with the DOFs it couples.

    Primal DOFs stay in node order; a constraint row is placed after the DOFs
    of the nodes it touches, which makes the block matrix banded unless a row
    couples distant nodes (periodic conditions).
    """
    n = sys.num_primal
    B = sp.csr_matrix(sys.B.matrix)
    B.sort_indices()
    primal_key = 2.0 * (np.arange(n) // dofs_per_node)
    row_key = np.full(B.shape[0], 0.5)
    nonempty = np.diff(B.indptr) > 0
    if nonempty.any():
        nodes = B.indices // dofs_per_node
        first = nodes[B.indptr[:-1][nonempty]]
        last = nodes[B.indptr[1:][nonempty] - 1]
        row_key[nonempty] = first + last + 0.5
    return np.argsort(np.concatenate([primal_key, row_key]), kind="stable")


def _permuted_entries(sys: SaddleSystem, perm: np.ndarray):
    """COO entries of the block matrix after symmetric permutation."""
    n = sys.num_primal
    pos = np.empty_like(perm)
    pos[perm] = np.arange(perm.size)
    A = sp.coo_matrix(sys.A)
    B = sp.coo_matrix(sys.B.matrix)
    rows = np.concatenate([pos[A.row], pos[n + B.row], pos[B.col]])
    cols = np.concatenate([pos[A.col], pos[B.col], pos[n + B.row]])
    data = np.concatenate([A.data, B.data, B.data])
    return rows, cols, data


def _bandwidth(rows, cols) -> int:
    off = rows - cols
    return int(off.max(initial=0) - off.min(initial=0) + 1)


METHODS = ("auto", "banded", "dense", "sparse")


def solve_kkt(sys: SaddleSystem, method: str = "auto",
              dofs_per_node: int | None = None) -> KKTSolution:
    """Solve the block system by a direct factorisation with pivoting.

    ``method`` is one of ``banded`` (node-interleaved ordering, banded LU),
    ``dense`` (Bunch-Kaufman LDL^T of the full matrix), ``sparse`` (SuperLU)
    or ``auto``, which picks banded when the interleaved matrix is narrow.
    ``dofs_per_node`` (2 * dim for Hermite curves) drives the interleaving.

    Rows of B that vanish identically are trivially satisfiable when their
    right-hand side is zero; they are left out of the factorisation, get a zero
    multiplier and are reported in ``warnings``.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; choose from {METHODS}")
    n = sys.num_primal
    B = sys.B
    warnings = []
    zero = B.zero_rows
    if zero.size:
        bad = [r for r in zero if B.rhs[r] != 0.0]
        if bad:
            raise RankDeficientError(bad, [B.labels[r] for r in bad])
        warnings.append("zero constraint rows: " + ", ".join(B.labels[r] for r in zero))
        active = np.setdiff1d(np.arange(B.num_rows), zero)
        reduced = SaddleSystem(sys.A, B.select(active), sys.rhs_primal)
    else:
        active = np.arange(B.num_rows)
        reduced = sys

    m = reduced.B.num_rows
    if m > n:
        rows = dependent_rows(reduced.B.matrix)
        raise RankDeficientError(active[rows], [reduced.B.labels[r] for r in rows])

    rhs = reduced.block_rhs()
    Bm = reduced.B.matrix

    def apply(v):
        return np.concatenate([reduced.A @ v[:n] + Bm.T @ v[n:], Bm @ v[:n]])

    if method in ("auto", "banded"):
        perm = band_ordering(reduced, dofs_per_node or 1)
        entries = _permuted_entries(reduced, perm)
        if method == "auto":
            narrow = 3 * _bandwidth(*entries[:2]) < n + m
            method = "banded" if narrow else ("dense" if n + m <= DENSE_LIMIT else "sparse")
    try:
        if method == "banded":
            solve_p, pivots = _banded_factor(*entries, n + m)
            pos = np.empty_like(perm)
            pos[perm] = np.arange(perm.size)

            def solve(r):
                return solve_p(r[perm])[pos]
        elif method == "dense":
            solve, pivots = _dense_factor(reduced.block_matrix(dense=True))
        else:
            solve, pivots = _sparse_factor(reduced.block_matrix(dense=False))
        sol = solve(rhs)
        # one step of iterative refinement with the same factors
        if np.all(np.isfinite(sol)):
            sol = sol + solve(rhs - apply(sol))
    except SolverBreakdown:
        _raise_if_rank_deficient(reduced, active)
        raise

    x, lam_active = sol[:n], sol[n:]
    lam = np.zeros(B.num_rows)
    lam[active] = lam_active
    res = kkt_residual(sys, x, lam)
    tol = RESIDUAL_RTOL * (1.0 + np.max(np.abs(rhs), initial=0.0))
    if not np.isfinite(res) or res > tol:
        _raise_if_rank_deficient(reduced, active)
        raise SolverBreakdown(f"KKT residual {res:.3e} exceeds {tol:.3e}; "
                              f"smallest pivot {pivots.min():.3e}, "
                              f"largest {pivots.max():.3e}", pivots=pivots)
    return KKTSolution(x, lam, res, warnings)


def _raise_if_rank_deficient(sys: SaddleSystem, active):
    rows = dependent_rows(sys.B.matrix)
    if rows.size:
        raise RankDeficientError(active[rows], [sys.B.labels[r] for r in rows])
