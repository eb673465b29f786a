import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from elasticflow.assembly import (BoundarySpec, ConstraintMatrix, boundary_rows,
                                  constraint_matrix, mass_matrix, stack_constraints,
                                  stiffness_matrix)
from elasticflow.hermite import CurveState
from elasticflow.interpolate import interp_hermite
from elasticflow.mesh import uniform_dissection
from elasticflow.saddle import (RankDeficientError, SaddleSystem, band_ordering,
                                dependent_rows, solve_kkt)


def _system(M, dim, mode, bc, seed, tau=0.05):
    rng = np.random.default_rng(seed)
    d = uniform_dissection(0.0, 2.0, M)
    Z = CurveState(d, dim, rng.normal(size=2 * (M + 1) * dim))
    A = mass_matrix(d, dim) + tau * stiffness_matrix(d, dim)
    arc = constraint_matrix(Z, mode)
    skip = {f"arc@x{0 if e == 'a' else M}" for e in bc.slope}
    if bc.periodic:
        skip.add(f"arc@x{M}")
    arc = arc.select([i for i, lab in enumerate(arc.labels) if lab not in skip])
    B = stack_constraints(arc, boundary_rows(bc, d, dim))
    return SaddleSystem(A, B, rng.normal(size=A.shape[0]))


def _oracle(sys):
    K = sys.block_matrix(dense=True)
    sol = np.linalg.solve(K, sys.block_rhs())
    return sol[:sys.num_primal], sol[sys.num_primal:]


BCS = [BoundarySpec.semi_clamped(), BoundarySpec.clamped(), BoundarySpec(),
       BoundarySpec(position=("a",), periodic=True)]


@given(st.integers(2, 12), st.integers(1, 3), st.sampled_from(["P1", "P2"]),
       st.sampled_from(range(len(BCS))), st.sampled_from(["auto", "banded", "dense", "sparse"]),
       st.integers(0, 10_000))
def test_matches_dense_oracle(M, dim, mode, bci, method, seed):
    sys = _system(M, dim, mode, BCS[bci], seed)
    assert sys.num_primal + sys.B.num_rows <= 500
    x, lam = _oracle(sys)
    sol = solve_kkt(sys, method=method, dofs_per_node=2 * dim)
    scale = 1.0 + np.max(np.abs(x))
    assert np.max(np.abs(sol.x - x)) <= 1e-10 * scale
    assert np.max(np.abs(sol.multipliers - lam)) <= 1e-10 * (1.0 + np.max(np.abs(lam)))
    assert sol.residual <= 1e-10 * (1.0 + np.max(np.abs(sys.block_rhs())))


def test_band_ordering_is_narrow():
    sys = _system(40, 3, "P2", BoundarySpec.clamped(), 0)
    perm = band_ordering(sys, 6)
    K = sys.block_matrix(dense=False)[perm][:, perm].tocoo()
    assert np.max(np.abs(K.row - K.col)) < 30
    assert sorted(perm) == list(range(K.shape[0]))


def test_duplicate_constraint_detected():
    sys = _system(4, 2, "P1", BoundarySpec.semi_clamped(), 1)
    B = sys.B
    dup = ConstraintMatrix(sp.vstack([B.matrix, 2.0 * B.matrix[0]], format="csr"),
                           np.append(B.rhs, 0.0), B.labels + ["copy"], None)
    with pytest.raises(RankDeficientError) as err:
        solve_kkt(SaddleSystem(sys.A, dup, sys.rhs_primal))
    assert "copy" in err.value.labels or B.labels[0] in err.value.labels


def test_arc_rows_at_clamped_ends_are_dependent():
    d = uniform_dissection(0.0, 1.0, 3)
    Z = interp_hermite(lambda x: np.stack([x, 0 * x], 1),
                       lambda x: np.stack([1 + 0 * x, 0 * x], 1), d)
    B = stack_constraints(constraint_matrix(Z, "P1"),
                          boundary_rows(BoundarySpec.clamped(), d, 2))
    assert dependent_rows(B.matrix).size == 2


def test_zero_rows():
    sys = _system(3, 1, "P1", BoundarySpec(), 2)
    B = sys.B
    n = sys.num_primal
    zero = ConstraintMatrix(sp.vstack([B.matrix, sp.csr_matrix((1, n))], format="csr"),
                            np.append(B.rhs, 0.0), B.labels + ["empty"], None)
    sol = solve_kkt(SaddleSystem(sys.A, zero, sys.rhs_primal))
    assert sol.multipliers[-1] == 0.0
    assert any("empty" in w for w in sol.warnings)
    bad = ConstraintMatrix(zero.matrix, np.append(B.rhs, 1.0), zero.labels, None)
    with pytest.raises(RankDeficientError):
        solve_kkt(SaddleSystem(sys.A, bad, sys.rhs_primal))


def test_unknown_method():
    sys = _system(2, 1, "P1", BoundarySpec(), 0)
    with pytest.raises(ValueError):
        solve_kkt(sys, method="cholesky")
