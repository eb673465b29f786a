"""Global matrices and constraint rows over the Hermite DOF layout."""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .hermite import (SLOPE, VALUE, CurveState, dof_index, element_dofs, gauss_rule,
                      num_dofs, shape_functions)
from .mesh import Dissection

log = logging.getLogger(__name__)


class ConstraintMode(str, enum.Enum):
    """Where the linearised arc-length constraint is imposed."""

    P1 = "P1"  # element endpoints
    P2 = "P2"  # endpoints and midpoints

    @classmethod
    def parse(cls, value) -> "ConstraintMode":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().upper())
        except ValueError:
            raise ValueError(f"unknown constraint mode {value!r}; use P1 or P2") from None


def _element_matrix(h: np.ndarray, k: int, npts: int) -> np.ndarray:
    t, w = gauss_rule(npts)
    phi = shape_functions(t[None, :], h[:, None], k)  # (M, q, 4)
    mat = np.einsum("mql,mq,mqj->mlj", phi, h[:, None] * w[None, :], phi)
    return 0.5 * (mat + mat.transpose(0, 2, 1))


def _assemble(d: Dissection, dim: int, k: int, npts: int) -> sp.csr_matrix:
    M = d.num_elements
    local = _element_matrix(d.element_sizes, k, npts)
    dofs = element_dofs(1, M)[:, :, 0]
    rows = np.repeat(dofs, 4, axis=1).ravel()
    cols = np.tile(dofs, (1, 4)).ravel()
    n = num_dofs(d, 1)
    scalar = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    # component-minor ordering: global = scalar index * dim + component
    return sp.kron(scalar, sp.identity(dim, format="csr"), format="csr")


def mass_matrix(d: Dissection, dim: int) -> sp.csr_matrix:
    """(M u, v) = integral of u . v."""
    return _assemble(d, dim, 0, 4)


def gradient_matrix(d: Dissection, dim: int) -> sp.csr_matrix:
    """(K u, v) = integral of u_x . v_x."""
    return _assemble(d, dim, 1, 3)


def stiffness_matrix(d: Dissection, dim: int) -> sp.csr_matrix:
    """(S u, v) = integral of u_xx . v_xx."""
    return _assemble(d, dim, 2, 2)


def bandwidth(A) -> int:
    A = sp.coo_matrix(A)
    return int(np.max(np.abs(A.row - A.col))) if A.nnz else 0


@dataclass
class ConstraintMatrix:
    """Rows of linear constraints B y = q with a label per row."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    labels: list = field(default_factory=list)
    points: np.ndarray | None = None

    @property
    def num_rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def zero_rows(self) -> np.ndarray:
        nnz = np.diff(self.matrix.indptr)
        data_abs = np.abs(self.matrix).sum(axis=1).A1
        return np.flatnonzero((nnz == 0) | (data_abs == 0))

    def select(self, keep) -> "ConstraintMatrix":
        keep = np.asarray(keep)
        pts = None if self.points is None else self.points[keep]
        return ConstraintMatrix(self.matrix[keep], self.rhs[keep],
                                [self.labels[i] for i in keep], pts)

    @classmethod
    def empty(cls, n: int) -> "ConstraintMatrix":
        return cls(sp.csr_matrix((0, n)), np.zeros(0), [], np.zeros(0))


def constraint_matrix(Z: CurveState, mode) -> ConstraintMatrix:
    """Linearised arc-length rows Y -> Y_x(x~) . Z_x(x~) at each constraint node.

    Rows follow the sorted node order (N_1 for P1, N_2 for P2); all
    right-hand sides are zero.
    """
    mode = ConstraintMode.parse(mode)
    d, dim = Z.dissection, Z.dim
    M = d.num_elements
    n = num_dofs(d, dim)
    comps = np.arange(dim)

    # nodal rows read the slope DOFs directly
    node_rows = np.repeat(np.arange(M + 1), dim)
    node_cols = dof_index(node_rows, SLOPE, np.tile(comps, M + 1), dim)
    node_vals = Z.slopes.ravel()

    if mode is ConstraintMode.P1:
        row_of_node = np.arange(M + 1)
        mat = sp.csr_matrix((node_vals, (row_of_node.repeat(dim), node_cols)),
                            shape=(M + 1, n))
        labels = [f"arc@x{i}" for i in range(M + 1)]
        return ConstraintMatrix(mat, np.zeros(M + 1), labels, d.nodes.copy())

    # midpoint rows: derivative stencil over the 4*dim element DOFs
    dphi = shape_functions(np.full(M, 0.5), d.element_sizes, 1)  # (M, 4)
    edofs = element_dofs(dim, M)  # (M, 4, dim)
    zx_mid = np.einsum("ml,mlc->mc", dphi, Z.element_coeffs())  # (M, dim)
    mid_vals = dphi[:, :, None] * zx_mid[:, None, :]
    mid_rows = np.broadcast_to(np.arange(M)[:, None, None], edofs.shape)

    # interleave: node i -> row 2i, midpoint of element e -> row 2e+1
    rows = np.concatenate([2 * node_rows, 2 * mid_rows.ravel() + 1])
    cols = np.concatenate([node_cols, edofs.ravel()])
    vals = np.concatenate([node_vals, mid_vals.ravel()])
    nrows = 2 * M + 1
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(nrows, n))
    labels = []
    for i in range(M):
        labels += [f"arc@x{i}", f"arc@m{i + 1}"]
    labels.append(f"arc@x{M}")
    points = np.empty(nrows)
    points[0::2] = d.nodes
    points[1::2] = d.midpoints
    return ConstraintMatrix(mat, np.zeros(nrows), labels, points)


_ENDS = ("a", "b")


@dataclass(frozen=True)
class BoundarySpec:
    """Boundary conditions of the flow.

    ``position`` lists the endpoints ('a', 'b') with prescribed position,
    ``slope`` those with prescribed tangent; ``periodic`` couples a and b.
    """

    position: tuple = ()
    slope: tuple = ()
    periodic: bool = False

    def __post_init__(self):
        pos = tuple(sorted(set(self.position)))
        slo = tuple(sorted(set(self.slope)))
        for end in pos + slo:
            if end not in _ENDS:
                raise ValueError(f"boundary endpoint must be 'a' or 'b', got {end!r}")
        if self.periodic and (len(pos) == 2 or len(slo) == 2):
            raise ValueError("periodic conditions cannot be combined with "
                             "prescribed data at both endpoints")
        object.__setattr__(self, "position", pos)
        object.__setattr__(self, "slope", slo)

    @classmethod
    def semi_clamped(cls) -> "BoundarySpec":
        return cls(position=("a",), slope=("a", "b"))

    @classmethod
    def clamped(cls) -> "BoundarySpec":
        return cls(position=("a", "b"), slope=("a", "b"))

    def num_rows(self, dim: int) -> int:
        return dim * (len(self.position) + len(self.slope) + (2 if self.periodic else 0))


def boundary_rows(bc: BoundarySpec, d: Dissection, dim: int, tau: float | None = None,
                  data=None, t: float | None = None) -> ConstraintMatrix:
    """Rows prescribing d_t Z and d_t Z_x at the boundary.

    Without ``data`` the prescribed rates are zero. With ``data`` (an object
    with ``z(x, t)`` and ``z_x(x, t)``) the rates are the difference quotients
    (data(t + tau) - data(t)) / tau, so Z tracks the data exactly at the
    constrained endpoints.
    """
    n = num_dofs(d, dim)
    M = d.num_elements
    node_of = {"a": 0, "b": M}
    x_of = {"a": d.a, "b": d.b}
    rows, cols, vals, rhs, labels, points = [], [], [], [], [], []

    def rate(kind, end):
        if data is None:
            return np.zeros(dim)
        if tau is None or t is None:
            raise ValueError("time-dependent boundary data needs tau and t")
        fn = data.z if kind == VALUE else data.z_x
        x = np.array([x_of[end]])
        return ((np.asarray(fn(x, t + tau)) - np.asarray(fn(x, t))) / tau).reshape(dim)

    for kind, ends, name in ((VALUE, bc.position, "pos"), (SLOPE, bc.slope, "slope")):
        for end in ends:
            g = rate(kind, end)
            for j in range(dim):
                r = len(rhs)
                rows.append(r)
                cols.append(dof_index(node_of[end], kind, j, dim))
                vals.append(1.0)
                rhs.append(g[j])
                labels.append(f"{name}[{end}]{j}")
                points.append(x_of[end])
    if bc.periodic:
        for kind, name in ((VALUE, "per"), (SLOPE, "per_slope")):
            for j in range(dim):
                r = len(rhs)
                rows += [r, r]
                cols += [dof_index(0, kind, j, dim), dof_index(M, kind, j, dim)]
                vals += [1.0, -1.0]
                rhs.append(0.0)
                labels.append(f"{name}{j}")
                points.append(d.a)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n))
    return ConstraintMatrix(mat, np.array(rhs, dtype=float), labels,
                            np.array(points, dtype=float))


def stack_constraints(*parts: ConstraintMatrix) -> ConstraintMatrix:
    """Stack constraint blocks and drop exact duplicate rows."""
    parts = [p for p in parts if p.num_rows]
    if not parts:
        raise ValueError("nothing to stack")
    mat = sp.vstack([p.matrix for p in parts], format="csr")
    rhs = np.concatenate([p.rhs for p in parts])
    labels = sum((list(p.labels) for p in parts), [])
    points = np.concatenate([np.asarray(p.points, dtype=float) for p in parts])

    seen = {}
    keep = []
    mat.sort_indices()
    for r in range(mat.shape[0]):
        lo, hi = mat.indptr[r], mat.indptr[r + 1]
        key = (mat.indices[lo:hi].tobytes(), mat.data[lo:hi].tobytes())
        if key in seen:
            first = seen[key]
            if rhs[first] != rhs[r]:
                raise ValueError(f"constraint rows {labels[first]} and {labels[r]} "
                                 "coincide but prescribe different values")
            continue
        seen[key] = r
        keep.append(r)
    out = ConstraintMatrix(mat, rhs, labels, points)
    return out if len(keep) == mat.shape[0] else out.select(keep)


def forced_load(Z: CurveState, U: CurveState, V: CurveState, W: CurveState,
                Mmat, Smat) -> np.ndarray:
    """M (V - W) + S (U - Z)."""
    return Mmat @ (V.coeffs - W.coeffs) + Smat @ (U.coeffs - Z.coeffs)
