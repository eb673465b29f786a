"""Piecewise cubic C^1 Hermite curves in R^d.

Degrees of freedom are nodal values and nodal (physical) derivatives. The flat
coefficient vector is ordered node-major, then value-before-slope, then
component::

    index(node, kind, comp) = (2 * node + kind) * dim + comp

with ``kind`` 0 for the value and 1 for the slope.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path

import numpy as np

from .mesh import Dissection

VALUE, SLOPE = 0, 1

# Gauss points per element that integrate |D^k u|^2 exactly for cubic u
_GAUSS_POINTS = {0: 4, 1: 3, 2: 2, 3: 1}


@lru_cache(maxsize=None)
def gauss_rule(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre points and weights on the reference interval [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def shape_functions(t, h, k: int = 0) -> np.ndarray:
    """k-th x-derivative of the four local Hermite basis functions.

    ``t`` is the reference coordinate in [0, 1] and ``h`` the element size
    (both broadcastable). Local order: value left, slope left, value right,
    slope right. The slope functions carry a factor h so that their
    coefficients are physical derivatives.
    """
    t, h = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(h, dtype=float))
    one = np.ones_like(t)
    if k == 0:
        phi = (1 - 3 * t**2 + 2 * t**3, h * (t - 2 * t**2 + t**3),
               3 * t**2 - 2 * t**3, h * (t**3 - t**2))
    elif k == 1:
        phi = (6 * t**2 - 6 * t, h * (1 - 4 * t + 3 * t**2),
               6 * t - 6 * t**2, h * (3 * t**2 - 2 * t))
    elif k == 2:
        phi = (12 * t - 6, h * (6 * t - 4), 6 - 12 * t, h * (6 * t - 2))
    elif k == 3:
        phi = (12 * one, 6 * h, -12 * one, 6 * h)
    else:
        raise ValueError(f"derivative order must be in 0..3, got {k}")
    return np.stack(phi, axis=-1) / h[..., None] ** k


def dof_index(node, kind, comp, dim: int):
    return (2 * np.asarray(node) + kind) * dim + comp


def element_dofs(dim: int, M: int) -> np.ndarray:
    """Global DOF indices per element, shape (M, 4, dim) in local order."""
    i = np.arange(M)[:, None]
    nodes = np.concatenate([i, i, i + 1, i + 1], axis=1)
    kinds = np.array([VALUE, SLOPE, VALUE, SLOPE])[None, :]
    base = (2 * nodes + kinds) * dim
    return base[:, :, None] + np.arange(dim)[None, None, :]


def num_dofs(d: Dissection, dim: int) -> int:
    return 2 * (d.num_elements + 1) * dim


@dataclass(frozen=True, eq=False)
class CurveState:
    """A curve z_h in S^{3,1}(T_h)^d given by its Hermite coefficients."""

    dissection: Dissection
    dim: int
    coeffs: np.ndarray

    def __post_init__(self):
        coeffs = np.array(self.coeffs, dtype=float).ravel()
        expected = num_dofs(self.dissection, self.dim)
        if coeffs.size != expected:
            raise ValueError(f"expected {expected} coefficients, got {coeffs.size}")
        coeffs.setflags(write=False)
        object.__setattr__(self, "coeffs", coeffs)

    @classmethod
    def from_nodal(cls, d: Dissection, values, slopes) -> "CurveState":
        values = np.asarray(values, dtype=float)
        slopes = np.asarray(slopes, dtype=float)
        if values.ndim == 1:
            values, slopes = values[:, None], slopes[:, None]
        dim = values.shape[1]
        c = np.empty((d.num_elements + 1, 2, dim))
        c[:, VALUE] = values
        c[:, SLOPE] = slopes
        return cls(d, dim, c.ravel())

    @classmethod
    def zeros(cls, d: Dissection, dim: int) -> "CurveState":
        return cls(d, dim, np.zeros(num_dofs(d, dim)))

    def _nodal(self) -> np.ndarray:
        return self.coeffs.reshape(-1, 2, self.dim)

    @property
    def values(self) -> np.ndarray:
        """Nodal values, shape (M+1, dim)."""
        return self._nodal()[:, VALUE]

    @property
    def slopes(self) -> np.ndarray:
        """Nodal derivatives, shape (M+1, dim)."""
        return self._nodal()[:, SLOPE]

    def element_coeffs(self) -> np.ndarray:
        """Local coefficients, shape (M, 4, dim)."""
        return self.coeffs[element_dofs(self.dim, self.dissection.num_elements)]

    def with_coeffs(self, coeffs) -> "CurveState":
        return CurveState(self.dissection, self.dim, coeffs)

    def __add__(self, other: "CurveState") -> "CurveState":
        _check_compatible(self, other)
        return self.with_coeffs(self.coeffs + other.coeffs)

    def __sub__(self, other: "CurveState") -> "CurveState":
        _check_compatible(self, other)
        return self.with_coeffs(self.coeffs - other.coeffs)

    def __call__(self, x, k: int = 0) -> np.ndarray:
        return evaluate(self, x, k)


def _check_compatible(u: CurveState, v: CurveState):
    if u.dim != v.dim:
        raise ValueError(f"dimension mismatch: {u.dim} vs {v.dim}")
    du, dv = u.dissection, v.dissection
    if du is not dv and not (du.nodes.shape == dv.nodes.shape
                             and np.array_equal(du.nodes, dv.nodes)):
        raise ValueError("curves live on different dissections")


def evaluate(u: CurveState, x, k: int = 0) -> np.ndarray:
    """k-th derivative of u at x.

    At interior nodes the left element is used (one-sided for k >= 2).
    Returns shape (dim,) for scalar x and (n, dim) for an array of n points.
    """
    d = u.dissection
    xs = np.asarray(x, dtype=float)
    flat = np.atleast_1d(xs)
    if np.any(flat < d.a) or np.any(flat > d.b):
        raise ValueError(f"evaluation point outside [{d.a}, {d.b}]")
    elem = d.locate(flat)
    h = d.element_sizes[elem]
    t = (flat - d.nodes[elem]) / h
    phi = shape_functions(t, h, k)
    local = u.element_coeffs()[elem]
    out = np.einsum("nl,nlc->nc", phi, local)
    return out[0] if xs.ndim == 0 else out


def _quadrature_derivs(u: CurveState, k: int, npts: int):
    d = u.dissection
    t, w = gauss_rule(npts)
    h = d.element_sizes
    phi = shape_functions(t[None, :], h[:, None], k)          # (M, q, 4)
    vals = np.einsum("mql,mlc->mqc", phi, u.element_coeffs())  # (M, q, dim)
    jw = h[:, None] * w[None, :]
    return vals, jw


def inner(u: CurveState, v: CurveState, k: int) -> float:
    """Exact value of the integral of D^k u . D^k v over I."""
    _check_compatible(u, v)
    npts = _GAUSS_POINTS[k]
    uk, jw = _quadrature_derivs(u, k, npts)
    vk, _ = _quadrature_derivs(v, k, npts)
    return float(np.sum(jw * np.einsum("mqc,mqc->mq", uk, vk)))


def seminorm_sq(u: CurveState, k: int) -> float:
    """|u|_{H^k}^2 (squared L2 norm for k = 0), integrated exactly."""
    return inner(u, u, k)


def inner_h2(u: CurveState, v: CurveState) -> float:
    return inner(u, v, 2)


def sample(u: CurveState, points_per_element: int = 10):
    """Uniform sample points within each element plus the right end b."""
    d = u.dissection
    s = np.arange(points_per_element) / points_per_element
    x = (d.nodes[:-1, None] + d.element_sizes[:, None] * s[None, :]).ravel()
    x = np.append(x, d.b)
    return x, evaluate(u, x, 0)


def write_snapshot(u: CurveState, path, points_per_element: int = 10):
    """Write ``x,z1,...,zd`` samples of u to a CSV file."""
    x, z = sample(u, points_per_element)
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["x"] + [f"z{j + 1}" for j in range(u.dim)])
        for xi, zi in zip(x, z):
            writer.writerow([f"{xi:.17g}"] + [f"{v:.17g}" for v in zi])
    return path
