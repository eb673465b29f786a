"""Nodal interpolation onto S^{2,0} and S^{3,1}, and composite Simpson.

Functions passed in here are vectorised callables ``f(x)`` returning an
array of shape (n,) for scalar fields or (n, dim) for vector fields.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .hermite import CurveState
from .mesh import Dissection, nodes_p2


def _sample(f, x) -> np.ndarray:
    vals = np.asarray(f(np.asarray(x, dtype=float)), dtype=float)
    if vals.ndim == 1:
        vals = vals[:, None]
    if vals.shape[0] != np.size(x):
        raise ValueError("sampled function returned the wrong number of points")
    return vals


@dataclass(frozen=True, eq=False)
class QuadraticPP:
    """Continuous piecewise quadratic, stored by its values on N_2."""

    dissection: Dissection
    values: np.ndarray  # (2M+1, dim)

    @property
    def dim(self) -> int:
        return self.values.shape[1]

    def __call__(self, x) -> np.ndarray:
        d = self.dissection
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        if np.any(xs < d.a) or np.any(xs > d.b):
            raise ValueError(f"evaluation point outside [{d.a}, {d.b}]")
        e = d.locate(xs)
        t = (xs - d.nodes[e]) / d.element_sizes[e]
        # Lagrange basis on t in {0, 1/2, 1}
        l0 = 2 * (t - 0.5) * (t - 1)
        l1 = -4 * t * (t - 1)
        l2 = 2 * t * (t - 0.5)
        v = self.values
        out = (l0[:, None] * v[2 * e] + l1[:, None] * v[2 * e + 1]
               + l2[:, None] * v[2 * e + 2])
        return out[0] if np.ndim(x) == 0 else out


def interp_p2(f, d: Dissection) -> QuadraticPP:
    """I_{h,2} f: the continuous quadratic matching f on endpoints and midpoints."""
    return QuadraticPP(d, _sample(f, nodes_p2(d)))


def interp_hermite(f, df, d: Dissection) -> CurveState:
    """I_{h,3} f: the C^1 cubic matching f and f' at every node."""
    return CurveState.from_nodal(d, _sample(f, d.nodes), _sample(df, d.nodes))


def interp_j3(f, df, d: Dissection) -> CurveState:
    """J_{h,3} f = f(a) + integral of I_{h,2} f' from a.

    Nodal slopes are f'(x_i); nodal values are accumulated element by element
    with Simpson's rule applied to f', so the derivative of the result also
    matches f' at every midpoint.
    """
    slopes = _sample(df, d.nodes)
    mids = _sample(df, d.midpoints)
    h = d.element_sizes[:, None]
    increments = h / 6.0 * (slopes[:-1] + 4.0 * mids + slopes[1:])
    start = _sample(f, np.array([d.a]))
    values = np.concatenate([start, start + np.cumsum(increments, axis=0)])
    return CurveState.from_nodal(d, values, slopes)


def simpson(f, d: Dissection):
    """Composite Simpson rule, i.e. the exact integral of I_{h,2} f."""
    fx = np.asarray(f(d.nodes), dtype=float)
    fm = np.asarray(f(d.midpoints), dtype=float)
    h = d.element_sizes
    if fx.ndim > 1:
        h = h[:, None]
    total = np.sum(h / 6.0 * (fx[:-1] + 4.0 * fm + fx[1:]), axis=0)
    return float(total) if np.ndim(total) == 0 else total
