"""Dissections of a parameter interval and their node sets."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True, eq=False)
class Dissection:
    """Partition a = x_0 < x_1 < ... < x_M = b of the interval [a, b].

    Use :func:`uniform_dissection` or :meth:`from_nodes` to build one.
    """

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.array(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise ValueError("a dissection needs at least two nodes")
        if not np.all(np.diff(nodes) > 0):
            raise ValueError("nodes must be strictly increasing")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @classmethod
    def from_nodes(cls, nodes) -> "Dissection":
        return cls(np.asarray(nodes, dtype=float))

    @property
    def a(self) -> float:
        return float(self.nodes[0])

    @property
    def b(self) -> float:
        return float(self.nodes[-1])

    @property
    def num_elements(self) -> int:
        return self.nodes.size - 1

    @property
    def element_sizes(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def h_max(self) -> float:
        return float(self.element_sizes.max())

    @property
    def quasi_uniformity(self) -> float:
        """Smallest c with h_max <= c * h_i for every element."""
        h = self.element_sizes
        return float(h.max() / h.min())

    @property
    def midpoints(self) -> np.ndarray:
        return 0.5 * (self.nodes[:-1] + self.nodes[1:])

    def midpoint(self, i: int) -> float:
        """Midpoint of element i (1-based, element i spans [x_{i-1}, x_i])."""
        if not 1 <= i <= self.num_elements:
            raise IndexError(f"element index {i} outside 1..{self.num_elements}")
        return float(0.5 * (self.nodes[i - 1] + self.nodes[i]))

    def locate(self, x) -> np.ndarray:
        """0-based element index for each x; ties at interior nodes go left."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.nodes, x, side="left") - 1
        return np.clip(idx, 0, self.num_elements - 1)

    def __repr__(self):
        return f"Dissection(a={self.a:g}, b={self.b:g}, M={self.num_elements})"


def uniform_dissection(a: float, b: float, M: int) -> Dissection:
    if int(M) != M or M < 1:
        raise ValueError(f"element count must be a positive integer, got {M!r}")
    if not b > a:
        raise ValueError(f"need b > a, got a={a}, b={b}")
    M = int(M)
    # a + (b-a)*i/M, not cumulative sums, so element sizes do not drift
    nodes = a + (b - a) * np.arange(M + 1) / M
    nodes[-1] = b
    return Dissection(nodes)


def nodes_p1(d: Dissection) -> np.ndarray:
    """Element endpoints x_0..x_M."""
    return d.nodes.copy()


def nodes_p2(d: Dissection) -> np.ndarray:
    """Endpoints and midpoints, sorted: x_0, m_1, x_1, ..., m_M, x_M."""
    out = np.empty(2 * d.num_elements + 1)
    out[0::2] = d.nodes
    out[1::2] = d.midpoints
    return out
