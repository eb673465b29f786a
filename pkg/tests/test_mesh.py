import numpy as np
import pytest
from hypothesis import given, strategies as st

from elasticflow.mesh import Dissection, nodes_p1, nodes_p2, uniform_dissection


def test_uniform_endpoints_exact():
    d = uniform_dissection(0.0, 2 * np.pi, 7)
    assert d.a == 0.0 and d.b == 2 * np.pi
    assert d.num_elements == 7
    assert np.allclose(d.element_sizes, 2 * np.pi / 7, rtol=0, atol=1e-15)
    assert d.quasi_uniformity == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("M", [0, -3, 2.5])
def test_rejects_bad_element_count(M):
    with pytest.raises(ValueError):
        uniform_dissection(0.0, 1.0, M)


def test_rejects_unsorted_nodes():
    with pytest.raises(ValueError):
        Dissection.from_nodes([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        uniform_dissection(1.0, 1.0, 4)


def test_node_sets():
    d = Dissection.from_nodes([0.0, 1.0, 3.0])
    assert np.array_equal(nodes_p1(d), [0.0, 1.0, 3.0])
    assert np.array_equal(nodes_p2(d), [0.0, 0.5, 1.0, 2.0, 3.0])
    assert d.midpoint(2) == 2.0
    with pytest.raises(IndexError):
        d.midpoint(0)


def test_locate_ties_go_left():
    d = uniform_dissection(0.0, 1.0, 4)
    assert list(d.locate([0.0, 0.25, 0.3, 1.0])) == [0, 0, 1, 3]


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=12))
def test_quasi_uniformity_bound(sizes):
    d = Dissection.from_nodes(np.concatenate([[0.0], np.cumsum(sizes)]))
    c = d.quasi_uniformity
    assert np.all(d.h_max <= c * d.element_sizes * (1 + 1e-12))
