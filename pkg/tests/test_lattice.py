import numpy as np
import pytest
from hypothesis import given, strategies as st

from lamlab.lattice import (Configuration, Window, connected_components, distance, set_distance,
                            tile)


def test_distance_is_chebyshev():
    assert distance((0, 0), (3, -5)) == 5
    assert distance((), ()) == 0
    with pytest.raises(ValueError):
        distance((0,), (0, 1))


@given(st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=3),
       st.lists(st.tuples(st.integers(-4, 4), st.integers(-4, 4)), min_size=1, max_size=3))
def test_set_distance_symmetric(K, L):
    assert set_distance(K, L) == set_distance(L, K)


@given(st.sets(st.tuples(st.integers(0, 5), st.integers(0, 5)), max_size=15))
def test_components_partition_and_are_separated(sites):
    comps = connected_components(sites)
    assert set().union(*comps) == set(sites) if comps else not sites
    assert sum(len(c) for c in comps) == len(sites)
    for a in range(len(comps)):
        for b in range(a + 1, len(comps)):
            assert set_distance(comps[a], comps[b]) > 1


def test_window_shape_and_sites():
    w = Window.from_shape((3, 2), lo=(1, -1))
    assert w.hi == (3, 0) and w.size == 6
    assert len(list(w.sites())) == 6
    with pytest.raises(ValueError):
        Window((0, 0), (-1, 0))


def test_background_and_periodic_lookup():
    w = Window.from_shape((2, 2))
    c = Configuration(w, [[1, 1], [1, 1]], background=np.array([[0, 1]]), label=0)
    assert c[(0, 0)] == 1
    assert c[(5, 2)] == 0 and c[(5, 3)] == 1
    p = Configuration(Window.from_shape((2, 3), periodic=True), np.arange(6).reshape(2, 3) % 2)
    assert p[(2, 3)] == p[(0, 0)]


def test_resolve_matches_getitem():
    w = Window.from_shape((3, 2), lo=(1, 1))
    c = Configuration(w, [[1, 0], [1, 1], [0, 1]], background=np.array([[0]]), label=0)
    arr = c.resolve((-1, -1), (6, 5))
    for i in range(6):
        for t in range(5):
            assert arr[i, t] == c[(i - 1, t - 1)]


def test_tile_is_periodic():
    b = np.array([[0, 1, 2]])
    t = tile(b, (0, 5), (2, 4))
    assert t.tolist() == [[2, 0, 1, 2], [2, 0, 1, 2]]


def test_replace_and_equality():
    w = Window.from_shape((2,))
    c = Configuration.uniform(w, np.array([0]), 0)
    d = c.replace({(1,): 1})
    assert d != c and d[(1,)] == 1 and c[(1,)] == 0
    assert d.replace({(1,): 0}) == c
