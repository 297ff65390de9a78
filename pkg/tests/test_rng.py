import numpy as np
from hypothesis import given, strategies as st

from transport.rng import BlockNoise, initial_normals, stream


def test_same_key_same_sequence():
    a = stream(7, 3).standard_normal(100)
    b = stream(7, 3).standard_normal(100)
    assert np.array_equal(a, b)


def test_distinct_replicas_differ_and_are_uncorrelated():
    a = stream(7, 3).standard_normal(50_000)
    b = stream(7, 4).standard_normal(50_000)
    assert abs(np.corrcoef(a, b)[0, 1]) < 4 / np.sqrt(a.size)


def test_purposes_are_disjoint():
    assert not np.array_equal(stream(1, 0, 0).standard_normal(5), stream(1, 0, 1).standard_normal(5))


@given(st.integers(1, 9), st.integers(1, 300))
def test_block_noise_independent_of_block_composition(width, budget):
    ids = np.arange(5)
    whole = BlockNoise(11, ids, width)
    part = BlockNoise(11, ids[2:4], width, budget=budget)
    for _ in range(30):
        assert np.array_equal(whole()[2:4], part())


def test_initial_normals_per_replica():
    a = initial_normals(3, [0, 1, 2], (4,))
    b = initial_normals(3, [2], (4,))
    assert np.array_equal(a[2], b[0])
