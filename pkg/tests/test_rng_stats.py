import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from fkbismut import rng, stats


def test_streams_are_keyed_by_seed_and_path():
    a = rng.path_normals(5, 3, 10, 2)
    assert np.array_equal(a, rng.path_normals(5, 3, 10, 2))
    assert not np.array_equal(a, rng.path_normals(5, 4, 10, 2))
    assert not np.array_equal(a, rng.path_normals(6, 3, 10, 2))
    b = rng.batch_normals(5, 2, 6, 10, 2)
    assert np.array_equal(b[1], a)


def test_large_seed_and_index():
    x = rng.path_normals(2**64 - 1, 2**40, 3, 1)
    assert x.shape == (3, 1) and np.all(np.isfinite(x))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=60), st.integers(1, 7), st.randoms())
@settings(max_examples=80)
def test_merge_matches_direct_and_ignores_arrival_order(xs, nparts, rnd):
    xs = np.asarray(xs)
    parts = [(i, stats.RunningMoments.from_array(c)) for i, c in enumerate(np.array_split(xs, nparts))]
    merged = stats.merge_all(parts)
    shuffled = parts[:]
    rnd.shuffle(shuffled)
    again = stats.merge_all(shuffled)
    assert merged == again
    assert merged.count == len(xs)
    assert np.isclose(merged.mean, xs.mean(), atol=1e-9 * (1 + np.abs(xs).max()))
    if len(xs) > 1:
        assert np.isclose(merged.variance, xs.var(ddof=1), rtol=1e-7, atol=1e-6)


def test_push_matches_from_array():
    xs = np.random.default_rng(0).standard_normal(100)
    m = stats.RunningMoments()
    for x in xs:
        m.push(x)
    ref = stats.RunningMoments.from_array(xs)
    assert np.isclose(m.mean, ref.mean) and np.isclose(m.m2, ref.m2)
    assert np.isclose(m.std_error, xs.std(ddof=1) / 10)
