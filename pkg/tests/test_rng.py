import numpy as np

from radpose.rng import Rng


def test_same_seed_reproduces_first_10k_draws():
    a = Rng(123)
    b = Rng(123)
    assert np.array_equal(a.uniform(10_000), b.uniform(10_000))
    assert np.array_equal(a.normal(10_000), b.normal(10_000))


def test_different_seeds_differ():
    assert not np.array_equal(Rng(1).uniform(100), Rng(2).uniform(100))


def test_derive_is_independent_of_parent_draws():
    a = Rng(5)
    a.uniform(100)  # consume some of the parent stream
    b = Rng(5)
    assert np.array_equal(a.derive(3).normal(50), b.derive(3).normal(50))


def test_derive_distinct_tags_distinct_streams():
    r = Rng(6)
    assert not np.array_equal(r.derive(0).uniform(64), r.derive(1).uniform(64))
    assert not np.array_equal(r.derive(0, 1).uniform(64), r.derive(1, 0).uniform(64))


def test_uniform_range_and_normal_moments():
    r = Rng(7)
    u = r.uniform(50_000)
    assert u.min() >= 0.0 and u.max() < 1.0
    z = r.normal(200_000)
    assert abs(z.mean()) < 0.01
    assert abs(z.std() - 1.0) < 0.01
