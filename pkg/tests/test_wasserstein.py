import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cfwd.wasserstein import AtomicMeasure, iota, iota_inv, pair_observable, pair_support, w2_bruteforce, w2_quantile
from oracles import unit_cells, w2_assignment, w2_permutations


def random_commensurable(rng, den):
    k = int(rng.integers(1, den + 1))
    cuts = np.sort(rng.choice(np.arange(1, den), size=k - 1, replace=False)) if k > 1 else np.array([], int)
    counts = np.diff(np.concatenate([[0], cuts, [den]]))
    pos = np.sort(rng.choice(np.linspace(-3, 3, 601), size=k, replace=False))
    return AtomicMeasure(pos, counts / den)


def test_quantile_distance_matches_assignment_oracle():
    rng = np.random.default_rng(0)
    for _ in range(300):
        den = int(rng.integers(1, 9))
        a, b = random_commensurable(rng, den), random_commensurable(rng, den)
        ref = w2_assignment(unit_cells(a.positions, a.masses, den), unit_cells(b.positions, b.masses, den))
        assert abs(w2_quantile(iota_inv(a), iota_inv(b)) - ref) < 1e-10
        assert abs(w2_bruteforce(a, b) - ref) < 1e-10


def test_sorted_matching_equals_permutation_search():
    rng = np.random.default_rng(1)
    for d in range(1, 7):
        for _ in range(10):
            x, y = rng.normal(size=d), rng.normal(size=d)
            assert abs(np.sqrt(np.mean((np.sort(x) - np.sort(y)) ** 2)) - w2_permutations(x, y)) < 1e-12


def test_methods_agree():
    rng = np.random.default_rng(2)
    for _ in range(50):
        a, b = random_commensurable(rng, 6), random_commensurable(rng, 6)
        assert w2_bruteforce(a, b, method="sorted") == pytest.approx(w2_bruteforce(a, b, method="exhaustive"),
                                                                     abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=1, max_size=8, unique=True),
       st.integers(0, 2**31))
def test_iota_round_trip(xs, seed):
    w = np.random.default_rng(seed).uniform(0.1, 1, len(xs))
    mu = AtomicMeasure(np.sort(xs), w / w.sum())
    back = iota(iota_inv(mu))
    assert np.allclose(back.positions, mu.positions) and np.allclose(back.masses, mu.masses)
    assert w2_quantile(iota_inv(mu), iota_inv(mu)) == 0.0


def test_from_atoms_merges_and_validates():
    mu = AtomicMeasure.from_atoms([1.0, 0.0, 1.0], [0.25, 0.5, 0.25])
    assert list(mu.positions) == [0.0, 1.0] and list(mu.masses) == [0.5, 0.5]
    assert pair_observable(mu, lambda x: x**2) == pytest.approx(0.5)
    assert pair_support(mu, lambda x: x + 1) == pytest.approx(3.0)
    with pytest.raises(ValueError):
        AtomicMeasure([0.0, 1.0], [0.2, 0.2])
    with pytest.raises(ValueError):
        w2_bruteforce(AtomicMeasure([0.0, 1.0], [1 / 3, 2 / 3]), AtomicMeasure([0.0], [1.0]), max_den=2)


def test_exhaustive_limit():
    a = AtomicMeasure(np.arange(11.0), np.full(11, 1 / 11))
    with pytest.raises(ValueError):
        w2_bruteforce(a, a, method="exhaustive")
