import numpy as np
import pytest

from tests.conftest import random_topology
from utils.combiner import (
    WeightError, combination_weights, extremal_indices, hastings_weights, metropolis_weights,
    modified_error_vector, renormalize_over_subset, rza_adjust, rza_adjust_rows, shrinkage_step, validate_weights,
    weight_row
)
from utils.topology import make_topology, neighborhood


def check_weights(weights, t):
    assert np.all(weights >= 0)
    np.testing.assert_allclose(weights.sum(axis=1), np.ones(t.num_buses), rtol=0, atol=1e-12)
    for k in t.buses:
        outside = np.setdiff1d(np.arange(t.num_buses), np.array(neighborhood(t, k)) - 1)
        assert np.all(weights[k - 1, outside] == 0)


def test_rules_on_random_graphs(random_graphs):
    for t in random_graphs:
        check_weights(hastings_weights(t), t)
        check_weights(metropolis_weights(t), t)


def test_hastings_equals_metropolis_for_uniform_variance():
    rng = np.random.default_rng(14)
    for _ in range(1000):
        t = random_topology(rng, uniform_variance=True)
        np.testing.assert_array_equal(hastings_weights(t), metropolis_weights(t))


def test_metropolis_on_ieee14(ieee14):
    weights = metropolis_weights(ieee14)

    # |N_1| = 3, |N_2| = 5, |N_5| = 5
    assert weights[0, 1] == 1 / 5
    assert weights[0, 4] == 1 / 5
    assert weights[0, 0] == pytest.approx(3 / 5, abs=1e-15)
    # Bus 8 hangs off bus 7 (|N_7| = 4)
    assert weights[7, 6] == 1 / 4
    assert weights[7, 7] == pytest.approx(3 / 4, abs=1e-15)


def test_hastings_weights_follow_variances(triangle):
    weights = hastings_weights(triangle)
    variance = triangle.noise_variance

    # Every bus has |N_k| = 3
    for k in range(3):
        for l in range(3):
            if k != l:
                assert weights[k, l] == pytest.approx(variance[k] / max(3 * variance[k], 3 * variance[l]))
    check_weights(weights, triangle)


def test_hastings_rejects_zero_variance():
    t = make_topology(2, [[1, 2]], 0.0)
    with pytest.raises(WeightError, match='positive noise variances'):
        hastings_weights(t)
    validate_weights(metropolis_weights(t), t)


def test_combination_weights_dispatch(triangle):
    np.testing.assert_array_equal(combination_weights(triangle, 'metropolis'), metropolis_weights(triangle))
    with pytest.raises(WeightError, match='unknown rule'):
        combination_weights(triangle, 'uniform')


def test_validate_weights_rejects(triangle):
    path = make_topology(3, [[1, 2], [2, 3]], 0.01)
    weights = metropolis_weights(triangle)

    with pytest.raises(WeightError, match='outside'):
        validate_weights(weights, path)

    broken = metropolis_weights(path)
    broken[0, 0] += 0.1
    with pytest.raises(WeightError, match='sums to'):
        validate_weights(broken, path)

    with pytest.raises(WeightError, match='shape'):
        validate_weights(np.eye(2), path)


def test_weight_row(ieee14):
    weights = metropolis_weights(ieee14)
    row = weight_row(weights, ieee14, 2)
    assert row.shape == (5,)
    assert row.sum() == pytest.approx(1.0, abs=1e-12)


def test_renormalize_over_subset():
    c = np.array([0.5, 0.3, 0.2])
    np.testing.assert_allclose(renormalize_over_subset(c, [1, 2]), [0.6, 0.4])
    np.testing.assert_array_equal(renormalize_over_subset(c, [0]), [1.0])

    with pytest.raises(WeightError, match='nonempty'):
        renormalize_over_subset(c, [])
    with pytest.raises(WeightError, match='outside'):
        renormalize_over_subset(c, [3])
    with pytest.raises(WeightError, match='no weight'):
        renormalize_over_subset(np.array([0.0, 1.0]), [0])


def test_extremal_indices_and_ties():
    assert extremal_indices(np.array([0.1, -0.9, 0.3])) == (1, 0)
    assert extremal_indices(np.array([0.5, -0.5, 0.1])) == (0, 2)
    assert extremal_indices(np.array([0.2, 0.2])) == (0, 0)


def test_modified_error_vector():
    np.testing.assert_array_equal(modified_error_vector(np.array([0.1, -0.9, 0.3])), [-0.1, 0.9, 0.0])
    np.testing.assert_array_equal(modified_error_vector(np.array([0.4, 0.4])), [0.0, 0.0])


def test_shrinkage_step():
    assert shrinkage_step(np.array([0.0, 2.0]), 0.07, 10.0) == pytest.approx(0.7)
    assert shrinkage_step(np.array([0.1, -3.0]), 0.07, 10.0) == pytest.approx(0.35)


def test_rza_adjust_moves_weight():
    c = np.array([0.4, 0.3, 0.3])
    e = np.array([0.5, 2.0, 0.1])
    adjusted = rza_adjust(c, e, rho=0.01, epsilon=10.0)

    step = 0.01 * 10.0 / (1 + 10.0 * 0.1)
    np.testing.assert_allclose(adjusted, [0.4, 0.3 - step, 0.3 + step])
    # The input is left untouched
    np.testing.assert_array_equal(c, [0.4, 0.3, 0.3])


def test_rza_adjust_clamps_at_available_weight():
    adjusted = rza_adjust(np.array([0.9, 0.1]), np.array([0.0, 1.0]), rho=0.07, epsilon=10.0)
    np.testing.assert_allclose(adjusted, [1.0, 0.0])
    assert adjusted[1] == 0.0


def test_rza_adjust_moves_the_whole_weight_and_keeps_the_row_stochastic():
    # The step (0.7) exceeds the weight at the largest-error neighbor
    adjusted = rza_adjust(np.array([0.5, 0.5]), np.array([0.0, 5.0]), rho=0.07, epsilon=10.0)
    np.testing.assert_array_equal(adjusted, [1.0, 0.0])

    adjusted = rza_adjust(np.array([0.2, 0.3, 0.5]), np.array([4.0, 0.0, 1.0]), rho=0.07, epsilon=10.0)
    np.testing.assert_allclose(adjusted, [0.0, 0.5, 0.5])
    assert adjusted.sum() == pytest.approx(1.0, abs=1e-15)


def test_rza_adjust_rows_matches_rza_adjust(ieee14):
    t = ieee14
    weights = metropolis_weights(t)
    support = weights > 0
    np.fill_diagonal(support, True)
    rng = np.random.default_rng(5)
    errors = rng.normal(size=weights.shape)

    adjusted = rza_adjust_rows(weights, errors, support, rho=0.07, epsilon=10.0)
    for k in range(t.num_buses):
        expected = rza_adjust(weights[k, support[k]], errors[k, support[k]], 0.07, 10.0)
        np.testing.assert_allclose(adjusted[k, support[k]], expected, atol=1e-15)
        np.testing.assert_array_equal(adjusted[k, ~support[k]], 0.0)
    np.testing.assert_allclose(adjusted.sum(axis=1), 1.0, atol=1e-12)


def test_rza_adjust_degenerate_cases():
    np.testing.assert_array_equal(rza_adjust(np.array([1.0]), np.array([3.0]), 0.07, 10.0), [1.0])
    np.testing.assert_array_equal(rza_adjust(np.array([0.5, 0.5]), np.array([1.0, -1.0]), 0.07, 10.0), [0.5, 0.5])

    with pytest.raises(WeightError, match='positive'):
        rza_adjust(np.array([0.5, 0.5]), np.array([1.0, 0.0]), 0.0, 10.0)


def test_rza_adjust_on_random_vectors():
    rng = np.random.default_rng(1000)
    for _ in range(1000):
        size = int(rng.integers(2, 7))
        c = rng.uniform(0.01, 1.0, size)
        c /= c.sum()
        e = rng.normal(size=size)
        rho, epsilon = rng.uniform(0.01, 0.2), rng.uniform(1.0, 20.0)

        adjusted = rza_adjust(c, e, rho, epsilon)
        assert abs(adjusted.sum() - 1.0) <= 1e-12
        assert np.all(adjusted >= 0) and np.all(adjusted <= 1)

        i_max, i_min = extremal_indices(e)
        if i_max == i_min:
            continue
        others = np.setdiff1d(np.arange(size), [i_max, i_min])
        np.testing.assert_array_equal(adjusted[others], c[others])

        if shrinkage_step(e, rho, epsilon) < c[i_max]:
            assert adjusted[i_max] < c[i_max]
            assert adjusted[i_min] > c[i_min]
        else:
            assert adjusted[i_max] == 0.0
