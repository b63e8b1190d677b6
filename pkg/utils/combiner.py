'''
Combination weights: Hastings and Metropolis rules, subset
renormalization and the reweighted zero-attraction (RZA) adjustment.

A weight matrix is a K x K row-stochastic numpy array whose row k - 1
is supported on the neighborhood N_k.
'''
from typing import Sequence, Tuple

import numpy as np

from utils.settings.config import WEIGHT_TOLERANCE
from utils.topology import Topology, neighborhood

WeightMatrix = np.ndarray


class WeightError(ValueError):
    pass


def _rule_weights(t: Topology, variance_ratio) -> WeightMatrix:
    '''
    c_kl = 1 / max(|N_k|, |N_l| * r(k, l)) for linked k != l and the
    complement on the diagonal. Off-diagonal terms are summed in ascending
    bus order so every rule sharing r produces the same bits.
    '''
    sizes = [len(n) for n in t.neighborhoods]
    weights = np.zeros((t.num_buses, t.num_buses))

    for k in t.buses:
        off_diagonal = 0.0
        for l in neighborhood(t, k):
            if l == k:
                continue
            c = 1.0 / max(sizes[k - 1], sizes[l - 1] * variance_ratio(k, l))
            weights[k - 1, l - 1] = c
            off_diagonal += c
        weights[k - 1, k - 1] = 1.0 - off_diagonal

    return weights


def metropolis_weights(t: Topology) -> WeightMatrix:
    return _rule_weights(t, lambda k, l: 1.0)


def hastings_weights(t: Topology) -> WeightMatrix:
    '''
    Hastings rule: c_kl = s_k / max(|N_k| s_k, |N_l| s_l) for linked
    k != l, where s is the per-bus noise variance.

    The ratio s_l / s_k is exactly 1.0 for equal variances, so the result
    then coincides bit for bit with the Metropolis rule.
    '''
    variance = t.noise_variance
    for k, s in enumerate(variance, start=1):
        if not s > 0:
            raise WeightError(f'hastings rule needs positive noise variances, bus {k} has {s!r}')

    return _rule_weights(t, lambda k, l: variance[l - 1] / variance[k - 1])


def combination_weights(t: Topology, rule: str) -> WeightMatrix:
    if rule == 'hastings':
        return hastings_weights(t)
    if rule == 'metropolis':
        return metropolis_weights(t)
    raise WeightError(f'combiner: unknown rule "{rule}"')


def validate_weights(weights: WeightMatrix, t: Topology, tolerance: float = WEIGHT_TOLERANCE) -> None:
    '''
    Checks row-stochasticity, nonnegativity and neighborhood support.
    '''
    if weights.shape != (t.num_buses, t.num_buses):
        raise WeightError(f'weights: expected shape {(t.num_buses, t.num_buses)}, got {weights.shape}')
    if np.any(weights < 0) or np.any(weights > 1):
        raise WeightError('weights: entries must lie in [0, 1]')

    for k in t.buses:
        support = np.zeros(t.num_buses, dtype=bool)
        support[np.array(neighborhood(t, k)) - 1] = True
        if np.any(weights[k - 1, ~support] != 0):
            raise WeightError(f'weights: row {k} has mass outside N_{k}')
        if abs(weights[k - 1].sum() - 1.0) > tolerance:
            raise WeightError(f'weights: row {k} sums to {weights[k - 1].sum()!r}')


def weight_row(weights: WeightMatrix, t: Topology, k: int) -> np.ndarray:
    '''Returns c = [c_kl] for l in N_k, in neighborhood order.'''
    return weights[k - 1, np.array(neighborhood(t, k)) - 1]


def renormalize_over_subset(c_row: np.ndarray, subset: Sequence[int]) -> np.ndarray:
    '''
    Restricts a neighborhood weight vector to a subset and rescales it to
    sum to one.

    Parameters
    ----------
    c_row: np.ndarray
        Weights over N_k.
    subset: sequence of int
        Nonempty positions into `c_row`.

    Returns
    -------
    np.ndarray: weights over the subset, in the order given.
    '''
    subset = np.asarray(subset, dtype=int)
    if subset.size == 0:
        raise WeightError('subset must be nonempty')
    if np.any(subset < 0) or np.any(subset >= len(c_row)):
        raise WeightError(f'subset positions {subset.tolist()} outside a neighborhood of size {len(c_row)}')

    restricted = np.asarray(c_row, dtype=float)[subset]
    total = restricted.sum()
    if not total > 0:
        raise WeightError(f'subset {subset.tolist()} carries no weight')
    return restricted / total


def extremal_indices(e: np.ndarray) -> Tuple[int, int]:
    '''
    Positions of the largest- and smallest-magnitude errors; ties go to the
    lowest position.
    '''
    magnitude = np.abs(e)
    return int(np.argmax(magnitude)), int(np.argmin(magnitude))


def modified_error_vector(e: np.ndarray) -> np.ndarray:
    '''
    Keeps only the extremes of the error vector: the largest-magnitude entry
    becomes +|e|, the smallest -|e|, every other entry 0.
    '''
    e = np.asarray(e, dtype=float)
    modified = np.zeros_like(e)
    i_max, i_min = extremal_indices(e)
    if i_max != i_min:
        modified[i_max] = abs(e[i_max])
        modified[i_min] = -abs(e[i_min])
    return modified


def shrinkage_step(e: np.ndarray, rho: float, epsilon: float) -> float:
    '''
    Reweighted zero-attraction step rho * epsilon / (1 + epsilon * |xi_min|),
    where xi_min is the smallest-magnitude error.
    '''
    xi_min = np.min(np.abs(e))
    return rho * epsilon / (1.0 + epsilon * xi_min)


def rza_adjust(c_row: np.ndarray, e: np.ndarray, rho: float, epsilon: float) -> np.ndarray:
    '''
    Moves combination weight from the neighbor with the largest error to
    the neighbor with the smallest one.

    The amount is the RZA step, clamped to the weight available at the
    largest-error neighbor, so the row keeps summing to one and stays in
    [0, 1]. Every other weight is left untouched.

    Parameters
    ----------
    c_row: np.ndarray
        Weights over N_k.
    e: np.ndarray
        Error pattern over N_k, same order as `c_row`.
    rho: float
        Shrinkage intensity.
    epsilon: float
        Shrinkage magnitude.

    Returns
    -------
    np.ndarray: the adjusted weights.
    '''
    c_row = np.array(c_row, dtype=float)
    e = np.asarray(e, dtype=float)
    assert c_row.shape == e.shape, f'weights {c_row.shape} and errors {e.shape} differ in shape'
    if not (rho > 0 and epsilon > 0):
        raise WeightError(f'rho and epsilon must be positive, got rho={rho!r}, epsilon={epsilon!r}')

    if c_row.size == 1:
        return c_row

    i_max, i_min = extremal_indices(e)
    if i_max == i_min:
        return c_row

    transfer = min(shrinkage_step(e, rho, epsilon), c_row[i_max])
    c_row[i_max] -= transfer
    c_row[i_min] += transfer
    return c_row


def rza_adjust_rows(weights: WeightMatrix, errors: np.ndarray, support: np.ndarray, rho: float,
                    epsilon: float) -> WeightMatrix:
    '''
    `rza_adjust` on every row of a weight matrix at once. Row k - 1 of
    `errors` holds bus k's error pattern and `support` marks N_k; entries
    outside the support are ignored.
    '''
    assert weights.shape == errors.shape == support.shape, \
        f'weights {weights.shape}, errors {errors.shape} and support {support.shape} differ in shape'
    if not (rho > 0 and epsilon > 0):
        raise WeightError(f'rho and epsilon must be positive, got rho={rho!r}, epsilon={epsilon!r}')

    magnitude = np.abs(errors)
    rows = np.arange(weights.shape[0])
    i_max = np.argmax(np.where(support, magnitude, -np.inf), axis=1)
    i_min = np.argmin(np.where(support, magnitude, np.inf), axis=1)

    step = rho * epsilon / (1.0 + epsilon * magnitude[rows, i_min])
    transfer = np.where(i_max != i_min, np.minimum(step, weights[rows, i_max]), 0.0)

    adjusted = np.array(weights, dtype=float)
    adjusted[rows, i_max] -= transfer
    adjusted[rows, i_min] += transfer
    return adjusted
