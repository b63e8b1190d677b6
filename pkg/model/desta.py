from itertools import combinations
from typing import Dict, List, Tuple

import numpy as np

from model.estimator import Estimator, EstimatorParams, EstimatorState
from utils.combiner import WeightMatrix, renormalize_over_subset
from utils.measurement import MeasurementBatch
from utils.topology import Topology


def enumerate_subsets(size: int) -> List[Tuple[int, ...]]:
    '''
    All 2^size - 1 nonempty subsets of range(size), by increasing
    cardinality and lexicographically within a cardinality. Picking the
    first minimum over this order applies the tie-break rule.
    '''
    return [subset for t in range(1, size + 1) for subset in combinations(range(size), t)]


def subset_weight_matrix(c_row: np.ndarray, subsets: List[Tuple[int, ...]], renormalize: bool = True) -> np.ndarray:
    '''
    One row per subset holding the combination weights over the whole
    neighborhood (zero outside the subset).
    '''
    matrix = np.zeros((len(subsets), len(c_row)))
    for s, subset in enumerate(subsets):
        positions = list(subset)
        matrix[s, positions] = renormalize_over_subset(c_row, positions) if renormalize else c_row[positions]
    return matrix


class DESTA(Estimator):
    '''
    Dynamic exhaustive-search topology adaptation.

    After the adaptation step each bus evaluates every nonempty subset of
    its neighborhood, predicts its own measurement from the subset's
    combined estimate and keeps the subset with the smallest error.

    The subsets of all buses are stacked into one (S, K) weight matrix,
    bus by bus in enumeration order, so a single product yields every
    candidate estimate of the iteration.
    '''
    name = 'desta'

    def __init__(self, topology: Topology, weights: WeightMatrix, params: EstimatorParams):
        super().__init__(topology, weights, params)

        self.subsets = [enumerate_subsets(len(nbrs)) for nbrs in self.neighbors]

        blocks = []
        for nbrs, c_row, subsets in zip(self.neighbors, self.weight_rows, self.subsets):
            block = np.zeros((len(subsets), topology.num_buses))
            block[:, nbrs] = subset_weight_matrix(c_row, subsets, params.desta_renormalize)
            blocks.append(block)
        self.candidate_weights = np.vstack(blocks)

        sizes = [len(subsets) for subsets in self.subsets]
        self.owner = np.repeat(np.arange(topology.num_buses), sizes)
        self.offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
        self.labels = [
            tuple(int(nbrs[p]) + 1 for p in subset)
            for nbrs, subsets in zip(self.neighbors, self.subsets) for subset in subsets
        ]

    def first_minima(self, score: np.ndarray) -> np.ndarray:
        '''
        Row of the first smallest score within every bus's block.
        '''
        minima = np.minimum.reduceat(score, self.offsets)
        hits = np.flatnonzero(score == minima[self.owner])
        _, first = np.unique(self.owner[hits], return_index=True)
        return hits[first]

    def combine(self, state: EstimatorState, psi: np.ndarray, batch: MeasurementBatch) -> Tuple[np.ndarray, Dict]:
        smoothing = self.params.desta_smoothing
        previous = state.aux.get('desta_score')

        candidates = self.candidate_weights @ psi
        regressors = batch.regressors[self.owner]
        errors = batch.values[self.owner] - np.einsum('sj,sj->s', candidates, regressors)

        score = errors ** 2
        if smoothing > 0 and previous is not None:
            score = smoothing * np.concatenate(previous) + (1 - smoothing) * score

        best = self.first_minima(score)
        aux = {
            'desta_selection': [self.labels[s] for s in best],
            'desta_error': errors[best],
        }
        if smoothing > 0:
            aux['desta_score'] = np.split(score, self.offsets[1:])
        return candidates[best], aux
