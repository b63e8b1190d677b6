from typing import Dict, Tuple

import numpy as np

from model.estimator import Estimator, EstimatorState
from utils.combiner import WeightMatrix
from utils.measurement import MeasurementBatch
from utils.topology import Topology


def atc_combine(psi: np.ndarray, weights: WeightMatrix, t: Topology) -> np.ndarray:
    '''
    x_k = sum over l in N_k of c_kl psi_l, for every bus at once.
    '''
    assert psi.shape == (t.num_buses, t.num_buses), f'psi has shape {psi.shape}'
    return weights @ psi


class DiffusionATC(Estimator):
    '''
    Adapt-then-combine diffusion LMS over the fixed neighborhoods.
    '''
    name = 'atc'

    def combine(self, state: EstimatorState, psi: np.ndarray, batch: MeasurementBatch) -> Tuple[np.ndarray, Dict]:
        return atc_combine(psi, self.weights, self.topology), {}
