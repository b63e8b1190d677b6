from typing import Dict, Tuple

import numpy as np

from model.estimator import Estimator, EstimatorState
from utils.combiner import rza_adjust_rows
from utils.measurement import MeasurementBatch


class DSITA(Estimator):
    '''
    Dynamic sparsity-inspired topology adaptation.

    Each bus scores every neighbor's intermediate estimate against its own
    measurement, e_l = z_k - h_k^T psi_l, and shifts combination weight
    from the worst neighbor to the best one with the RZA step before
    combining.
    '''
    name = 'dsita'

    def combine(self, state: EstimatorState, psi: np.ndarray, batch: MeasurementBatch) -> Tuple[np.ndarray, Dict]:
        # errors[k, l] = z_k - h_k^T psi_l
        errors = batch.values[:, None] - batch.regressors @ psi.T
        adjusted = rza_adjust_rows(self.weights, errors, self.support, self.params.rho, self.params.epsilon)

        return adjusted @ psi, {'dsita_weights': adjusted}
