from typing import Dict, List, Tuple

import numpy as np

from model.estimator import Estimator, EstimatorParams, EstimatorState
from utils.combiner import WeightMatrix
from utils.measurement import MeasurementBatch
from utils.topology import Topology, TopologyError, area_neighbors


class MCSE(Estimator):
    '''
    Modified coordinated state estimation over control areas.

    Every area n keeps one estimate x_n, shared by all of its buses, and
    updates it by a consensus term towards the adjacent areas plus a
    gradient step on the area's stacked least-squares residual:

        x_n <- x_n - [beta(i) sum_m (x_n - x_m) - alpha(i) H_n^T (z_n - H_n x_n)]

    There is no adaptation step; the combination weights are unused.
    '''
    name = 'mcse'
    adapts = False

    def __init__(self, topology: Topology, weights: WeightMatrix, params: EstimatorParams):
        super().__init__(topology, weights, params)

        if len(topology.areas) == 0:
            raise TopologyError('mcse: the topology has no area partition')

        num_areas = len(topology.areas)
        self.area_buses: List[np.ndarray] = [np.array(area) - 1 for area in topology.areas]
        self.adjacent_areas = [list(area_neighbors(topology, n)) for n in range(num_areas)]

        # Row n of the membership matrix sums the buses of area n
        self.bus_area = np.array(topology.bus_area)
        self.leaders = np.array([buses[0] for buses in self.area_buses])
        self.membership = np.zeros((num_areas, topology.num_buses))
        self.membership[self.bus_area, np.arange(topology.num_buses)] = 1.0

        # consensus_n = sum over adjacent m of (x_n - x_m)
        self.area_laplacian = np.zeros((num_areas, num_areas))
        for n, adjacent in enumerate(self.adjacent_areas):
            self.area_laplacian[n, n] = len(adjacent)
            self.area_laplacian[n, adjacent] = -1.0

    def combine(self, state: EstimatorState, psi: np.ndarray, batch: MeasurementBatch) -> Tuple[np.ndarray, Dict]:
        i = state.iteration
        alpha, beta = self.params.alpha(i), self.params.beta(i)

        # Area estimates from the previous iteration, read by every area
        current = state.x[self.leaders]

        h = batch.regressors
        residual = batch.values - np.einsum('ij,ij->i', h, current[self.bus_area])
        gradient = self.membership @ (h * residual[:, None])
        consensus = self.area_laplacian @ current

        updated = current - (beta * consensus - alpha * gradient)
        return updated[self.bus_area], {}
