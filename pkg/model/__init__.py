from typing import Sequence, Union

from .estimator import Estimator, EstimatorParams, EstimatorState, adapt_step
from .diffusion_atc import DiffusionATC, atc_combine
from .mcse import MCSE
from .desta import DESTA
from .dsita import DSITA

from utils.combiner import WeightMatrix
from utils.measurement import MeasurementBatch, MeasurementSample
from utils.topology import Topology

ESTIMATORS = {
    'atc': DiffusionATC,
    'mcse': MCSE,
    'desta': DESTA,
    'dsita': DSITA,
}


def build_estimator(tag: str, t: Topology, weights: WeightMatrix, params: EstimatorParams) -> Estimator:
    if tag not in ESTIMATORS:
        raise ValueError(f'algorithm: unknown tag "{tag}", expected one of {list(ESTIMATORS)}')
    return ESTIMATORS[tag](t, weights, params)


def run_iteration(
        tag: str,
        state: EstimatorState,
        weights: WeightMatrix,
        t: Topology,
        samples: Union[MeasurementBatch, Sequence[MeasurementSample]],
        params: EstimatorParams
) -> EstimatorState:
    '''
    Advances `state` by one synchronous iteration of the tagged algorithm.
    '''
    return build_estimator(tag, t, weights, params).step(state, samples)


__all__ = [
    'ESTIMATORS',
    'DESTA',
    'DSITA',
    'DiffusionATC',
    'Estimator',
    'EstimatorParams',
    'EstimatorState',
    'MCSE',
    'adapt_step',
    'atc_combine',
    'build_estimator',
    'run_iteration',
]
