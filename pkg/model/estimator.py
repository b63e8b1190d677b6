from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple, Union

import numpy as np

from utils.combiner import WeightMatrix, validate_weights, weight_row
from utils.measurement import MeasurementBatch, MeasurementSample
from utils.settings.config import SHRINKAGE_INTENSITY, SHRINKAGE_MAGNITUDE, STEP_SIZE
from utils.topology import Topology, neighborhood


@dataclass(frozen=True)
class EstimatorParams:
    '''
    Step sizes and algorithm constants shared by every estimator.

    Attributes
    ----------
    mu: float
        LMS step size of every bus.
    mu_per_bus: tuple of float, optional
        Per-bus override of `mu`, indexed by k - 1.
    rho, epsilon: float
        RZA shrinkage intensity and magnitude (DSITA).
    desta_renormalize: bool
        Rescale subset weights to sum to one (DESTA).
    desta_smoothing: float
        EWMA factor in [0, 1) applied to the squared subset errors (DESTA);
        0 selects on the instantaneous error.
    alpha0, beta0, alpha_decay, beta_decay: float
        alpha(i) = alpha0 / (1 + i)^alpha_decay and
        beta(i) = beta0 / (1 + i)^beta_decay (M-CSE). alpha0 and beta0
        default to mu.
    '''
    mu: float = STEP_SIZE
    mu_per_bus: Optional[Tuple[float, ...]] = None
    rho: float = SHRINKAGE_INTENSITY
    epsilon: float = SHRINKAGE_MAGNITUDE
    desta_renormalize: bool = True
    desta_smoothing: float = 0.0
    alpha0: Optional[float] = None
    beta0: Optional[float] = None
    alpha_decay: float = 0.0
    beta_decay: float = 0.0

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError(f'mu: expected a positive step size, got {self.mu!r}')
        if self.mu_per_bus is not None and not all(m > 0 for m in self.mu_per_bus):
            raise ValueError(f'mu_per_bus: every step size must be positive, got {list(self.mu_per_bus)}')
        if not (self.rho > 0 and self.epsilon > 0):
            raise ValueError(f'rho and epsilon must be positive, got rho={self.rho!r}, epsilon={self.epsilon!r}')
        if not 0 <= self.desta_smoothing < 1:
            raise ValueError(f'desta_smoothing: expected a factor in [0, 1), got {self.desta_smoothing!r}')
        for name in ('alpha0', 'beta0'):
            value = getattr(self, name)
            if value is not None and value < 0:
                raise ValueError(f'{name}: expected a nonnegative weight, got {value!r}')
        for name in ('alpha_decay', 'beta_decay'):
            if getattr(self, name) < 0:
                raise ValueError(f'{name}: expected a nonnegative exponent, got {getattr(self, name)!r}')

    def step_sizes(self, num_buses: int) -> np.ndarray:
        if self.mu_per_bus is None:
            return np.full(num_buses, self.mu)
        if len(self.mu_per_bus) != num_buses:
            raise ValueError(f'mu_per_bus: expected {num_buses} values, got {len(self.mu_per_bus)}')
        return np.array(self.mu_per_bus, dtype=float)

    def alpha(self, i: int) -> float:
        alpha0 = self.mu if self.alpha0 is None else self.alpha0
        return alpha0 / (1 + i) ** self.alpha_decay

    def beta(self, i: int) -> float:
        beta0 = self.mu if self.beta0 is None else self.beta0
        return beta0 / (1 + i) ** self.beta_decay


@dataclass
class EstimatorState:
    '''
    Row k - 1 of `x` is bus k's estimate x_k(i) and row k - 1 of `psi` its
    intermediate estimate psi_k(i). `aux` holds algorithm-specific
    bookkeeping (selected subsets, smoothed errors, adjusted weights).
    '''
    x: np.ndarray
    psi: np.ndarray
    iteration: int = 0
    aux: Dict = field(default_factory=dict)

    @classmethod
    def zeros(cls, num_buses: int) -> 'EstimatorState':
        return cls(x=np.zeros((num_buses, num_buses)), psi=np.zeros((num_buses, num_buses)))


def adapt_step(x_prev: np.ndarray, sample: MeasurementSample, mu: float) -> np.ndarray:
    '''
    LMS adaptation psi = x_prev + mu * h * (z - h^T x_prev).
    '''
    h = sample.regressor
    assert h.shape == x_prev.shape, f'regressor {h.shape} and estimate {x_prev.shape} differ in shape'
    return x_prev + mu * h * (sample.value - h @ x_prev)


def adapt_all(x: np.ndarray, batch: MeasurementBatch, mu: np.ndarray) -> np.ndarray:
    '''
    Runs the adaptation step at every bus at once. All psi are computed
    from the previous estimates before any combination reads them.
    '''
    h = batch.regressors
    residual = batch.values - np.einsum('ij,ij->i', h, x)
    return x + mu[:, None] * h * residual[:, None]


def as_batch(samples: Union[MeasurementBatch, Sequence[MeasurementSample]]) -> MeasurementBatch:
    if isinstance(samples, MeasurementBatch):
        return samples
    return MeasurementBatch.from_samples(samples)


class Estimator(ABC):
    '''
    Common interface of the distributed estimators: `initialize` returns the
    zero state, `step` advances it by one synchronous iteration and
    `estimates` reads the per-bus estimates.
    '''
    name = 'estimator'

    # Estimators that run the LMS adaptation step before combining
    adapts = True

    def __init__(self, topology: Topology, weights: WeightMatrix, params: EstimatorParams):
        validate_weights(weights, topology)
        self.topology = topology
        self.weights = weights
        self.params = params
        self.mu = params.step_sizes(topology.num_buses)

        # 0-based neighborhood positions and the weights over them, per bus
        self.neighbors = [np.array(neighborhood(topology, k)) - 1 for k in topology.buses]
        self.weight_rows = [weight_row(weights, topology, k) for k in topology.buses]

        self.support = np.zeros(weights.shape, dtype=bool)
        for k, nbrs in enumerate(self.neighbors):
            self.support[k, nbrs] = True

    def initialize(self) -> EstimatorState:
        return EstimatorState.zeros(self.topology.num_buses)

    def step(self, state: EstimatorState, samples: Union[MeasurementBatch, Sequence[MeasurementSample]]) -> EstimatorState:
        batch = as_batch(samples)
        assert batch.regressors.shape == state.x.shape, \
            f'measurements {batch.regressors.shape} do not match state {state.x.shape}'

        psi = adapt_all(state.x, batch, self.mu) if self.adapts else state.psi
        x, aux = self.combine(state, psi, batch)

        return EstimatorState(x=x, psi=psi if self.adapts else x, iteration=state.iteration + 1, aux=aux)

    @abstractmethod
    def combine(self, state: EstimatorState, psi: np.ndarray, batch: MeasurementBatch) -> Tuple[np.ndarray, Dict]:
        '''
        Returns the new estimates and the bookkeeping to keep in the state.
        '''

    @staticmethod
    def estimates(state: EstimatorState) -> np.ndarray:
        return state.x
