'''
True state, regressors and noisy scalar measurements of the linearized DC
model z_k(i) = h_k(i)^T theta + e_k(i).
'''
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterator, List, Sequence, Tuple, Union

import networkx as nx
import numpy as np

from utils.settings.config import MEASUREMENT_BLOCK, REGRESSOR_SCHEMES, REGRESSOR_STD
from utils.tools import run_generator
from utils.topology import Topology, check_bus

StateVector = np.ndarray


@dataclass(frozen=True)
class RegressorScheme:
    '''
    How h_k(i) is produced: `dc-jacobian` uses the fixed Laplacian row of
    bus k, `random-gaussian` draws i.i.d. N(0, std^2) entries every iteration.
    '''
    kind: str = 'random-gaussian'
    std: float = REGRESSOR_STD

    def __post_init__(self):
        if self.kind not in REGRESSOR_SCHEMES:
            raise ValueError(f'regressors: unknown scheme "{self.kind}", expected one of {REGRESSOR_SCHEMES}')
        if not self.std > 0:
            raise ValueError(f'regressor_std: expected a positive number, got {self.std!r}')


@dataclass(frozen=True)
class MeasurementSample:
    regressor: np.ndarray
    value: float
    bus: int
    iteration: int


@dataclass(frozen=True)
class MeasurementBatch:
    '''
    Every bus's measurement for one iteration; row k - 1 of `regressors`
    is h_k(i) and `values[k - 1]` is z_k(i).
    '''
    regressors: np.ndarray
    values: np.ndarray
    iteration: int

    @classmethod
    def from_samples(cls, samples: Sequence[MeasurementSample]) -> 'MeasurementBatch':
        samples = sorted(samples, key=lambda s: s.bus)
        iterations = {s.iteration for s in samples}
        assert len(iterations) == 1, f'samples from several iterations: {sorted(iterations)}'
        return cls(
            regressors=np.stack([s.regressor for s in samples]),
            values=np.array([s.value for s in samples], dtype=float),
            iteration=iterations.pop(),
        )


def state_vector(spec: Union[str, Sequence[float], np.ndarray], num_buses: int) -> StateVector:
    '''
    Builds the true phase-angle vector from `"ones"` or an explicit list.
    '''
    if isinstance(spec, str):
        if spec != 'ones':
            raise ValueError(f'theta: expected "ones" or a list of {num_buses} numbers, got "{spec}"')
        return np.ones(num_buses)

    theta = np.asarray(spec, dtype=float)
    if theta.shape != (num_buses,):
        raise ValueError(f'theta: expected {num_buses} entries, got shape {theta.shape}')
    if not np.all(np.isfinite(theta)):
        raise ValueError('theta: entries must be finite')
    return theta


@lru_cache(maxsize=16)
def dc_jacobian(t: Topology) -> np.ndarray:
    '''
    DC power-injection Jacobian under unit branch susceptance, i.e. the
    graph Laplacian with rows and columns in bus order.
    '''
    jacobian = nx.laplacian_matrix(t.graph, nodelist=list(t.buses)).toarray().astype(float)
    jacobian.setflags(write=False)
    return jacobian


def dc_jacobian_row(t: Topology, k: int) -> np.ndarray:
    check_bus(t, k)
    return dc_jacobian(t)[k - 1].copy()


def sample_measurement(
        t: Topology,
        theta: StateVector,
        scheme: RegressorScheme,
        k: int,
        i: int,
        rng: np.random.Generator
) -> MeasurementSample:
    '''
    Draws bus k's measurement for iteration i from its own stream.

    Each call consumes a fixed block of the stream (K + 1 normals for
    random-gaussian, one for dc-jacobian), so the stream position is a
    function of the iteration alone.
    '''
    check_bus(t, k)
    assert theta.shape == (t.num_buses,), f'theta has shape {theta.shape}, expected ({t.num_buses},)'

    sigma = np.sqrt(t.noise_variance[k - 1])
    if scheme.kind == 'random-gaussian':
        draws = rng.standard_normal(t.num_buses + 1)
        regressor = scheme.std * draws[:-1]
        noise = sigma * draws[-1]
    else:
        regressor = dc_jacobian_row(t, k)
        noise = sigma * rng.standard_normal()

    return MeasurementSample(
        regressor=regressor,
        value=float(regressor @ theta + noise),
        bus=k,
        iteration=i,
    )


def block_iterations(num_buses: int) -> int:
    '''
    Iterations drawn per block. Depends on K alone, so every run of a
    topology slices its streams the same way.
    '''
    return max(1, MEASUREMENT_BLOCK // (num_buses * (num_buses + 1)))


def draw_block(
        t: Topology,
        theta: StateVector,
        scheme: RegressorScheme,
        streams: Sequence[np.random.Generator],
        size: int
) -> Tuple[np.ndarray, np.ndarray]:
    '''
    Draws `size` consecutive iterations from every bus stream, consuming
    each stream exactly as `size` calls of `sample_measurement` would.

    Returns
    -------
    (np.ndarray, np.ndarray): regressors of shape (size, K, K) and values
    of shape (size, K).
    '''
    sigma = np.sqrt(np.asarray(t.noise_variance, dtype=float))
    if scheme.kind == 'random-gaussian':
        draws = np.stack([s.standard_normal((size, t.num_buses + 1)) for s in streams], axis=1)
        regressors = scheme.std * draws[:, :, :-1]
        values = np.einsum('bkj,j->bk', regressors, theta) + sigma * draws[:, :, -1]
    else:
        jacobian = dc_jacobian(t)
        noise = np.stack([s.standard_normal(size) for s in streams], axis=1)
        regressors = np.broadcast_to(jacobian, (size,) + jacobian.shape)
        values = jacobian @ theta + sigma * noise
    return regressors, values


def generate_measurements(
        t: Topology,
        theta: StateVector,
        scheme: RegressorScheme,
        iterations: int,
        seed: int,
        run: int
) -> Iterator[MeasurementBatch]:
    '''
    Yields the measurement batches of iterations 1..`iterations` of one
    Monte Carlo run. Every bus owns a stream keyed by (seed, run, bus).
    '''
    assert theta.shape == (t.num_buses,), f'theta has shape {theta.shape}, expected ({t.num_buses},)'
    streams: List[np.random.Generator] = [run_generator(seed, run, k) for k in t.buses]
    block = block_iterations(t.num_buses)

    for start in range(1, iterations + 1, block):
        regressors, values = draw_block(t, theta, scheme, streams, block)
        for j in range(min(block, iterations + 1 - start)):
            yield MeasurementBatch(regressors=regressors[j], values=values[j], iteration=start + j)
