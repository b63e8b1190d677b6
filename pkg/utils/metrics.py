from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence

import numpy as np

from utils.settings.config import GAP_DEFINITIONS


@dataclass
class MetricsTrace:
    '''
    Per-iteration learning curves of one run, or their Monte Carlo mean.

    Attributes
    ----------
    mse: np.ndarray, shape (iterations,)
        Network mean-square deviation after each iteration.
    gap: np.ndarray, shape (iterations, K)
        Phase angle gap of every bus after each iteration.
    runs: int
        Number of runs averaged into this trace.
    initial_mse, initial_gap: optional
        The same quantities for the initial estimates x_k(0).
    '''
    mse: np.ndarray
    gap: np.ndarray
    runs: int = 1
    gap_definition: str = 'own'
    initial_mse: Optional[float] = None
    initial_gap: Optional[np.ndarray] = None

    @property
    def iterations(self) -> int:
        return len(self.mse)

    @property
    def mse_db(self) -> np.ndarray:
        return to_db(self.mse)


@dataclass
class TraceRecorder:
    '''
    Collects metrics iteration by iteration into preallocated arrays.
    '''
    theta: np.ndarray
    iterations: int
    gap_definition: str = 'own'
    mse: np.ndarray = field(init=False)
    gap: np.ndarray = field(init=False)

    def __post_init__(self):
        self.mse = np.zeros(self.iterations)
        self.gap = np.zeros((self.iterations, len(self.theta)))

    initial_mse: Optional[float] = field(init=False, default=None)
    initial_gap: Optional[np.ndarray] = field(init=False, default=None)

    def record_initial(self, x: np.ndarray) -> None:
        self.initial_mse = network_mse(x, self.theta)
        self.initial_gap = phase_angle_gaps(x, self.theta, self.gap_definition)

    def record(self, j: int, x: np.ndarray) -> None:
        self.mse[j] = network_mse(x, self.theta)
        self.gap[j] = phase_angle_gaps(x, self.theta, self.gap_definition)

    def trace(self) -> MetricsTrace:
        return MetricsTrace(mse=self.mse, gap=self.gap, runs=1, gap_definition=self.gap_definition,
                            initial_mse=self.initial_mse, initial_gap=self.initial_gap)


def to_db(values: np.ndarray) -> np.ndarray:
    with np.errstate(divide='ignore'):
        return 10 * np.log10(values)


def network_mse(x: np.ndarray, theta: np.ndarray) -> float:
    '''
    Mean over buses of the squared distance between each bus's estimate
    (row k - 1 of `x`) and the true state.
    '''
    assert x.shape[-1] == theta.shape[0], f'estimates of length {x.shape[-1]} vs state of length {theta.shape[0]}'
    return float(np.mean(np.sum((x - theta) ** 2, axis=1)))


def phase_angle_gaps(x: np.ndarray, theta: np.ndarray, definition: str = 'own') -> np.ndarray:
    '''
    Phase angle gap of every bus at once. `own` is theta[k] minus bus k's
    estimate of its own angle; `l1` is the l1 distance of bus k's estimate
    from theta.
    '''
    if definition == 'own':
        return theta - np.diag(x)
    if definition == 'l1':
        return np.sum(np.abs(theta - x), axis=1)
    raise ValueError(f'gap_definition: unknown definition "{definition}", expected one of {GAP_DEFINITIONS}')


def phase_angle_gap(x: np.ndarray, theta: np.ndarray, k: int, definition: str = 'own') -> float:
    if isinstance(k, bool) or not 1 <= k <= len(theta):
        raise ValueError(f'bus index {k!r} out of range [1, {len(theta)}]')
    if definition == 'own':
        return float(theta[k - 1] - x[k - 1, k - 1])
    if definition == 'l1':
        return float(np.sum(np.abs(theta - x[k - 1])))
    raise ValueError(f'gap_definition: unknown definition "{definition}", expected one of {GAP_DEFINITIONS}')


def average_traces(traces: Sequence[MetricsTrace]) -> MetricsTrace:
    '''
    Pointwise arithmetic mean of per-run traces, each weighted by the
    number of runs it already holds.

    Summation follows list order; the harness always passes traces sorted
    by run index so the mean is bitwise reproducible.
    '''
    if len(traces) == 0:
        raise ValueError('average_traces: no traces to average')

    shape = (traces[0].mse.shape, traces[0].gap.shape)
    for r, trace in enumerate(traces):
        if (trace.mse.shape, trace.gap.shape) != shape:
            raise ValueError(f'average_traces: trace {r} has shape {(trace.mse.shape, trace.gap.shape)}, '
                             f'expected {shape}')
    definitions = {t.gap_definition for t in traces}
    if len(definitions) > 1:
        raise ValueError(f'average_traces: mixed gap definitions {sorted(definitions)}')

    runs = sum(t.runs for t in traces)
    weights = np.array([t.runs for t in traces], dtype=float)
    mse = np.tensordot(weights, np.stack([t.mse for t in traces]), axes=1) / runs
    gap = np.tensordot(weights, np.stack([t.gap for t in traces]), axes=1) / runs

    initial_mse, initial_gap = None, None
    if all(t.initial_gap is not None for t in traces):
        initial_mse = float(weights @ np.array([t.initial_mse for t in traces]) / runs)
        initial_gap = np.tensordot(weights, np.stack([t.initial_gap for t in traces]), axes=1) / runs

    return MetricsTrace(mse=mse, gap=gap, runs=runs, gap_definition=definitions.pop(),
                        initial_mse=initial_mse, initial_gap=initial_gap)


def steady_state_mse(trace: MetricsTrace, window: int = 100) -> Dict[str, float]:
    '''Mean MSE over the last `window` iterations, linear and in dB.'''
    window = min(window, trace.iterations)
    linear = float(np.mean(trace.mse[-window:]))
    return {'mse_linear': linear, 'mse_db': float(to_db(np.array(linear)))}


def convergence_iteration(gap: np.ndarray, fraction: float = 0.1, initial: Optional[float] = None) -> int:
    '''
    First iteration (1-based) at which |gap| drops below `fraction` of its
    initial magnitude; -1 when it never does. `gap[j]` is the gap after
    iteration j + 1 and `initial` the gap of the initial estimates, which
    defaults to gap[0].
    '''
    gap = np.abs(np.asarray(gap, dtype=float))
    reference = abs(initial) if initial is not None else gap[0]
    below = np.flatnonzero(gap < fraction * reference)
    return int(below[0]) + 1 if below.size else -1
