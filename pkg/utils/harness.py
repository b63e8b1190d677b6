'''
Monte Carlo experiment runner: configuration, seeded runs, averaging and
CSV export.
'''
import json
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from functools import partial
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm
from tqdm.contrib.concurrent import process_map

from model import ESTIMATORS, EstimatorParams, build_estimator
from utils.combiner import WeightMatrix, combination_weights
from utils.measurement import RegressorScheme, StateVector, generate_measurements, state_vector
from utils.metrics import MetricsTrace, TraceRecorder, average_traces, convergence_iteration, steady_state_mse, to_db
from utils.settings.config import (
    ALGORITHMS, COMBINERS, CSV_FLOAT_FORMAT, GAP_BUS, GAP_DEFINITIONS, NUM_ITERATIONS, NUM_RUNS,
    RANDOM_SEED, REGRESSOR_SCHEMES, REGRESSOR_STD, SHRINKAGE_INTENSITY, SHRINKAGE_MAGNITUDE, STEP_SIZE
)
from utils.tools import get_logger, parse_toml
from utils.topology import Topology, TopologyError, read_topology_document, topology_from_dict

logger = get_logger(__name__)

# Emitted plot scripts import the figure code from here
REPO_ROOT = Path(__file__).resolve().parent.parent

EXPERIMENT_KEYS = {
    'topology', 'noise_variance', 'noise_variance_per_bus', 'areas',
    'algorithm', 'combiner', 'theta', 'regressors', 'regressor_std',
    'mu', 'mu_per_bus', 'rho', 'epsilon', 'desta_renormalize', 'desta_smoothing', 'mcse',
    'iterations', 'runs', 'seed', 'output', 'gap_definition', 'gap_buses', 'num_workers',
}
MCSE_KEYS = {'alpha0', 'beta0', 'alpha_decay', 'beta_decay'}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    '''
    Fully resolved experiment: the topology is already loaded and every
    default filled in.
    '''
    topology: Topology
    topology_source: str
    algorithm: str = 'atc'
    combiner: str = 'hastings'
    params: EstimatorParams = field(default_factory=EstimatorParams)
    scheme: RegressorScheme = field(default_factory=RegressorScheme)
    theta: Union[str, Tuple[float, ...]] = 'ones'
    iterations: int = NUM_ITERATIONS
    runs: int = NUM_RUNS
    seed: int = RANDOM_SEED
    output: Optional[str] = None
    gap_definition: str = 'own'
    gap_buses: Optional[Tuple[int, ...]] = None
    num_workers: int = 1

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f'algorithm: unknown tag "{self.algorithm}", expected one of {ALGORITHMS}')
        if self.combiner not in COMBINERS:
            raise ConfigError(f'combiner: unknown rule "{self.combiner}", expected one of {COMBINERS}')
        if self.gap_definition not in GAP_DEFINITIONS:
            raise ConfigError(f'gap_definition: unknown definition "{self.gap_definition}", '
                              f'expected one of {GAP_DEFINITIONS}')
        for name in ('iterations', 'runs', 'num_workers'):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int) or value < 1:
                raise ConfigError(f'{name}: expected a positive integer, got {value!r}')
        if isinstance(self.seed, bool) or not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError(f'seed: expected a nonnegative integer, got {self.seed!r}')
        if self.gap_buses is None:
            # Small topologies fall back to their last bus
            object.__setattr__(self, 'gap_buses', (min(GAP_BUS, self.topology.num_buses),))
        for k in self.gap_buses:
            if not 1 <= k <= self.topology.num_buses:
                raise ConfigError(f'gap_buses: bus {k} out of range [1, {self.topology.num_buses}]')
        try:
            self.params.step_sizes(self.topology.num_buses)
            self.theta_vector()
        except ValueError as e:
            raise ConfigError(str(e)) from None

    def theta_vector(self) -> StateVector:
        return state_vector(self.theta, self.topology.num_buses)

    def to_dict(self) -> Dict:
        '''
        Everything the results depend on. Output location and worker count
        are left out: they never change the numbers.
        '''
        t, p = self.topology, self.params
        return {
            'topology': self.topology_source,
            'buses': t.num_buses,
            'branches': [list(b) for b in t.branches],
            'noise_variance_per_bus': list(t.noise_variance),
            'areas': [list(a) for a in t.areas],
            'algorithm': self.algorithm,
            'combiner': self.combiner,
            'theta': self.theta if isinstance(self.theta, str) else list(self.theta),
            'regressors': self.scheme.kind,
            'regressor_std': self.scheme.std,
            'mu': p.mu,
            'mu_per_bus': None if p.mu_per_bus is None else list(p.mu_per_bus),
            'rho': p.rho,
            'epsilon': p.epsilon,
            'desta_renormalize': p.desta_renormalize,
            'desta_smoothing': p.desta_smoothing,
            'mcse': {
                'alpha0': p.mu if p.alpha0 is None else p.alpha0,
                'beta0': p.mu if p.beta0 is None else p.beta0,
                'alpha_decay': p.alpha_decay,
                'beta_decay': p.beta_decay,
            },
            'iterations': self.iterations,
            'runs': self.runs,
            'seed': self.seed,
            'gap_definition': self.gap_definition,
            'gap_buses': list(self.gap_buses),
        }

    def echo(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + '\n'


@dataclass
class ResultBundle:
    trace: MetricsTrace
    label: str
    config: ExperimentConfig
    config_echo: str
    duration: float


def _number(doc: Dict, key: str, default: float, positive: bool = True) -> float:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f'{key}: expected a number, got {value!r}')
    if positive and not value > 0:
        raise ConfigError(f'{key}: expected a positive number, got {value!r}')
    return float(value)


def _integer(doc: Dict, key: str, default: int) -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f'{key}: expected an integer, got {value!r}')
    return value


def _choice(doc: Dict, key: str, default: str, choices: Sequence[str]) -> str:
    value = doc.get(key, default)
    if value not in choices:
        raise ConfigError(f'{key}: expected one of {list(choices)}, got {value!r}')
    return value


def _number_list(doc: Dict, key: str) -> Optional[Tuple[float, ...]]:
    if key not in doc:
        return None
    value = doc[key]
    if not isinstance(value, list) or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigError(f'{key}: expected a list of numbers, got {value!r}')
    return tuple(float(v) for v in value)


def resolve_topology(doc: Dict, base_dir: Union[str, Path, None] = None) -> Tuple[Topology, str]:
    '''
    Loads the referenced topology and applies the experiment's noise and
    area overrides.
    '''
    if 'topology' not in doc:
        raise ConfigError('missing required key "topology"')
    if not isinstance(doc['topology'], str):
        raise ConfigError(f'topology: expected a preset name or a path, got {doc["topology"]!r}')

    topology_doc, source = read_topology_document(doc['topology'], base_dir)
    if 'noise_variance' in doc or 'noise_variance_per_bus' in doc:
        topology_doc.pop('noise_variance', None)
        topology_doc.pop('noise_variance_per_bus', None)
    for key in ('noise_variance', 'noise_variance_per_bus', 'areas'):
        if key in doc:
            topology_doc[key] = doc[key]

    return topology_from_dict(topology_doc, source), source


def config_from_dict(doc: Dict, source: str = '<string>', base_dir: Union[str, Path, None] = None) -> ExperimentConfig:
    '''
    Validates an experiment document and resolves it into an
    ExperimentConfig. Unknown keys are errors, never ignored.
    '''
    unknown = sorted(set(doc) - EXPERIMENT_KEYS)
    if unknown:
        raise ConfigError(f'{source}: unknown key(s) {unknown}')
    mcse = doc.get('mcse', {})
    if not isinstance(mcse, dict):
        raise ConfigError(f'{source}: mcse: expected a table')
    unknown = sorted(set(mcse) - MCSE_KEYS)
    if unknown:
        raise ConfigError(f'{source}: unknown key(s) {["mcse." + k for k in unknown]}')

    try:
        topology, topology_source = resolve_topology(doc, base_dir)

        mu = _number(doc, 'mu', STEP_SIZE)
        renormalize = doc.get('desta_renormalize', True)
        if not isinstance(renormalize, bool):
            raise ConfigError(f'desta_renormalize: expected true or false, got {renormalize!r}')
        params = EstimatorParams(
            mu=mu,
            mu_per_bus=_number_list(doc, 'mu_per_bus'),
            rho=_number(doc, 'rho', SHRINKAGE_INTENSITY),
            epsilon=_number(doc, 'epsilon', SHRINKAGE_MAGNITUDE),
            desta_renormalize=renormalize,
            desta_smoothing=_number(doc, 'desta_smoothing', 0.0, positive=False),
            alpha0=_number(mcse, 'alpha0', mu, positive=False),
            beta0=_number(mcse, 'beta0', mu, positive=False),
            alpha_decay=_number(mcse, 'alpha_decay', 0.0, positive=False),
            beta_decay=_number(mcse, 'beta_decay', 0.0, positive=False),
        )
        scheme = RegressorScheme(
            kind=_choice(doc, 'regressors', 'random-gaussian', REGRESSOR_SCHEMES),
            std=_number(doc, 'regressor_std', REGRESSOR_STD),
        )

        theta = doc.get('theta', 'ones')
        if isinstance(theta, list):
            theta = _number_list(doc, 'theta')

        gap_buses = doc.get('gap_buses')
        if gap_buses is not None and (
                not isinstance(gap_buses, list)
                or not all(isinstance(k, int) and not isinstance(k, bool) for k in gap_buses)):
            raise ConfigError(f'gap_buses: expected a list of bus indices, got {gap_buses!r}')

        output = doc.get('output')
        if output is not None and not isinstance(output, str):
            raise ConfigError(f'output: expected a path, got {output!r}')

        return ExperimentConfig(
            topology=topology,
            topology_source=topology_source,
            algorithm=_choice(doc, 'algorithm', 'atc', ALGORITHMS),
            combiner=_choice(doc, 'combiner', 'hastings', COMBINERS),
            params=params,
            scheme=scheme,
            theta=theta,
            iterations=_integer(doc, 'iterations', NUM_ITERATIONS),
            runs=_integer(doc, 'runs', NUM_RUNS),
            seed=_integer(doc, 'seed', RANDOM_SEED),
            output=output,
            gap_definition=_choice(doc, 'gap_definition', 'own', GAP_DEFINITIONS),
            gap_buses=None if gap_buses is None else tuple(gap_buses),
            num_workers=_integer(doc, 'num_workers', 1),
        )
    except ConfigError as e:
        raise ConfigError(f'{source}: {e}') from None
    except (TopologyError, ValueError) as e:
        raise ConfigError(f'{source}: {e}') from None


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f'config file "{path}" does not exist')
    try:
        doc = parse_toml(path.read_text(), str(path))
    except ValueError as e:
        raise ConfigError(str(e)) from None
    return config_from_dict(doc, str(path), base_dir=path.parent)


def simulate_run(cfg: ExperimentConfig, weights: WeightMatrix, run: int) -> MetricsTrace:
    '''
    One independent trajectory. Its measurements depend only on
    (seed, run), never on which other runs exist or in which order they
    execute.
    '''
    t = cfg.topology
    theta = cfg.theta_vector()
    estimator = build_estimator(cfg.algorithm, t, weights, cfg.params)
    recorder = TraceRecorder(theta, cfg.iterations, cfg.gap_definition)

    state = estimator.initialize()
    recorder.record_initial(state.x)
    for j, batch in enumerate(generate_measurements(t, theta, cfg.scheme, cfg.iterations, cfg.seed, run)):
        state = estimator.step(state, batch)
        recorder.record(j, state.x)

    return recorder.trace()


def run_experiment(cfg: ExperimentConfig, progress: bool = True) -> ResultBundle:
    '''
    Executes `cfg.runs` seeded trajectories and averages their traces.
    Runs are fanned out over `cfg.num_workers` processes; the average is
    taken in run-index order, so the worker count never changes the result.
    '''
    start = time.perf_counter()
    weights = combination_weights(cfg.topology, cfg.combiner)
    func = partial(simulate_run, cfg, weights)

    logger.info(f'{cfg.algorithm}: {cfg.runs} run(s) x {cfg.iterations} iteration(s) on {cfg.topology_source}')
    desc = f'{cfg.algorithm:>5} runs'
    if cfg.num_workers > 1:
        traces = process_map(func, range(cfg.runs), max_workers=cfg.num_workers, chunksize=1,
                             ncols=75, desc=desc, disable=not progress)
    else:
        traces = [func(run) for run in tqdm(range(cfg.runs), ncols=75, desc=desc, disable=not progress)]

    trace = average_traces(traces)
    duration = time.perf_counter() - start
    logger.debug(f'{cfg.algorithm}: finished in {duration:.2f}s')

    return ResultBundle(trace=trace, label=cfg.algorithm, config=cfg, config_echo=cfg.echo(), duration=duration)


def trace_frame(bundle: ResultBundle, buses: Optional[Sequence[int]] = None) -> pd.DataFrame:
    trace = bundle.trace
    buses = bundle.config.gap_buses if buses is None else buses

    frame = pd.DataFrame({
        'iteration': np.arange(1, trace.iterations + 1),
        'mse_linear': trace.mse,
        'mse_db': to_db(trace.mse),
    })
    for k in buses:
        frame[f'gap_bus_{k}'] = trace.gap[:, k - 1]
    return frame


def default_output(algorithm: str, log_path: Union[str, Path] = 'logs') -> Path:
    run_ts = datetime.now().strftime('%Y%m%d%H%M%S')
    return Path(log_path) / algorithm / f'run_{run_ts}.csv'


def export_csv(bundle: ResultBundle, path: Union[str, Path], buses: Optional[Sequence[int]] = None) -> Path:
    '''
    Writes the averaged trace as CSV (iteration, mse_linear, mse_db,
    gap_bus_<k>) and the resolved configuration as JSON next to it.
    '''
    path = Path(path)
    path.parent.mkdir(exist_ok=True, parents=True)

    trace_frame(bundle, buses).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    path.with_suffix('.json').write_text(bundle.config_echo)
    logger.info(f'exported {bundle.trace.iterations} iteration(s) to {path}')
    return path


def check_comparable(cfgs: Sequence[ExperimentConfig]) -> None:
    '''
    Configs of one comparison may only differ in their algorithm settings.
    '''
    if len(cfgs) == 0:
        raise ConfigError('compare: no configurations given')
    shared = ('topology', 'iterations', 'runs', 'seed', 'theta', 'scheme', 'combiner', 'gap_definition')
    for cfg in cfgs[1:]:
        for name in shared:
            if getattr(cfg, name) != getattr(cfgs[0], name):
                raise ConfigError(f'compare: configurations disagree on "{name}"')
    labels = [cfg.algorithm for cfg in cfgs]
    if len(set(labels)) != len(labels):
        raise ConfigError(f'compare: algorithms repeat in {labels}')


def comparison_frame(bundles: Sequence[ResultBundle], gap_bus: int = GAP_BUS) -> pd.DataFrame:
    frame = pd.DataFrame({'iteration': np.arange(1, bundles[0].trace.iterations + 1)})
    for bundle in bundles:
        frame[f'mse_{bundle.label}'] = bundle.trace.mse
    for bundle in bundles:
        frame[f'gap_bus_{gap_bus}_{bundle.label}'] = bundle.trace.gap[:, gap_bus - 1]
    return frame


PLOT_SCRIPT = """\
import sys

import pandas as pd

sys.path.insert(0, {root!r})
from utils.plotting import plot_comparison

CSV_FILE = {csv!r}
GAP_BUS = {gap_bus}
ALGORITHMS = {labels!r}

data = pd.read_csv(CSV_FILE)
columns = ['iteration'] + [f'mse_{{a}}' for a in ALGORITHMS] + [f'gap_bus_{{GAP_BUS}}_{{a}}' for a in ALGORITHMS]
plot_comparison(data[columns], {png!r})
"""


def plot_script(csv_path: Union[str, Path], labels: Sequence[str], gap_bus: int = GAP_BUS) -> str:
    csv_path = Path(csv_path)
    return PLOT_SCRIPT.format(root=str(REPO_ROOT), csv=csv_path.name, gap_bus=gap_bus, labels=list(labels),
                              png=csv_path.with_suffix('.png').name)


def gap_convergence(trace: MetricsTrace, bus: int, fraction: float = 0.1) -> int:
    '''
    First iteration at which bus `bus`'s averaged |gap| falls below
    `fraction` of its value at the initial estimates.
    '''
    initial = None if trace.initial_gap is None else trace.initial_gap[bus - 1]
    return convergence_iteration(trace.gap[:, bus - 1], fraction, initial)


def summarize(bundles: Sequence[ResultBundle], gap_bus: int = GAP_BUS, window: int = 100) -> pd.DataFrame:
    '''
    Steady-state MSE and gap convergence iteration of every algorithm.
    '''
    rows = []
    for bundle in bundles:
        steady = steady_state_mse(bundle.trace, window)
        rows.append({
            'algorithm': bundle.label,
            'steady_mse_db': steady['mse_db'],
            'gap_converged_at': gap_convergence(bundle.trace, gap_bus),
            'seconds': round(bundle.duration, 2),
        })
    return pd.DataFrame(rows)


def compare_command(
        cfgs: Sequence[ExperimentConfig],
        path: Union[str, Path],
        gap_bus: Optional[int] = None,
        progress: bool = True
) -> Tuple[Path, Path, List[ResultBundle]]:
    '''
    Runs every configuration, writes one CSV with per-algorithm MSE and
    gap columns and a plot script that reads it. The gap bus defaults to
    the first of the configurations' `gap_buses`.

    Returns
    -------
    (Path, Path, list of ResultBundle): the CSV, the plot script and the
    per-algorithm results.
    '''
    check_comparable(cfgs)
    if gap_bus is None:
        gap_bus = cfgs[0].gap_buses[0]
    if not 1 <= gap_bus <= cfgs[0].topology.num_buses:
        raise ConfigError(f'gap_bus: bus {gap_bus} out of range [1, {cfgs[0].topology.num_buses}]')

    bundles = [run_experiment(cfg, progress) for cfg in cfgs]

    path = Path(path)
    path.parent.mkdir(exist_ok=True, parents=True)
    comparison_frame(bundles, gap_bus).to_csv(path, index=False, float_format=CSV_FLOAT_FORMAT)
    path.with_suffix('.json').write_text(
        json.dumps({b.label: b.config.to_dict() for b in bundles}, sort_keys=True, indent=2) + '\n'
    )

    script_path = path.with_name(f'{path.stem}_plot.py')
    script_path.write_text(plot_script(path, [b.label for b in bundles], gap_bus))

    logger.info(f'comparison written to {path}, plot script {script_path}')
    for line in summarize(bundles, gap_bus).to_string(index=False).splitlines():
        logger.info(line)

    return path, script_path, bundles


def with_algorithm(cfg: ExperimentConfig, algorithm: str) -> ExperimentConfig:
    if algorithm not in ESTIMATORS:
        raise ConfigError(f'algorithm: unknown tag "{algorithm}", expected one of {list(ESTIMATORS)}')
    return replace(cfg, algorithm=algorithm)
