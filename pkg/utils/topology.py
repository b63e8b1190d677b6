'''
Bus-network graph of the power system.

Buses are numbered 1..K everywhere in the public interface; arrays indexed
by bus use position k - 1.
'''
import numbers
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx

from utils.settings.config import PRESETS_PATH
from utils.tools import get_logger, parse_toml

logger = get_logger(__name__)

TOPOLOGY_KEYS = {'buses', 'branches', 'noise_variance', 'noise_variance_per_bus', 'areas'}


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    '''
    Immutable bus graph with per-bus measurement noise and a control-area
    partition.

    Attributes
    ----------
    num_buses: int
        Number of buses K.
    branches: tuple of (int, int)
        Unordered branches stored as (low, high) pairs in ascending order.
    noise_variance: tuple of float
        Noise power of every bus, indexed by k - 1.
    areas: tuple of tuple of int
        Disjoint control areas covering 1..K, each sorted ascending.
    '''
    num_buses: int
    branches: Tuple[Tuple[int, int], ...]
    noise_variance: Tuple[float, ...]
    areas: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        validate_topology(self)

    @cached_property
    def graph(self) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(self.buses)
        graph.add_edges_from(self.branches)
        return graph

    @property
    def buses(self) -> range:
        return range(1, self.num_buses + 1)

    @cached_property
    def neighborhoods(self) -> Tuple[Tuple[int, ...], ...]:
        return tuple(tuple(sorted({k, *self.graph.neighbors(k)})) for k in self.buses)

    @cached_property
    def bus_area(self) -> Tuple[int, ...]:
        owner = [0] * self.num_buses
        for n, area in enumerate(self.areas):
            for k in area:
                owner[k - 1] = n
        return tuple(owner)


def validate_topology(t: Topology) -> None:
    '''
    Checks every Topology invariant, raising TopologyError with the
    offending field on the first violation.
    '''
    if isinstance(t.num_buses, bool) or not isinstance(t.num_buses, int) or t.num_buses < 1:
        raise TopologyError(f'buses: expected a positive integer, got {t.num_buses!r}')

    seen = set()
    for i, (l, k) in enumerate(t.branches):
        for bus in (l, k):
            if not 1 <= bus <= t.num_buses:
                raise TopologyError(f'branches[{i}]: unknown bus {bus} (buses = {t.num_buses})')
        if l == k:
            raise TopologyError(f'branches[{i}]: self-loop on bus {l}')
        pair = (min(l, k), max(l, k))
        if pair in seen:
            raise TopologyError(f'branches[{i}]: duplicate branch {list(pair)}')
        seen.add(pair)

    if len(t.noise_variance) != t.num_buses:
        raise TopologyError(f'noise_variance_per_bus: expected {t.num_buses} values, '
                            f'got {len(t.noise_variance)}')
    for k, variance in enumerate(t.noise_variance, start=1):
        if not variance >= 0:
            raise TopologyError(f'noise_variance: bus {k} has invalid variance {variance!r}')

    covered = []
    for n, area in enumerate(t.areas):
        if len(area) == 0:
            raise TopologyError(f'areas[{n}]: empty area')
        for bus in area:
            if not 1 <= bus <= t.num_buses:
                raise TopologyError(f'areas[{n}]: unknown bus {bus} (buses = {t.num_buses})')
        covered.extend(area)
    if len(covered) != len(set(covered)):
        duplicated = sorted({k for k in covered if covered.count(k) > 1})
        raise TopologyError(f'areas: buses {duplicated} belong to more than one area')
    missing = sorted(set(range(1, t.num_buses + 1)) - set(covered))
    if missing:
        raise TopologyError(f'areas: buses {missing} are not covered by any area')


def _bus_index(value, field: str) -> int:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral):
        raise TopologyError(f'{field}: expected an integer bus index, got {value!r}')
    return int(value)


def _variance(value, field: str) -> float:
    if isinstance(value, bool) or not isinstance(value, numbers.Real):
        raise TopologyError(f'{field}: expected a number, got {value!r}')
    return float(value)


def make_topology(
        num_buses: int,
        branches: Sequence[Sequence[int]],
        noise_variance: Union[float, Sequence[float]] = 0.0,
        areas: Optional[Sequence[Sequence[int]]] = None
) -> Topology:
    '''
    Builds a validated Topology from plain Python values, normalizing
    branch orientation and ordering. Missing areas become singleton areas.
    '''
    pairs = []
    for i, branch in enumerate(branches):
        if len(branch) != 2:
            raise TopologyError(f'branches[{i}]: expected a pair of buses, got {list(branch)}')
        l, k = (_bus_index(b, f'branches[{i}]') for b in branch)
        pairs.append((min(l, k), max(l, k)) if l != k else (l, k))

    if isinstance(noise_variance, (bool, numbers.Real)):
        variances = (_variance(noise_variance, 'noise_variance'),) * num_buses
    else:
        variances = tuple(_variance(v, f'noise_variance_per_bus[{k}]') for k, v in enumerate(noise_variance))

    if areas is None:
        areas = [[k] for k in range(1, num_buses + 1)]

    # Keep the given order for duplicates so validation can name them
    ordered = sorted(set(pairs)) if len(set(pairs)) == len(pairs) else pairs

    return Topology(
        num_buses=num_buses,
        branches=tuple(ordered),
        noise_variance=variances,
        areas=tuple(tuple(sorted(_bus_index(k, f'areas[{n}]') for k in area)) for n, area in enumerate(areas)),
    )


def topology_from_dict(doc: Dict, source: str = '<string>') -> Topology:
    '''
    Builds a Topology from a parsed topology document.

    Parameters
    ----------
    doc: dict
        Keys: `buses`, `branches`, `noise_variance` or
        `noise_variance_per_bus`, optional `areas`.
    source: str
        Label used in error messages.
    '''
    unknown = sorted(set(doc) - TOPOLOGY_KEYS)
    if unknown:
        raise TopologyError(f'{source}: unknown key(s) {unknown}')
    if 'buses' not in doc:
        raise TopologyError(f'{source}: missing required key "buses"')
    if 'branches' not in doc:
        raise TopologyError(f'{source}: missing required key "branches"')

    num_buses = doc['buses']
    if isinstance(num_buses, bool) or not isinstance(num_buses, int):
        raise TopologyError(f'{source}: buses: expected a positive integer, got {num_buses!r}')
    if not isinstance(doc['branches'], list):
        raise TopologyError(f'{source}: branches: expected a list of [l, k] pairs')

    if 'noise_variance_per_bus' in doc:
        variance = doc['noise_variance_per_bus']
        if not isinstance(variance, list):
            raise TopologyError(f'{source}: noise_variance_per_bus: expected a list')
    elif 'noise_variance' in doc:
        variance = doc['noise_variance']
        if isinstance(variance, bool) or not isinstance(variance, (int, float)):
            raise TopologyError(f'{source}: noise_variance: expected a number, got {variance!r}')
    else:
        raise TopologyError(f'{source}: one of "noise_variance" or "noise_variance_per_bus" is required')

    try:
        return make_topology(num_buses, doc['branches'], variance, doc.get('areas'))
    except TopologyError as e:
        raise TopologyError(f'{source}: {e}') from None
    except (TypeError, ValueError) as e:
        raise TopologyError(f'{source}: malformed document ({e})') from None


def load_topology(config_text: str, source: str = '<string>') -> Topology:
    '''
    Parses a structured-text topology document into a validated Topology.

    Parameters
    ----------
    config_text: str
        The TOML document.
    source: str
        Label (usually the path) used in error messages.

    Returns
    -------
    Topology
    '''
    try:
        doc = parse_toml(config_text, source)
    except ValueError as e:
        raise TopologyError(str(e)) from None

    return topology_from_dict(doc, source)


def available_presets() -> List[str]:
    return sorted(path.stem for path in PRESETS_PATH.glob('*.toml'))


def preset_text(name: str) -> str:
    path = PRESETS_PATH / f'{name}.toml'
    if not path.is_file():
        raise TopologyError(f'unknown preset "{name}", available: {available_presets()}')
    return path.read_text()


def load_preset(name: str) -> Topology:
    return load_topology(preset_text(name), source=f'preset:{name}')


def read_topology_document(spec: str, base_dir: Union[str, Path, None] = None) -> Tuple[Dict, str]:
    '''
    Resolves a topology reference (preset name or document path) to its
    parsed document and a source label.
    '''
    if spec in available_presets():
        source = f'preset:{spec}'
        text = preset_text(spec)
    else:
        path = Path(spec)
        if not path.is_absolute() and base_dir is not None:
            path = Path(base_dir) / path
        if not path.is_file():
            raise TopologyError(f'topology "{spec}" is neither a preset {available_presets()} nor a file')
        source = str(path)
        text = path.read_text()

    try:
        return parse_toml(text, source), source
    except ValueError as e:
        raise TopologyError(str(e)) from None


def check_bus(t: Topology, k: int) -> None:
    if isinstance(k, bool) or not 1 <= k <= t.num_buses:
        raise TopologyError(f'bus index {k!r} out of range [1, {t.num_buses}]')


def neighborhood(t: Topology, k: int) -> Tuple[int, ...]:
    '''
    Returns N_k: bus k together with every bus sharing a branch with it,
    in ascending order.
    '''
    check_bus(t, k)
    return t.neighborhoods[k - 1]


def degree(t: Topology, k: int) -> int:
    check_bus(t, k)
    return t.graph.degree[k]


def area_of(t: Topology, k: int) -> int:
    '''Returns the 0-based index of the control area containing bus k.'''
    check_bus(t, k)
    return t.bus_area[k - 1]


def area_neighbors(t: Topology, n: int) -> Tuple[int, ...]:
    '''
    Returns the areas joined to area n by at least one branch (excluding n
    itself), in ascending order.
    '''
    if not 0 <= n < len(t.areas):
        raise TopologyError(f'area index {n!r} out of range [0, {len(t.areas) - 1}]')

    adjacent = set()
    for k in t.areas[n]:
        for l in t.graph.neighbors(k):
            m = t.bus_area[l - 1]
            if m != n:
                adjacent.add(m)
    return tuple(sorted(adjacent))


def topology_summary(t: Topology) -> Dict:
    '''
    Returns a connectivity report: sizes, degrees, connected components and
    the area adjacency lists.
    '''
    return {
        'buses': t.num_buses,
        'branches': len(t.branches),
        'degrees': {k: t.graph.degree[k] for k in t.buses},
        'components': [sorted(c) for c in sorted(nx.connected_components(t.graph), key=min)],
        'connected': nx.is_connected(t.graph),
        'areas': len(t.areas),
        'area_neighbors': {n: list(area_neighbors(t, n)) for n in range(len(t.areas))},
    }
