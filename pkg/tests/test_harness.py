import json
import runpy
from dataclasses import replace

import matplotlib
import numpy as np
import pandas as pd
import pytest

import dse_experiments
from utils.harness import (
    ConfigError, check_comparable, compare_command, config_from_dict, export_csv, load_config, plot_script,
    run_experiment, simulate_run, summarize, with_algorithm
)
from utils.combiner import hastings_weights
from utils.settings.config import STEP_SIZE

SMALL = '''
topology = "ieee14"
algorithm = "{algorithm}"
iterations = 30
runs = 2
seed = 16
'''


@pytest.fixture
def small_config(tmp_path):
    def make(algorithm='atc', extra=''):
        path = tmp_path / f'{algorithm}.toml'
        path.write_text(SMALL.format(algorithm=algorithm) + extra)
        return path
    return make


def test_defaults_are_filled_in():
    cfg = config_from_dict({'topology': 'ieee14'})

    assert cfg.algorithm == 'atc'
    assert cfg.combiner == 'hastings'
    assert cfg.params.mu == STEP_SIZE
    assert cfg.params.alpha(0) == STEP_SIZE
    assert (cfg.iterations, cfg.runs, cfg.seed) == (1000, 100, 16)
    assert cfg.gap_buses == (5,)
    assert cfg.topology.noise_variance == (0.001,) * 14


def test_overrides_reach_the_topology():
    cfg = config_from_dict({'topology': 'ieee14', 'noise_variance': 0.0, 'combiner': 'metropolis',
                            'areas': [[1, 2, 5], [3, 4], [6, 11, 12, 13], [7, 8, 9, 10, 14]]})
    assert cfg.topology.noise_variance == (0.0,) * 14
    assert len(cfg.topology.areas) == 4


@pytest.mark.parametrize('doc, message', [
    ({}, 'missing required key "topology"'),
    ({'topology': 'ieee14', 'step': 0.1}, r"unknown key\(s\) \['step'\]"),
    ({'topology': 'ieee14', 'mcse': {'gamma': 0.1}}, 'mcse.gamma'),
    ({'topology': 'ieee14', 'algorithm': 'lms'}, 'algorithm'),
    ({'topology': 'ieee14', 'mu': -0.1}, 'mu: expected a positive number'),
    ({'topology': 'ieee14', 'runs': 0}, 'runs'),
    ({'topology': 'ieee14', 'gap_buses': [15]}, 'gap_buses'),
    ({'topology': 'ieee14', 'theta': [1.0, 2.0]}, 'theta'),
    ({'topology': 'ieee14', 'noise_variance_per_bus': [0.1]}, 'expected 14 values'),
    ({'topology': 'ieee300'}, 'neither a preset'),
])
def test_invalid_configs(doc, message):
    with pytest.raises(ConfigError, match=message):
        config_from_dict(doc, 'experiment.toml')


def test_load_config_resolves_relative_topology(tmp_path):
    (tmp_path / 'grid.toml').write_text('buses = 3\nbranches = [[1, 2], [2, 3]]\nnoise_variance = 0.01\n')
    (tmp_path / 'experiment.toml').write_text('topology = "grid.toml"\nruns = 1\niterations = 5\n')

    cfg = load_config(tmp_path / 'experiment.toml')
    assert cfg.topology.num_buses == 3
    assert cfg.topology_source == str(tmp_path / 'grid.toml')
    assert cfg.gap_buses == (3,)


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match='does not exist'):
        load_config(tmp_path / 'missing.toml')

    (tmp_path / 'broken.toml').write_text('topology = "ieee14\n')
    with pytest.raises(ConfigError, match='malformed'):
        load_config(tmp_path / 'broken.toml')


def test_simulate_run_is_independent_of_other_runs(small_config):
    cfg = load_config(small_config())
    weights = hastings_weights(cfg.topology)

    alone = simulate_run(cfg, weights, 1)
    bundle = run_experiment(replace(cfg, runs=1), progress=False)
    again = simulate_run(cfg, weights, 1)

    np.testing.assert_array_equal(alone.mse, again.mse)
    assert not np.array_equal(alone.mse, bundle.trace.mse)


def test_run_experiment_averages_runs(small_config):
    cfg = load_config(small_config())
    weights = hastings_weights(cfg.topology)
    bundle = run_experiment(cfg, progress=False)

    expected = (simulate_run(cfg, weights, 0).mse + simulate_run(cfg, weights, 1).mse) / 2
    np.testing.assert_allclose(bundle.trace.mse, expected, rtol=1e-15)
    assert bundle.trace.runs == 2
    assert bundle.label == 'atc'
    assert bundle.trace.mse[-1] < bundle.trace.mse[0]


def test_export_csv(small_config, tmp_path):
    cfg = load_config(small_config(extra='gap_buses = [5, 14]\n'))
    path = export_csv(run_experiment(cfg, progress=False), tmp_path / 'out' / 'atc.csv')

    data = pd.read_csv(path)
    assert list(data.columns) == ['iteration', 'mse_linear', 'mse_db', 'gap_bus_5', 'gap_bus_14']
    assert data['iteration'].tolist() == list(range(1, 31))
    np.testing.assert_allclose(data['mse_db'], 10 * np.log10(data['mse_linear']), rtol=1e-10)

    echo = json.loads(path.with_suffix('.json').read_text())
    assert echo['algorithm'] == 'atc'
    assert echo['seed'] == 16
    assert echo['buses'] == 14


def test_export_is_byte_identical(small_config, tmp_path):
    cfg = load_config(small_config('dsita'))
    first = export_csv(run_experiment(cfg, progress=False), tmp_path / 'first.csv')
    second = export_csv(run_experiment(cfg, progress=False), tmp_path / 'second.csv')

    assert first.read_bytes() == second.read_bytes()
    assert first.with_suffix('.json').read_bytes() == second.with_suffix('.json').read_bytes()


def test_seed_changes_the_output(small_config):
    cfg = load_config(small_config())
    a = run_experiment(cfg, progress=False)
    b = run_experiment(replace(cfg, seed=17), progress=False)
    assert not np.array_equal(a.trace.mse, b.trace.mse)


@pytest.mark.slow
def test_workers_do_not_change_the_result(small_config):
    cfg = load_config(small_config('desta'))
    serial = run_experiment(cfg, progress=False)
    parallel = run_experiment(replace(cfg, num_workers=2), progress=False)

    np.testing.assert_array_equal(serial.trace.mse, parallel.trace.mse)
    assert serial.config_echo == parallel.config_echo


def test_compare_command(small_config, tmp_path):
    cfg = load_config(small_config())
    cfgs = [with_algorithm(cfg, a) for a in ('atc', 'dsita')]
    csv_path, script_path, bundles = compare_command(cfgs, tmp_path / 'compare.csv', gap_bus=5, progress=False)

    data = pd.read_csv(csv_path)
    assert list(data.columns) == ['iteration', 'mse_atc', 'mse_dsita', 'gap_bus_5_atc', 'gap_bus_5_dsita']
    assert len(data) == 30
    assert script_path.name == 'compare_plot.py'
    assert "'compare.csv'" in script_path.read_text()
    assert set(json.loads(csv_path.with_suffix('.json').read_text())) == {'atc', 'dsita'}

    table = summarize(bundles, gap_bus=5, window=10)
    assert table['algorithm'].tolist() == ['atc', 'dsita']


def test_compare_rejects_mismatched_configs(small_config):
    cfg = load_config(small_config())
    with pytest.raises(ConfigError, match='iterations'):
        check_comparable([cfg, replace(with_algorithm(cfg, 'desta'), iterations=10)])
    with pytest.raises(ConfigError, match='repeat'):
        check_comparable([cfg, cfg])
    with pytest.raises(ConfigError, match='unknown tag'):
        with_algorithm(cfg, 'lms')


def test_plot_script_names_every_column(tmp_path):
    script = plot_script(tmp_path / 'compare.csv', ['atc', 'desta'], gap_bus=5)
    assert "CSV_FILE = 'compare.csv'" in script
    assert "ALGORITHMS = ['atc', 'desta']" in script
    assert 'from utils.plotting import plot_comparison' in script
    assert "plot_comparison(data[columns], 'compare.png')" in script
    compile(script, 'compare_plot.py', 'exec')


def test_cli_run(small_config, tmp_path):
    out = tmp_path / 'cli.csv'
    code = dse_experiments.main(['--quiet', 'run', '--config', str(small_config()), '--out', str(out),
                                 '--runs', '1', '--iterations', '7'])

    assert code == 0
    data = pd.read_csv(out)
    assert len(data) == 7
    assert json.loads(out.with_suffix('.json').read_text())['runs'] == 1


def test_cli_reports_errors(tmp_path, capsys):
    (tmp_path / 'bad.toml').write_text('topology = "ieee14"\nstep = 3\n')
    code = dse_experiments.main(['--quiet', 'run', '--config', str(tmp_path / 'bad.toml')])

    assert code == 1
    assert 'unknown key' in capsys.readouterr().err


def test_cli_rejects_invalid_overrides(small_config, capsys):
    code = dse_experiments.main(['--quiet', 'run', '--config', str(small_config()), '--runs', '0'])
    assert code == 1
    assert 'runs' in capsys.readouterr().err


def test_cli_preset(capsys):
    assert dse_experiments.main(['preset', 'ieee14', '--print']) == 0
    assert 'buses = 14' in capsys.readouterr().out

    assert dse_experiments.main(['preset', 'ieee14', '--summary']) == 0
    summary = json.loads(capsys.readouterr().out)
    assert summary['connected'] is True


def test_small_topologies_get_an_existing_gap_bus(tmp_path):
    grid = tmp_path / 'grid.toml'
    grid.write_text('buses = 3\nbranches = [[1, 2], [2, 3]]\nnoise_variance = 0.01\n')

    cfg = config_from_dict({'topology': str(grid), 'runs': 1, 'iterations': 2})
    assert cfg.gap_buses == (3,)
    assert config_from_dict({'topology': 'ieee14'}).gap_buses == (5,)
    with pytest.raises(ConfigError, match='gap_buses: bus 5 out of range'):
        config_from_dict({'topology': str(grid), 'gap_buses': [5]})

    cfgs = [with_algorithm(cfg, a) for a in ('atc', 'dsita')]
    csv_path, _, _ = compare_command(cfgs, tmp_path / 'small.csv', progress=False)
    assert list(pd.read_csv(csv_path).columns) == ['iteration', 'mse_atc', 'mse_dsita', 'gap_bus_3_atc',
                                                   'gap_bus_3_dsita']


def test_bundle_keeps_the_initial_gap(small_config):
    bundle = run_experiment(load_config(small_config()), progress=False)
    # Estimates start at zero and theta is all ones
    assert bundle.trace.initial_mse == pytest.approx(14.0)
    np.testing.assert_array_equal(bundle.trace.initial_gap, np.ones(14))


def test_cli_compare_and_plot(small_config, tmp_path):
    out = tmp_path / 'cmp.csv'
    code = dse_experiments.main(['--quiet', 'compare', '--config', str(small_config()), '--out', str(out),
                                 '--algorithms', 'atc,desta', '--runs', '1', '--iterations', '5'])

    assert code == 0
    data = pd.read_csv(out)
    assert list(data.columns) == ['iteration', 'mse_atc', 'mse_desta', 'gap_bus_5_atc', 'gap_bus_5_desta']
    assert len(data) == 5
    assert (tmp_path / 'cmp_plot.py').is_file()

    png = tmp_path / 'figure.png'
    assert dse_experiments.main(['--quiet', 'plot', '--csv', str(out), '--out', str(png)]) == 0
    assert png.stat().st_size > 0


def test_cli_compare_rejects_unknown_algorithms(small_config, capsys):
    code = dse_experiments.main(['--quiet', 'compare', '--config', str(small_config()), '--algorithms', 'atc,lms'])
    assert code == 1
    assert 'unknown tag' in capsys.readouterr().err


def test_cli_plot_errors(tmp_path, capsys):
    assert dse_experiments.main(['plot', '--csv', str(tmp_path / 'missing.csv')]) == 1
    assert 'does not exist' in capsys.readouterr().err

    (tmp_path / 'other.csv').write_text('iteration,value\n1,0.5\n')
    assert dse_experiments.main(['plot', '--csv', str(tmp_path / 'other.csv')]) == 1
    assert 'no mse_<algorithm> columns' in capsys.readouterr().err


def test_emitted_plot_script_renders(small_config, tmp_path, monkeypatch):
    matplotlib.use('Agg')
    cfg = load_config(small_config())
    _, script_path, _ = compare_command([with_algorithm(cfg, a) for a in ('atc', 'mcse')], tmp_path / 'compare.csv',
                                        progress=False)

    monkeypatch.chdir(tmp_path)
    runpy.run_path(str(script_path))
    assert (tmp_path / 'compare.png').stat().st_size > 0
