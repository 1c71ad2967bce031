import json
import os

import numpy as np
import pandas as pd
import pytest

from pymanreach.cli import load_scenario, main, run_scenario
from pymanreach.exceptions import ConfigError

CONFIG_DIR = os.path.join(os.path.dirname(__file__), '..', 'config')
PENDULUM = os.path.join(CONFIG_DIR, 'pendulum.config')
SO3 = os.path.join(CONFIG_DIR, 'so3.config')

FAST = {'horizon': 0.1, 'n_traj': 20}


def _write(tmp_path, text, name='scenario.config'):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _pendulum_text(**replacements):
    with open(PENDULUM) as file:
        text = file.read()
    for old, new in replacements.items():
        text = text.replace(old, new)
    return text


def test_load_pendulum_scenario():
    scenario = load_scenario(PENDULUM)
    assert scenario.manifold.name == 'circle'
    assert scenario.x0 == pytest.approx([np.pi / 4])
    assert scenario.f0 == pytest.approx([-np.sqrt(2) / 4])
    assert scenario.L_f == 1.5
    assert scenario.n_traj == 500
    assert scenario.env is None
    assert scenario.has_truth
    assert scenario.f_true(np.array([np.pi / 2])) == pytest.approx([-0.5])


def test_load_so3_scenario():
    scenario = load_scenario(SO3, {'seed': 4, 'dt': None})
    assert scenario.manifold.name == 'so3'
    assert scenario.env.H_inv_norm_hi == pytest.approx(1.25)
    assert scenario.G0.shape == (3, 2)
    assert scenario.seed == 4
    assert scenario.dt == 0.001
    assert scenario.G_true(np.array([0.0, 1.0, 0.4]))[2, 0] == pytest.approx(1.2)


def test_reach_row_count(tmp_path):
    summary = run_scenario(PENDULUM, 'reach', str(tmp_path), FAST)
    cloud = pd.read_csv(tmp_path / 'cloud.csv')
    assert len(cloud) == 20 * (100 + 1)
    assert list(cloud.columns) == ['traj_id', 't', 'theta', 'x1', 'x2']
    assert summary.n_points == len(cloud)
    assert summary.violations is None
    assert summary.alpha_at_x0 == pytest.approx(1.0)
    assert summary.L_G == 0.0
    assert (tmp_path / 'summary.json').exists()


def test_summary_records_parsed_parameters(tmp_path):
    summary = run_scenario(PENDULUM, 'reach', str(tmp_path), FAST)
    scenario = load_scenario(PENDULUM, FAST)
    assert summary.parameters == scenario.parameters()
    with open(tmp_path / 'summary.json') as file:
        written = json.load(file)
    assert written['parameters'] == scenario.parameters()
    assert written['parameters']['n_traj'] == 20
    assert written['outputs'] == ['cloud.csv', 'summary.json']


def test_identical_runs_write_identical_files(tmp_path):
    run_scenario(PENDULUM, 'reach', str(tmp_path / 'a'), FAST)
    run_scenario(PENDULUM, 'reach', str(tmp_path / 'b'), dict(FAST, n_workers=4))
    assert (tmp_path / 'a' / 'cloud.csv').read_bytes() == (tmp_path / 'b' / 'cloud.csv').read_bytes()


def test_validate_pendulum_exit_code(tmp_path):
    code = main([
        'validate', '--config', PENDULUM, '--out', str(tmp_path),
        '--horizon', '0.2', '--trajectories', '20',
    ])
    assert code == 0
    with open(tmp_path / 'summary.json') as file:
        summary = json.load(file)
    assert summary['violations'] == 0
    assert summary['containment']['n_checked'] == 20 * 200
    assert (tmp_path / 'truth_cloud.csv').exists()


def test_gvs_samples(tmp_path):
    summary = run_scenario(SO3, 'gvs', str(tmp_path), {'gvs_samples': 30})
    samples = pd.read_csv(tmp_path / 'gvs_samples.csv')
    assert list(samples.columns) == [
        'sample_id', 'psi', 'theta', 'phi', 'distance', 'alpha',
        'theorem1_radius', 'lemma4_radius', 'admissible', 'image_preserving',
    ]
    assert len(samples) == 30
    assert np.all(samples['distance'] <= 0.25 + 1e-9)
    assert np.all(samples['admissible'] == (samples['alpha'] >= 0))
    assert summary.theorem1_radius_at_samples['n'] == 30
    assert summary.L_G == pytest.approx(2.67, abs=0.01)


def test_malformed_lipschitz_constants(tmp_path):
    path = _write(tmp_path, _pendulum_text(**{'L_g = [0]': 'L_g = [0, 0]'}))
    with pytest.raises(ConfigError) as err:
        load_scenario(path)
    assert err.value.field == 'LOCAL_DATA.L_g'
    assert main(['reach', '--config', path, '--out', str(tmp_path / 'out')]) == 2


def test_validate_needs_truth(tmp_path):
    text = _pendulum_text()
    path = _write(tmp_path, text[:text.index('[TRUTH]')])
    with pytest.raises(ConfigError) as err:
        run_scenario(path, 'validate', str(tmp_path / 'out'), FAST)
    assert err.value.field == 'TRUTH'


def test_config_errors_name_fields(tmp_path):
    cases = {
        'x0 = [pi/4]': ('x0 = [4]', 'LOCAL_DATA.x0'),
        'f0 = [-sqrt(2)/4]': ('f0 = [-sqrt(2)/4, 0]', 'LOCAL_DATA.f0'),
        'schema_version = 1': ('schema_version = 2', 'SCENARIO.schema_version'),
        'policy = piecewise_constant_random': ('policy = greedy', 'SIMULATION.policy'),
        'G = [[1]]': ('G = [[1]] + theta', 'TRUTH.G'),
        'L_f = 1.5': ('L_f = q', 'LOCAL_DATA.L_f'),
    }
    for old, (new, field) in cases.items():
        path = _write(tmp_path, _pendulum_text(**{old: new}))
        with pytest.raises(ConfigError) as err:
            load_scenario(path)
        assert err.value.field == field


def test_manifold_definition_next_to_scenario(tmp_path):
    with open(os.path.join(CONFIG_DIR, 'polar.manifold')) as file:
        _write(tmp_path, file.read(), 'polar.manifold')
    path = _write(tmp_path, "\n".join([
        "[SCENARIO]",
        "schema_version = 1",
        "manifold = polar.manifold",
        "[LOCAL_DATA]",
        "x0 = [1, 0]",
        "f0 = [0, 0]",
        "G0 = [[1, 0], [0, 1]]",
        "L_f = 0.5",
        "L_g = [0.1, 0.1]",
        "[SIMULATION]",
        "horizon = 0",
        "trajectories = 1",
        "gvs_samples = 3",
        "gvs_radius = 0.2",
    ]))
    scenario = load_scenario(path)
    assert scenario.manifold.coord_names == ('r', 'a')
    summary = run_scenario(path, 'gvs', str(tmp_path / 'out'))
    samples = pd.read_csv(tmp_path / 'out' / 'gvs_samples.csv')
    assert list(samples.columns[1:3]) == ['r', 'a']
    assert summary.n_points == len(samples) == 3


def test_euclidean_needs_dimension(tmp_path):
    base = "\n".join([
        "[SCENARIO]",
        "schema_version = 1",
        "manifold = euclidean",
        "{dim}",
        "[LOCAL_DATA]",
        "x0 = [0, 0]",
        "f0 = [0.1, 0]",
        "G0 = [[1], [0]]",
        "L_f = 1",
        "L_g = [0]",
        "[SIMULATION]",
        "horizon = 0.01",
        "trajectories = 2",
    ])
    with pytest.raises(ConfigError) as err:
        load_scenario(_write(tmp_path, base.format(dim='')))
    assert err.value.field == 'SCENARIO.dim'
    scenario = load_scenario(_write(tmp_path, base.format(dim='dim = 2')))
    assert scenario.manifold.dim == 2
