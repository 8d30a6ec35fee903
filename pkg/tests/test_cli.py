import json
from dataclasses import fields

import numpy as np
import pytest

from cli import main, parse_seeds
from errors import InputError
from hparams import hparams


@pytest.fixture
def restore_hparams(monkeypatch):
    for f in fields(hparams):
        monkeypatch.setattr(hparams, f.name, getattr(hparams, f.name))


def test_parse_seeds():
    assert parse_seeds('3') == (0, 1, 2)
    assert parse_seeds('2-4') == (2, 3, 4)
    assert parse_seeds('1,5') == (1, 5)
    with pytest.raises(InputError):
        parse_seeds('x')


def test_run_writes_traces(tmp_path, capsys, restore_hparams):
    out = tmp_path / 'results'
    code = main(['run', '--algo', 'fullinfo_ew', '--actions', 'ball:8', '--n', '20', '--seeds', '2',
                 '--out', str(out), '--quiet'])
    assert code == 0
    assert sorted(p.name for p in out.iterdir()) == ['summary.csv', 'trace_seed0.csv', 'trace_seed1.csv']
    assert 'mean final regret' in capsys.readouterr().out
    assert (out / 'trace_seed1.csv').read_text().startswith('# {"algo": "fullinfo_ew"')


def test_run_from_config(tmp_path):
    config = tmp_path / 'config.json'
    config.write_text(json.dumps({'algo': 'cg', 'actions': 'ball:16', 'n': 10, 'seeds': [3]}))
    assert main(['run', '--config', str(config), '--out', str(tmp_path), '--quiet']) == 0
    assert (tmp_path / 'trace_seed3.csv').exists()


def test_input_errors_exit_2(tmp_path, restore_hparams):
    assert main(['run', '--algo', 'ucb', '--out', str(tmp_path), '--quiet']) == 2
    assert main(['run', '--params', '{eta', '--out', str(tmp_path), '--quiet']) == 2
    assert main(['--hparams', 'no_such_name=1', 'design', '--features', str(tmp_path / 'x.csv')]) == 2


def test_short_horizon_exits_3(tmp_path):
    assert main(['run', '--algo', 'bandit_ew', '--actions', 'ball:8', '--n', '2', '--seeds', '1',
                 '--out', str(tmp_path), '--quiet']) == 3


def test_unconverged_design_exits_4(tmp_path, restore_hparams):
    features = tmp_path / 'features.csv'
    np.savetxt(str(features), np.random.default_rng(0).standard_normal((10, 3)), delimiter=',')
    assert main(['--hparams', 'design_max_iter=1', 'design', '--features', str(features), '--tol', '1e-12',
                 '--out', str(tmp_path / 'design.csv')]) == 4


def test_design(tmp_path, capsys, restore_hparams):
    features = tmp_path / 'features.csv'
    np.savetxt(str(features), np.eye(3), delimiter=',')
    out = tmp_path / 'design.csv'
    assert main(['design', '--features', str(features), '--out', str(out)]) == 0
    assert 'max leverage' in capsys.readouterr().out
    lines = out.read_text().splitlines()
    assert lines[0] == 'action_index,weight'
    assert len(lines) == 4


def test_sample_quad(tmp_path, capsys):
    B = tmp_path / 'B.csv'
    b = tmp_path / 'b.csv'
    np.savetxt(str(B), -np.eye(2), delimiter=',')
    np.savetxt(str(b), [[0.5, 0.0]], delimiter=',')
    out = tmp_path / 'samples.csv'
    assert main(['sample-quad', '--B', str(B), '--b', str(b), '--count', '50', '--burn_in', '20',
                 '--out', str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == 'a0,a1'
    assert len(lines) == 51
    assert 'Lag-1 autocorrelation' in capsys.readouterr().out


def test_sample_quad_rejects_asymmetric(tmp_path):
    B = tmp_path / 'B.csv'
    b = tmp_path / 'b.csv'
    np.savetxt(str(B), [[1.0, 2.0], [0.0, 1.0]], delimiter=',')
    np.savetxt(str(b), [[0.0, 0.0]], delimiter=',')
    assert main(['sample-quad', '--B', str(B), '--b', str(b), '--out', str(tmp_path / 's.csv')]) == 2


def test_proxy_check(tmp_path, capsys):
    basis = tmp_path / 'basis.json'
    assert main(['proxy-check', '--m', '5', '--p', '50', '--grid', '10', '--out', str(basis)]) == 0
    assert 'sup error' in capsys.readouterr().out
    assert json.loads(basis.read_text())['kernel']['variant'] == 'gaussian'

    assert main(['proxy-check', '--p', '100', '--grid', '10']) == 0
    assert 'Fitted eigendecay' in capsys.readouterr().out


@pytest.mark.parametrize('preset', ['paper', 'theory'])
def test_run_with_schedule_preset(tmp_path, preset):
    assert main(['run', '--algo', 'fullinfo_ew', '--actions', 'ball:8', '--n', '20', '--seeds', '1',
                 '--params', preset, '--out', str(tmp_path), '--quiet']) == 0
    header = json.loads((tmp_path / 'trace_seed0.csv').read_text().splitlines()[0][1:])
    assert header['params'] == 'paper'


def test_hparams_apply_before_defaults(tmp_path, restore_hparams):
    out = tmp_path / 'results'
    assert main(['--hparams', 'num_seeds=1,ball_directions=6', 'run', '--n', '5', '--out', str(out), '--quiet']) == 0
    assert sorted(p.name for p in out.iterdir()) == ['summary.csv', 'trace_seed0.csv']
    header = json.loads((out / 'trace_seed0.csv').read_text().splitlines()[0][1:])
    assert header['seeds'] == [0]
    assert header['actions'] == 'ball'
    assert max(int(row.split(',')[1]) for row in (out / 'trace_seed0.csv').read_text().splitlines()[3:]) < 6


def test_design_tol_override(tmp_path, capsys, restore_hparams):
    features = tmp_path / 'features.csv'
    np.savetxt(str(features), np.random.default_rng(0).standard_normal((20, 4)), delimiter=',')
    assert main(['--hparams', 'design_tol=0.5', 'design', '--features', str(features),
                 '--out', str(tmp_path / 'design.csv')]) == 0
    assert hparams.design_tol == 0.5
    leverage = float(capsys.readouterr().out.split('max leverage ')[1].split()[0])
    assert 4.0 <= leverage <= 4.0 * 1.5 + 1e-9
    assert leverage > 4.0 * (1.0 + 1e-6)
