"""
Tests for the command-line surface
"""

import os

import numpy as np
import pytest
from click.testing import CliRunner

from mvsmamba import create_cli
from mvsmamba.cli.middlewares.error_handler import handle_error
from mvsmamba.config.settings import TestingConfig
from mvsmamba.services import ImageService
from mvsmamba.utils.exceptions import (
    ArgumentError,
    ConfigurationError,
    FileFormatError,
    InvariantViolationError,
    MVSMambaError,
    OracleError,
)


@pytest.fixture
def cli():
    return create_cli(TestingConfig)


@pytest.fixture
def runner():
    return CliRunner()


def _run(runner, cli, config_file, *args):
    return runner.invoke(cli, ['--config', config_file, *args])


def test_help_lists_commands(runner, cli):
    result = runner.invoke(cli, ['--help'])
    assert result.exit_code == 0
    for name in ('gen-synthetic', 'train', 'infer', 'eval', 'selfcheck', 'dump-scan', 'dump-features'):
        assert name in result.output


def test_unknown_command_is_a_usage_error(runner, cli):
    assert runner.invoke(cli, ['calibrate']).exit_code == 2


def test_bad_config_exits_with_configuration_code(runner, cli, tmp_path):
    path = tmp_path / 'bad.cfg'
    path.write_text('train.iters=lots\n')
    result = runner.invoke(cli, ['--config', str(path), 'dump-scan'])
    assert result.exit_code == 5


def test_pipeline(runner, cli, config_file, tiny_settings):
    scene_dir, out_dir = tiny_settings['io.scene_dir'], tiny_settings['io.out_dir']

    result = _run(runner, cli, config_file, 'gen-synthetic')
    assert result.exit_code == 0, result.output
    assert os.path.isfile(os.path.join(scene_dir, 'pair.txt'))

    result = _run(runner, cli, config_file, 'train')
    assert result.exit_code == 0, result.output
    checkpoint = result.output.strip().splitlines()[-1]
    assert os.path.isfile(checkpoint)
    assert os.path.isfile(os.path.join(out_dir, 'run_config.txt'))
    assert os.path.isfile(os.path.join(out_dir, 'train_log.csv'))

    result = _run(runner, cli, config_file, 'infer', '--ref-view', '0')
    assert result.exit_code == 0, result.output
    depth_path = result.output.strip().splitlines()[0]
    assert ImageService.read_pfm(depth_path).shape == (32, 32)

    gt_path = os.path.join(scene_dir, 'depths', '00000000.pfm')
    result = _run(runner, cli, config_file, 'eval', '--pred', depth_path, '--gt', gt_path, '--thresholds', '1,2')
    assert result.exit_code == 0, result.output
    assert 'MAE' in result.output and 'Prec@2' in result.output

    result = _run(runner, cli, config_file, 'dump-features', '--scale', '1')
    assert result.exit_code == 0, result.output
    assert len(result.output.strip().splitlines()) == 3


def test_seed_and_out_overrides(runner, cli, config_file, tmp_path):
    out = tmp_path / 'elsewhere'
    result = runner.invoke(cli, ['--config', config_file, '--seed', '9', '--out', str(out), 'gen-synthetic'])
    assert result.exit_code == 0, result.output
    assert 'train.seed=9' in (tmp_path / 'scene' / 'run_config.txt').read_text()


def test_train_without_scene_reports_file_error(runner, cli, config_file):
    result = _run(runner, cli, config_file, 'train')
    assert result.exit_code == 6


def test_infer_without_checkpoint_reports_file_error(runner, cli, config_file, tiny_scene):
    result = _run(runner, cli, config_file, 'infer')
    assert result.exit_code == 6


def test_eval_extent_mismatch(runner, cli, config_file, tmp_path):
    pred = ImageService.write_pfm(str(tmp_path / 'pred.pfm'), np.ones((4, 4)))
    gt = ImageService.write_pfm(str(tmp_path / 'gt.pfm'), np.ones((4, 8)))
    result = _run(runner, cli, config_file, 'eval', '--pred', pred, '--gt', gt)
    assert result.exit_code == 2


def test_eval_bad_thresholds(runner, cli, config_file, tmp_path):
    pred = ImageService.write_pfm(str(tmp_path / 'pred.pfm'), np.ones((4, 4)))
    result = _run(runner, cli, config_file, 'eval', '--pred', pred, '--gt', pred, '--thresholds', 'one,two')
    assert result.exit_code == 2


def test_dump_scan(runner, cli, config_file, tiny_settings):
    result = _run(runner, cli, config_file, 'dump-scan', '--height', '4', '--width', '6', '--zigzag')
    assert result.exit_code == 0, result.output
    paths = result.output.strip().splitlines()
    assert len(paths) == 4 and all(os.path.isfile(p) for p in paths)


def test_dump_scan_odd_extent(runner, cli, config_file):
    assert _run(runner, cli, config_file, 'dump-scan', '--height', '3').exit_code == 2


def test_selfcheck(runner, cli, config_file):
    result = _run(runner, cli, config_file, 'selfcheck')
    assert result.exit_code == 0, result.output
    assert 'all checks passed' in result.output
    assert 'parameters:' in result.output


@pytest.mark.parametrize('error, code', [
    (MVSMambaError('x'), 1),
    (ArgumentError('x'), 2),
    (InvariantViolationError('x'), 3),
    (OracleError('x'), 4),
    (ConfigurationError('x'), 5),
    (FileFormatError('x', details={'path': 'a.pfm'}), 6),
    (RuntimeError('x'), 1),
])
def test_each_error_type_maps_to_its_exit_code(error, code):
    assert handle_error(error) == code
