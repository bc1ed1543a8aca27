"""
Tests for run configuration parsing and validation
"""

import pytest

from mvsmamba.config.run_config import RunConfig, from_mapping, load_run_config, parse_text
from mvsmamba.utils.exceptions import ConfigurationError


def test_defaults():
    cfg = load_run_config()
    assert cfg == RunConfig()
    assert cfg.cascade.num_hypotheses == (32, 16, 8, 4)
    assert cfg.cascade.interval_scales == (2.0, 1.0, 1.0, 0.5)
    assert cfg.model.dm_scales == (0,) and cfg.model.sdm_scales == (1,)
    assert cfg.scan.centering == 'reference' and cfg.scan.dynamic and not cfg.scan.zigzag
    assert cfg.io.checkpoint_path.endswith('model.ckpt')


def test_text_round_trip(tiny_config):
    assert from_mapping(parse_text(tiny_config.to_text())) == tiny_config


def test_values_are_typed(tiny_config):
    assert tiny_config.model.channels == (8, 8, 8, 8)
    assert tiny_config.scene.height == 32
    assert tiny_config.train.log_every == 1


def test_comments_and_blank_lines_are_skipped():
    values = parse_text("# run\n\ntrain.iters = 5\n  # indented comment\n")
    assert values == {'train.iters': '5'}


@pytest.mark.parametrize('text', ['train.iters=5\ntrain.iters=6\n', 'train.iters 5\n'])
def test_malformed_text(text):
    with pytest.raises(ConfigurationError):
        parse_text(text)


@pytest.mark.parametrize('settings', [
    {'train.epochs': '3'},
    {'train.iters': 'many'},
    {'train.iters': '-1'},
    {'cascade.num_hypotheses': '32,16,8'},
    {'cascade.num_hypotheses': '32,16,8,1'},
    {'model.channels': '64,32,16,6'},
    {'model.sdm_scales': '4'},
    {'scene.height': '72'},
    {'scene.depth_min': '5', 'scene.depth_max': '5'},
    {'scan.centering': 'middle'},
    {'loss.kind': 'huber'},
    {'numeric.dtype': 'float16'},
    {'train.ref_views': '0,3'},
])
def test_invalid_settings(settings):
    with pytest.raises(ConfigurationError) as exc:
        from_mapping(settings)
    assert exc.value.exit_code == 5


def test_error_names_the_offending_key():
    with pytest.raises(ConfigurationError) as exc:
        from_mapping({'cascade.groups': '4,4,4,3'})
    assert 'cascade.groups' in exc.value.details['errors']


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError):
        load_run_config(str(tmp_path / 'absent.cfg'))


def test_load_file(config_file, tiny_config):
    assert load_run_config(config_file) == tiny_config


def test_overrides(tiny_config):
    cfg = tiny_config.with_overrides(seed=7, out='elsewhere')
    assert cfg.train.seed == 7 and cfg.io.out_dir == 'elsewhere'
    assert cfg.io.checkpoint_path == 'elsewhere/model.ckpt'
    assert tiny_config.with_overrides() == tiny_config
