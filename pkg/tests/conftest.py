"""
Shared fixtures
"""

import numpy as np
import pytest

from mvsmamba.config.run_config import from_mapping
from mvsmamba.numeric import set_default_dtype

# Small enough that a full cascade runs in well under a second
TINY_SETTINGS = {
    'model.channels': '8,8,8,8',
    'model.d_state': '2',
    'model.expand': '1',
    'model.mlp_ratio': '1',
    'model.reg_channels': '2',
    'cascade.num_hypotheses': '8,4,4,2',
    'cascade.groups': '4,4,4,4',
    'scene.height': '32',
    'scene.width': '32',
    'scene.num_views': '3',
    'train.iters': '2',
    'train.log_every': '1',
}


@pytest.fixture(autouse=True)
def double_precision():
    set_default_dtype('float64')
    yield
    set_default_dtype('float64')


@pytest.fixture
def rng():
    return np.random.default_rng(0)


@pytest.fixture
def tiny_settings(tmp_path):
    settings = dict(TINY_SETTINGS)
    settings['io.scene_dir'] = str(tmp_path / 'scene')
    settings['io.out_dir'] = str(tmp_path / 'out')
    return settings


@pytest.fixture
def tiny_config(tiny_settings):
    return from_mapping(tiny_settings)


@pytest.fixture
def tiny_scene(tiny_config):
    from mvsmamba.services import SceneService
    return SceneService.generate(tiny_config.scene, tiny_config.train.seed, tiny_config.io.scene_dir)


@pytest.fixture
def config_file(tmp_path, tiny_settings):
    """Write the tiny settings as a key=value file and return its path"""
    path = tmp_path / 'run.cfg'
    path.write_text('\n'.join(f"{k}={v}" for k, v in tiny_settings.items()) + '\n')
    return str(path)
