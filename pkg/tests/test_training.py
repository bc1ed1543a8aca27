"""
Tests for training, checkpoint restore and inference
"""

import logging
import math
from dataclasses import replace

import numpy as np
import pytest

from mvsmamba.config.run_config import from_mapping, load_run_config
from mvsmamba.services import CheckpointService, EvaluationService, InferenceService, SceneService, TrainingService
from mvsmamba.utils.exceptions import ArgumentError


def _config(settings, **changes):
    values = dict(settings)
    values.update(changes)
    return from_mapping(values)


def test_zero_iterations_saves_the_initialisation(tiny_settings, tiny_scene):
    cfg = _config(tiny_settings, **{'train.iters': '0'})
    result = TrainingService.train(cfg, bundle=tiny_scene)
    assert result.history == [] and result.initial_loss is None

    state, saved_cfg = CheckpointService.load(result.checkpoint)
    fresh = TrainingService.build_model(cfg).state_dict()
    assert saved_cfg == cfg
    assert set(state) == set(fresh)
    for name, value in fresh.items():
        np.testing.assert_array_equal(state[name], value)


def test_initial_loss_is_uniform_cross_entropy(tiny_config, tiny_scene):
    result = TrainingService.train(tiny_config, bundle=tiny_scene)
    first = result.history[0]
    assert first['loss_s0'] == pytest.approx(math.log(tiny_config.cascade.num_hypotheses[0]), rel=1e-9)
    for s, d in enumerate(tiny_config.cascade.num_hypotheses):
        assert first[f"loss_s{s}"] == pytest.approx(math.log(d), rel=1e-9)
    assert result.initial_loss == pytest.approx(sum(first[f"loss_s{s}"] for s in range(4)))


def test_training_writes_log_and_checkpoint(tiny_config, tiny_scene):
    result = TrainingService.train(tiny_config, bundle=tiny_scene)
    with open(result.log_path) as f:
        lines = f.read().splitlines()
    assert lines[0].startswith('iter,lr,loss,loss_s0')
    assert len(lines) == 1 + tiny_config.train.iters
    assert result.checkpoint.endswith('model.ckpt')
    assert np.isfinite(result.final_loss)


def test_l1_training_follows_the_lr_schedule(tiny_settings, tiny_scene):
    cfg = _config(tiny_settings, **{'loss.kind': 'l1', 'train.iters': '3',
                                    'train.lr_milestones': '1,2', 'train.lr_gamma': '0.1'})
    result = TrainingService.train(cfg, bundle=tiny_scene)
    assert [r['lr'] for r in result.history] == pytest.approx([1e-3, 1e-4, 1e-5])
    assert all(np.isfinite(r['loss']) and r['loss'] >= 0 for r in result.history)


def test_training_loads_the_configured_scene(tiny_config, tiny_scene):
    result = TrainingService.train(tiny_config)
    assert len(result.history) == tiny_config.train.iters


def test_training_rejects_other_extents(tiny_config):
    wide = SceneService.synthesize(_config({'scene.height': '32', 'scene.width': '48'}).scene, seed=0)
    with pytest.raises(ArgumentError):
        TrainingService.train(tiny_config, bundle=wide)


def test_training_requires_ground_truth(tiny_config):
    bundle = SceneService.synthesize(tiny_config.scene, seed=0)
    bundle.views[0].gt_depth = None
    with pytest.raises(ArgumentError):
        TrainingService.train(tiny_config, bundle=bundle)


def test_inference_is_deterministic(tiny_config, tiny_scene, tmp_path):
    checkpoint = TrainingService.train(tiny_config, bundle=tiny_scene).checkpoint
    first = InferenceService.infer(checkpoint, tiny_config.io.scene_dir, 0, str(tmp_path / 'a'))
    second = InferenceService.infer(checkpoint, tiny_config.io.scene_dir, 0, str(tmp_path / 'b'))
    np.testing.assert_array_equal(first.depth, second.depth)
    assert first.depth.shape == (32, 32)
    d_min, d_max = tiny_config.scene.depth_min, tiny_config.scene.depth_max
    assert first.depth.min() >= d_min and first.depth.max() <= d_max
    assert np.all((first.confidence > 0) & (first.confidence <= 1))
    assert first.depth_path.endswith('depth_00000000.pfm')


def test_inference_rejects_other_extents(tiny_config, tiny_scene, tmp_path):
    checkpoint = TrainingService.train(tiny_config, bundle=tiny_scene).checkpoint
    other = tmp_path / 'wide'
    SceneService.generate(_config({'scene.height': '32', 'scene.width': '48'}).scene, 0, str(other))
    with pytest.raises(ArgumentError):
        InferenceService.infer(checkpoint, str(other), 0, str(tmp_path / 'out'))


@pytest.mark.slow
def test_default_scene_overfits(tmp_path):
    cfg = load_run_config().with_overrides(out=str(tmp_path / 'out'))
    bundle = SceneService.synthesize(cfg.scene, cfg.train.seed)
    result = TrainingService.train(cfg, bundle=bundle)

    first = result.history[0]
    assert first['loss_s0'] == pytest.approx(math.log(32), rel=0.02)
    assert result.initial_loss == pytest.approx(math.log(32 * 16 * 8 * 4), rel=0.02)
    span = cfg.scene.depth_max - cfg.scene.depth_min
    assert result.final_mae < 0.05 * span

    predicted = InferenceService.infer(result.checkpoint, SceneService.write(bundle, str(tmp_path / 'scene')),
                                       0, str(tmp_path / 'pred'))
    metrics = EvaluationService.evaluate(predicted.depth, bundle.views[0].gt_depth)
    assert metrics.mae < 0.05 * span


@pytest.mark.slow
def test_scan_modules_do_not_hurt_on_average(tmp_path):
    """Report-only: mean finest MAE with and without the DM-module over five seeds"""
    maes = {True: [], False: []}
    for seed in range(5):
        base = load_run_config().with_overrides(seed=seed)
        bundle = SceneService.synthesize(base.scene, seed)
        for use_dm in (True, False):
            cfg = replace(base, model=replace(base.model, use_dm=use_dm),
                          io=replace(base.io, out_dir=str(tmp_path / f"s{seed}_{use_dm}")))
            maes[use_dm].append(TrainingService.train(cfg, bundle=bundle).final_mae)

    with_dm, without_dm = float(np.mean(maes[True])), float(np.mean(maes[False]))
    logging.getLogger(__name__).warning(f"mean finest MAE: with DM {with_dm:.4f}, without DM {without_dm:.4f}")
    assert np.isfinite(with_dm) and np.isfinite(without_dm)
