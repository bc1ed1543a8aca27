"""
Tests for scan-order images and feature PCA renderings
"""

import numpy as np
import pytest

from mvsmamba.models.dynscan import ScanStrategy
from mvsmamba.models.network import PyramidFeatures
from mvsmamba.numeric import Tensor
from mvsmamba.services import DebugService
from mvsmamba.services.debug_service import fit_pca, to_rgb
from mvsmamba.utils.exceptions import ArgumentError


def test_constant_feature_renders_uniformly():
    feat = np.full((6, 4, 5), 2.5)
    basis = fit_pca(feat)
    assert basis.rank == 0
    rgb = to_rgb(basis.project(feat))
    assert rgb.shape == (3, 4, 5)
    assert np.all(rgb == rgb[:, :1, :1])


def test_rank_three_feature_reconstructs(rng):
    coords = rng.standard_normal((3, 48))
    mixing = rng.standard_normal((8, 3))
    feat = (mixing @ coords + rng.standard_normal((8, 1))).reshape(8, 6, 8)
    basis = fit_pca(feat)
    assert basis.rank == 3
    np.testing.assert_allclose(basis.reconstruct(basis.project(feat)), feat, atol=1e-6)


def test_rgb_normalisation(rng):
    rgb = to_rgb(rng.standard_normal((3, 5, 5)) * 10)
    assert rgb.min() == 0.0 and rgb.max() == 1.0


def test_scan_order_image_marks_one_parity_class():
    gray = DebugService.scan_order_image(4, 4, direction_index=1)
    assert gray.shape == (4, 8)
    h0, w0 = ScanStrategy().start(1, 1)
    visited = gray > 0
    assert visited.sum() == 8
    assert np.all(visited[h0::2, w0::2])
    assert gray[visited].min() == 1 and gray[visited].max() == 255


def test_scan_order_image_follows_direction():
    gray = DebugService.scan_order_image(4, 4, direction_index=3)
    assert gray.shape == (8, 4)
    h0, w0 = ScanStrategy().start(3, 1)
    first_row = gray[h0, w0::2]
    assert np.all(np.diff(first_row.astype(int)) > 0)


def test_dump_scan_writes_four_images(tmp_path):
    paths = DebugService.dump_scan(4, 6, str(tmp_path), source_index=2)
    assert len(paths) == 4
    assert all(p.endswith('_k2.pgm') for p in paths)
    with open(paths[0], 'rb') as f:
        assert f.read(2) == b'P5'


def test_dump_scan_rejects_odd_extents(tmp_path):
    with pytest.raises(ArgumentError):
        DebugService.dump_scan(3, 4, str(tmp_path))


def test_feature_images_share_one_basis(rng):
    maps = [PyramidFeatures([Tensor(rng.standard_normal((4, 4, 4)))]) for _ in range(2)]
    images = DebugService.feature_images(maps, scale=0)
    assert len(images) == 2
    assert all(img.shape == (3, 4, 4) for img in images)
    assert all(img.min() >= 0.0 and img.max() <= 1.0 for img in images)
