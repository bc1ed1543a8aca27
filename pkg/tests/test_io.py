"""
Tests for the PFM/PPM codecs, camera and pair files and checkpoints
"""

import numpy as np
import pytest

from mvsmamba.models.mvs import CameraView
from mvsmamba.services import CameraService, CheckpointService, ImageService
from mvsmamba.utils.exceptions import FileFormatError

CAMERA_TEXT = """extrinsic
1 0 0 0.5
0 1 0 0
0 0 1 0
0 0 0 1

intrinsic
100 0 40
0 100 32
0 0 1

6 0.25
"""


def test_pfm_header_and_layout():
    data = np.array([[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]])
    payload = ImageService.encode_pfm(data)
    header = b"Pf\n3 2\n-1.0\n"
    assert payload.startswith(header)
    body = np.frombuffer(payload[len(header):], dtype='<f4')
    np.testing.assert_array_equal(body, [4, 5, 6, 1, 2, 3])


def test_pfm_round_trip_is_exact_in_single_precision(tmp_path, rng):
    data = rng.uniform(0.1, 50.0, (16, 24)).astype(np.float32)
    path = ImageService.write_pfm(str(tmp_path / 'depth.pfm'), data)
    np.testing.assert_array_equal(ImageService.read_pfm(path), data)


def test_pfm_big_endian_payload():
    data = np.array([[1.5, -2.0]], dtype='>f4')
    payload = b"Pf\n2 1\n1.0\n" + data.tobytes()
    np.testing.assert_array_equal(ImageService.decode_pfm(payload), [[1.5, -2.0]])


@pytest.mark.parametrize('payload', [b"P6\n2 1\n-1.0\n", b"Pf\n2 2\n-1.0\n" + b"\0" * 8, b"Pf\n2 1\n0\n" + b"\0" * 8])
def test_malformed_pfm(payload):
    with pytest.raises(FileFormatError):
        ImageService.decode_pfm(payload)


def test_pfm_needs_two_dimensions():
    with pytest.raises(FileFormatError):
        ImageService.encode_pfm(np.zeros((2, 2, 2)))


def test_ppm_round_trip_at_byte_precision(tmp_path, rng):
    image = rng.uniform(0.0, 1.0, (3, 8, 12))
    path = ImageService.write_ppm(str(tmp_path / 'view.ppm'), image)
    loaded = ImageService.read_ppm(path)
    assert loaded.shape == (3, 8, 12)
    np.testing.assert_allclose(loaded, np.round(image * 255) / 255, atol=1e-12)


def test_missing_image(tmp_path):
    with pytest.raises(FileFormatError):
        ImageService.read_ppm(str(tmp_path / 'absent.ppm'))


def test_camera_text_round_trip(rng):
    angle = 0.3
    R = np.array([[np.cos(angle), 0, -np.sin(angle)], [0, 1, 0], [np.sin(angle), 0, np.cos(angle)]])
    K = np.array([[57.6, 0, 31.5], [0, 57.6, 31.5], [0, 0, 1]])
    camera = CameraView(K=K, R=R, t=rng.standard_normal(3), depth_range=(6.0, 14.0))
    parsed = CameraService.parse_camera(CameraService.format_camera(camera))
    np.testing.assert_array_equal(parsed.K, camera.K)
    np.testing.assert_array_equal(parsed.R, camera.R)
    np.testing.assert_array_equal(parsed.t, camera.t)
    assert parsed.depth_range == (6.0, 14.0)


def test_camera_depth_line_has_interval():
    camera = CameraView(K=np.eye(3), R=np.eye(3), t=np.zeros(3), depth_range=(2.0, 8.2))
    depth_line = CameraService.format_camera(camera).strip().splitlines()[-1]
    d_min, interval, d_max = (float(v) for v in depth_line.split())
    assert (d_min, d_max) == (2.0, 8.2)
    assert interval == pytest.approx(0.2)


def test_two_number_depth_line():
    camera = CameraService.parse_camera(CAMERA_TEXT)
    assert camera.depth_range == (6.0, 6.0 + 0.25 * 31)
    np.testing.assert_array_equal(camera.t, [0.5, 0.0, 0.0])
    assert camera.K[0, 2] == 40.0


@pytest.mark.parametrize('text', ['', 'extrinsic\n1 0 0\n', CAMERA_TEXT.replace('intrinsic', 'intrinsics')])
def test_malformed_camera(text):
    with pytest.raises(FileFormatError):
        CameraService.parse_camera(text)


def test_pairs_round_trip():
    pairs = {0: [(1, 0.9), (2, 0.5)], 1: [(0, 0.9)], 2: [(0, 0.5), (1, 0.1)]}
    parsed = CameraService.parse_pairs(CameraService.format_pairs(pairs))
    assert parsed == {0: [1, 2], 1: [0], 2: [0, 1]}


def test_truncated_pairs():
    with pytest.raises(FileFormatError):
        CameraService.parse_pairs("2\n0\n1 1 0.5\n1\n2 0 0.5\n")


def test_checkpoint_encoding(rng):
    state = {'a.weight': rng.standard_normal((2, 3)), 'b': rng.standard_normal(4).astype(np.float32)}
    decoded = CheckpointService.decode(CheckpointService.encode(state))
    assert set(decoded) == set(state)
    for name in state:
        assert decoded[name].dtype == state[name].dtype
        np.testing.assert_array_equal(decoded[name], state[name])


def test_checkpoint_bad_magic_and_truncation(rng):
    payload = CheckpointService.encode({'w': rng.standard_normal(8)})
    with pytest.raises(FileFormatError):
        CheckpointService.decode(b'NOTACKPT' + payload[8:])
    with pytest.raises(FileFormatError):
        CheckpointService.decode(payload[:-4])


def test_checkpoint_files(tmp_path, tiny_config, rng):
    path = str(tmp_path / 'model.ckpt')
    state = {'w': rng.standard_normal((2, 2))}
    CheckpointService.save(path, state, tiny_config)
    loaded, cfg = CheckpointService.load(path)
    np.testing.assert_array_equal(loaded['w'], state['w'])
    assert cfg == tiny_config


def test_checkpoint_needs_manifest(tmp_path, tiny_config):
    path = str(tmp_path / 'model.ckpt')
    CheckpointService.save(path, {'w': np.zeros(2)}, tiny_config)
    (tmp_path / 'model.ckpt.manifest').unlink()
    with pytest.raises(FileFormatError):
        CheckpointService.load(path)
