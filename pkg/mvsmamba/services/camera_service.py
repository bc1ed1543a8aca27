"""
Camera Service Layer
MVSNet-style camera text files and view-pair lists
"""

import logging
from typing import Dict, List, Tuple

import numpy as np

from mvsmamba.config.constants import NUM_HYPOTHESES
from mvsmamba.models.mvs import CameraView
from mvsmamba.utils.exceptions import FileFormatError
from mvsmamba.utils.file_io import atomic_write_text

logger = logging.getLogger(__name__)


def _fmt(value: float) -> str:
    return '%.17g' % value


class CameraService:
    """Service for camera and pair-list files"""

    @staticmethod
    def format_camera(camera: CameraView, num_intervals: int = NUM_HYPOTHESES[0] - 1) -> str:
        """
        Render a camera as text

        Layout: "extrinsic", four rows of the 4x4 world-to-camera matrix, a blank line,
        "intrinsic", three rows of K, a blank line, then "d_min d_interval d_max".
        Numbers carry 17 significant digits so they read back exactly.
        """
        d_min, d_max = camera.depth_range
        lines = ['extrinsic']
        lines += [' '.join(_fmt(v) for v in row) for row in camera.extrinsic]
        lines += ['', 'intrinsic']
        lines += [' '.join(_fmt(v) for v in row) for row in camera.K]
        lines += ['', ' '.join(_fmt(v) for v in (d_min, (d_max - d_min) / num_intervals, d_max))]
        return '\n'.join(lines) + '\n'

    @staticmethod
    def parse_camera(text: str, num_intervals: int = NUM_HYPOTHESES[0] - 1, path: str = None) -> CameraView:
        """
        Parse camera text; a two-number depth line is read as "d_min d_interval"

        Raises:
            FileFormatError: If a section is missing or malformed
        """
        lines = [line.strip() for line in text.splitlines() if line.strip()]
        try:
            e_at = lines.index('extrinsic')
            k_at = lines.index('intrinsic')
            extrinsic = np.array([[float(v) for v in lines[e_at + 1 + r].split()] for r in range(4)])
            K = np.array([[float(v) for v in lines[k_at + 1 + r].split()] for r in range(3)])
            depth = [float(v) for v in lines[k_at + 4].split()]
        except (ValueError, IndexError) as e:
            raise FileFormatError("Malformed camera file", details={"path": path, "error": str(e)})

        if extrinsic.shape != (4, 4) or K.shape != (3, 3) or len(depth) < 2:
            raise FileFormatError(
                "Malformed camera file",
                details={"path": path, "extrinsic": list(extrinsic.shape), "intrinsic": list(K.shape)}
            )
        d_min = depth[0]
        d_max = depth[2] if len(depth) >= 3 else depth[0] + depth[1] * num_intervals
        return CameraView(K=K, R=extrinsic[:3, :3], t=extrinsic[:3, 3], depth_range=(d_min, d_max))

    @staticmethod
    def write_camera(path: str, camera: CameraView) -> str:
        return atomic_write_text(path, CameraService.format_camera(camera))

    @staticmethod
    def read_camera(path: str) -> CameraView:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return CameraService.parse_camera(f.read(), path=path)
        except FileNotFoundError:
            raise FileFormatError("Camera file not found", details={"path": path})

    @staticmethod
    def format_pairs(pairs: Dict[int, List[Tuple[int, float]]]) -> str:
        """
        Pair list: view count, then per reference its index and a line
        "n src_0 score_0 src_1 score_1 ..."
        """
        lines = [str(len(pairs))]
        for ref in sorted(pairs):
            lines.append(str(ref))
            entries = pairs[ref]
            lines.append(' '.join([str(len(entries))] + [f"{src} {_fmt(score)}" for src, score in entries]))
        return '\n'.join(lines) + '\n'

    @staticmethod
    def parse_pairs(text: str, path: str = None) -> Dict[int, List[int]]:
        """
        Returns:
            Reference index -> ordered source indices

        Raises:
            FileFormatError: If counts and entries disagree
        """
        tokens = text.split()
        try:
            count = int(tokens[0])
            pos = 1
            pairs = {}
            for _ in range(count):
                ref = int(tokens[pos])
                n = int(tokens[pos + 1])
                srcs = [int(tokens[pos + 2 + 2 * i]) for i in range(n)]
                pairs[ref] = srcs
                pos += 2 + 2 * n
        except (ValueError, IndexError) as e:
            raise FileFormatError("Malformed pair file", details={"path": path, "error": str(e)})
        return pairs

    @staticmethod
    def write_pairs(path: str, pairs: Dict[int, List[Tuple[int, float]]]) -> str:
        return atomic_write_text(path, CameraService.format_pairs(pairs))

    @staticmethod
    def read_pairs(path: str) -> Dict[int, List[int]]:
        try:
            with open(path, 'r', encoding='utf-8') as f:
                return CameraService.parse_pairs(f.read(), path=path)
        except FileNotFoundError:
            raise FileFormatError("Pair file not found", details={"path": path})
