"""
Image Service Layer
Reads and writes the PPM/PGM images and PFM float maps a scene is stored in
"""

import logging
import re
from io import BytesIO
from typing import Optional

import numpy as np
from PIL import Image

from mvsmamba.utils.exceptions import FileFormatError
from mvsmamba.utils.file_io import atomic_write_bytes

logger = logging.getLogger(__name__)

_PFM_HEADER = re.compile(rb'^(Pf|PF)\n(\d+) (\d+)\n(-?[0-9.eE+-]+)\n')


class ImageService:
    """Service for image and float-map codecs"""

    @staticmethod
    def to_uint8(image: np.ndarray) -> np.ndarray:
        """
        Convert a float image in [0, 1] to bytes

        Args:
            image: [3, H, W] or [H, W] floats

        Returns:
            [H, W, 3] or [H, W] uint8
        """
        arr = np.asarray(image, dtype=np.float64)
        if arr.ndim == 3:
            arr = np.transpose(arr, (1, 2, 0))
        return np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)

    @staticmethod
    def encode_netpbm(image: np.ndarray) -> bytes:
        """
        Encode a uint8 image as binary PPM (P6, [H, W, 3]) or PGM (P5, [H, W])

        Raises:
            FileFormatError: If the array has an unsupported layout
        """
        arr = np.ascontiguousarray(image)
        if arr.dtype != np.uint8 or arr.ndim not in (2, 3) or (arr.ndim == 3 and arr.shape[2] != 3):
            raise FileFormatError(
                "PPM/PGM encoding needs uint8 [H, W] or [H, W, 3]",
                details={"dtype": str(arr.dtype), "shape": list(arr.shape)}
            )
        buffered = BytesIO()
        Image.fromarray(arr).save(buffered, format='PPM')
        return buffered.getvalue()

    @staticmethod
    def write_ppm(path: str, image: np.ndarray) -> str:
        """Write a float [3, H, W] image in [0, 1] (or uint8 [H, W, 3]) as P6"""
        arr = image if image.dtype == np.uint8 else ImageService.to_uint8(image)
        return atomic_write_bytes(path, ImageService.encode_netpbm(arr))

    @staticmethod
    def write_pgm(path: str, image: np.ndarray) -> str:
        arr = image if image.dtype == np.uint8 else ImageService.to_uint8(image)
        return atomic_write_bytes(path, ImageService.encode_netpbm(arr))

    @staticmethod
    def read_ppm(path: str, dtype=np.float64) -> np.ndarray:
        """
        Read a PPM as a float [3, H, W] image in [0, 1]

        Raises:
            FileFormatError: If the file cannot be decoded
        """
        try:
            with Image.open(path) as image:
                arr = np.asarray(image.convert('RGB'), dtype=np.uint8)
        except FileNotFoundError:
            raise FileFormatError("Image file not found", details={"path": path})
        except Exception as e:
            logger.error(f"Failed to read image {path}: {e}", exc_info=True)
            raise FileFormatError("Failed to read image", details={"path": path, "error": str(e)})
        return (np.transpose(arr, (2, 0, 1)).astype(dtype) / 255.0).astype(dtype)

    @staticmethod
    def encode_pfm(data: np.ndarray) -> bytes:
        """Single-channel PFM: little-endian float32 rows stored bottom to top"""
        arr = np.asarray(data)
        if arr.ndim != 2:
            raise FileFormatError("PFM maps must be two-dimensional", details={"shape": list(arr.shape)})
        height, width = arr.shape
        header = f"Pf\n{width} {height}\n-1.0\n".encode('ascii')
        body = np.ascontiguousarray(np.flipud(arr).astype('<f4')).tobytes()
        return header + body

    @staticmethod
    def decode_pfm(payload: bytes, path: Optional[str] = None) -> np.ndarray:
        """
        Decode a PFM payload into a top-to-bottom float32 array

        Raises:
            FileFormatError: On a malformed header or truncated data
        """
        match = _PFM_HEADER.match(payload)
        if match is None:
            raise FileFormatError("Malformed PFM header", details={"path": path})
        identifier, width, height, scale = match.groups()
        width, height, scale = int(width), int(height), float(scale)
        if scale == 0:
            raise FileFormatError("PFM scale must be non-zero", details={"path": path})
        channels = 3 if identifier == b'PF' else 1
        endian = '<' if scale < 0 else '>'

        body = payload[match.end():]
        count = width * height * channels
        if len(body) < 4 * count:
            raise FileFormatError(
                "PFM data is truncated",
                details={"path": path, "expected_bytes": 4 * count, "got": len(body)}
            )
        data = np.frombuffer(body, dtype=f'{endian}f4', count=count)
        shape = (height, width, channels) if channels == 3 else (height, width)
        return np.flipud(data.reshape(shape)).astype(np.float32)

    @staticmethod
    def write_pfm(path: str, data: np.ndarray) -> str:
        return atomic_write_bytes(path, ImageService.encode_pfm(data))

    @staticmethod
    def read_pfm(path: str) -> np.ndarray:
        try:
            with open(path, 'rb') as f:
                payload = f.read()
        except FileNotFoundError:
            raise FileFormatError("PFM file not found", details={"path": path})
        return ImageService.decode_pfm(payload, path)
