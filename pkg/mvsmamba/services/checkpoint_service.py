"""
Checkpoint Service Layer
Binary parameter container plus a text manifest of the run configuration
"""

import logging
import os
import struct
from typing import Dict, Tuple

import numpy as np

from mvsmamba.config.run_config import RunConfig, from_mapping, parse_text
from mvsmamba.utils.exceptions import FileFormatError
from mvsmamba.utils.file_io import atomic_write_bytes, atomic_write_text

logger = logging.getLogger(__name__)

MAGIC = b'MVSMCKPT'
VERSION = 1

# dtype tag -> little-endian numpy dtype
DTYPE_TAGS = {0: '<f8', 1: '<f4'}
TAG_OF = {np.dtype('float64'): 0, np.dtype('float32'): 1}


class CheckpointService:
    """
    Service for model checkpoints

    Container layout (little-endian):
        magic "MVSMCKPT", u32 version, u32 tensor count, then per tensor:
        u16 name length, UTF-8 name, u8 dtype tag, u8 ndim, u32 per dim, raw data
    """

    @staticmethod
    def manifest_path(path: str) -> str:
        return f"{path}.manifest"

    @staticmethod
    def encode(state: Dict[str, np.ndarray]) -> bytes:
        chunks = [MAGIC, struct.pack('<II', VERSION, len(state))]
        for name in sorted(state):
            arr = np.asarray(state[name])
            if arr.dtype not in TAG_OF:
                raise FileFormatError("Unsupported parameter dtype", details={"name": name, "dtype": str(arr.dtype)})
            tag = TAG_OF[arr.dtype]
            encoded = name.encode('utf-8')
            chunks.append(struct.pack('<H', len(encoded)))
            chunks.append(encoded)
            chunks.append(struct.pack('<BB', tag, arr.ndim))
            chunks.append(struct.pack(f'<{arr.ndim}I', *arr.shape))
            chunks.append(np.ascontiguousarray(arr, dtype=DTYPE_TAGS[tag]).tobytes())
        return b''.join(chunks)

    @staticmethod
    def decode(payload: bytes, path: str = None) -> Dict[str, np.ndarray]:
        """
        Raises:
            FileFormatError: On a bad magic, version or truncated payload
        """
        if not payload.startswith(MAGIC):
            raise FileFormatError("Not a checkpoint file", details={"path": path})
        try:
            pos = len(MAGIC)
            version, count = struct.unpack_from('<II', payload, pos)
            pos += 8
            if version != VERSION:
                raise FileFormatError("Unsupported checkpoint version", details={"path": path, "version": version})

            state = {}
            for _ in range(count):
                (name_len,) = struct.unpack_from('<H', payload, pos)
                pos += 2
                name = payload[pos:pos + name_len].decode('utf-8')
                pos += name_len
                tag, ndim = struct.unpack_from('<BB', payload, pos)
                pos += 2
                shape = struct.unpack_from(f'<{ndim}I', payload, pos)
                pos += 4 * ndim
                dtype = np.dtype(DTYPE_TAGS[tag])
                size = int(np.prod(shape)) * dtype.itemsize
                if pos + size > len(payload):
                    raise FileFormatError("Checkpoint is truncated", details={"path": path, "tensor": name})
                state[name] = np.frombuffer(payload, dtype=dtype, count=int(np.prod(shape)),
                                            offset=pos).reshape(shape).astype(dtype.newbyteorder('='))
                pos += size
        except (struct.error, KeyError, UnicodeDecodeError) as e:
            raise FileFormatError("Malformed checkpoint", details={"path": path, "error": str(e)})
        return state

    @staticmethod
    def save(path: str, state: Dict[str, np.ndarray], cfg: RunConfig) -> str:
        atomic_write_bytes(path, CheckpointService.encode(state))
        atomic_write_text(CheckpointService.manifest_path(path), cfg.to_text())
        logger.info(f"Checkpoint saved: {path} ({len(state)} tensors)")
        return path

    @staticmethod
    def load(path: str) -> Tuple[Dict[str, np.ndarray], RunConfig]:
        """
        Returns:
            (parameter state, run config recorded in the manifest)

        Raises:
            FileFormatError: If the checkpoint or its manifest is missing or malformed
        """
        manifest = CheckpointService.manifest_path(path)
        if not os.path.isfile(path) or not os.path.isfile(manifest):
            raise FileFormatError("Checkpoint or manifest not found", details={"path": path})
        with open(path, 'rb') as f:
            state = CheckpointService.decode(f.read(), path)
        with open(manifest, 'r', encoding='utf-8') as f:
            cfg = from_mapping(parse_text(f.read()))
        logger.info(f"Checkpoint loaded: {path} ({len(state)} tensors)")
        return state, cfg
