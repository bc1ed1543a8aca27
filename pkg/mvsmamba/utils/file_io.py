"""
File helpers
Atomic writes and CSV logs
"""

import csv
import io
import logging
import os
import tempfile
from typing import Iterable, Sequence

logger = logging.getLogger(__name__)


def atomic_write_bytes(path: str, payload: bytes) -> str:
    """Write to a temp file in the target directory, then rename over the target"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix='.tmp_', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(payload)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.debug(f"Wrote {len(payload)} bytes to {path}")
    return path


def atomic_write_text(path: str, text: str) -> str:
    return atomic_write_bytes(path, text.encode('utf-8'))


def csv_text(header: Sequence[str], rows: Iterable[Sequence]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator='\n')
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    return buffer.getvalue()


def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    return atomic_write_text(path, csv_text(header, rows))


def read_csv(path: str):
    with open(path, 'r', encoding='utf-8', newline='') as f:
        return list(csv.DictReader(f))
