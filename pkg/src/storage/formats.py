"""
Binary matrix files.

Layout (all little-endian):

    magic    4 bytes   b"COMF" (features) or b"COMM" (mels)
    version  u32       1
    frames   u32
    dim      u32
    data     frames * dim float32, row-major
"""

import logging
import os
from pathlib import Path
from typing import Optional, Union

import numpy as np

from src.errors import FormatError

logger = logging.getLogger(__name__)

FEATURE_MAGIC = b"COMF"
MEL_MAGIC = b"COMM"
FORMAT_VERSION = 1

HEADER_DTYPE = np.dtype([("magic", "S4"), ("version", "<u4"), ("frames", "<u4"), ("dim", "<u4")])
DATA_DTYPE = np.dtype("<f4")


def atomic_write_bytes(path: Union[str, Path], payload: bytes) -> None:
    """Write via a temporary file and rename, so readers never see partial files."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(payload)
    os.replace(tmp, path)


def encode_matrix(matrix: np.ndarray, magic: bytes = FEATURE_MAGIC) -> bytes:
    matrix = np.asarray(matrix)
    if matrix.ndim != 2:
        raise FormatError(f"expected a 2-d matrix, got shape {list(matrix.shape)}")
    if not np.all(np.isfinite(matrix)):
        raise FormatError("refusing to write non-finite values")
    header = np.zeros((), dtype=HEADER_DTYPE)
    header["magic"] = magic
    header["version"] = FORMAT_VERSION
    header["frames"] = matrix.shape[0]
    header["dim"] = matrix.shape[1]
    return header.tobytes() + np.ascontiguousarray(matrix, dtype=DATA_DTYPE).tobytes()


def decode_matrix(payload: bytes, magic: Optional[bytes] = None, name: str = "<bytes>") -> np.ndarray:
    if len(payload) < HEADER_DTYPE.itemsize:
        raise FormatError(f"{name}: truncated header ({len(payload)} bytes)")
    header = np.frombuffer(payload, dtype=HEADER_DTYPE, count=1)[0]
    found = bytes(header["magic"])
    if found not in (FEATURE_MAGIC, MEL_MAGIC) or (magic is not None and found != magic):
        expected = magic.decode() if magic else "COMF/COMM"
        raise FormatError(f"{name}: bad magic {found!r}, expected {expected}")
    if int(header["version"]) != FORMAT_VERSION:
        raise FormatError(f"{name}: unsupported version {int(header['version'])}")
    frames, dim = int(header["frames"]), int(header["dim"])
    expected_size = HEADER_DTYPE.itemsize + frames * dim * DATA_DTYPE.itemsize
    if len(payload) != expected_size:
        raise FormatError(f"{name}: expected {expected_size} bytes for {frames}x{dim}, got {len(payload)}")
    data = np.frombuffer(payload, dtype=DATA_DTYPE, offset=HEADER_DTYPE.itemsize)
    return data.reshape(frames, dim).astype(np.float32)


def save_matrix(path: Union[str, Path], matrix: np.ndarray, magic: bytes = FEATURE_MAGIC) -> None:
    """Write a (frames, dim) matrix; values are stored as float32."""
    atomic_write_bytes(path, encode_matrix(matrix, magic))


def load_matrix(path: Union[str, Path], magic: Optional[bytes] = None) -> np.ndarray:
    """
    Read a matrix file as float32.

    Raises:
        FileNotFoundError: If the file does not exist
        FormatError: Bad magic, version or size
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"matrix file not found: {path}")
    return decode_matrix(path.read_bytes(), magic=magic, name=path.name)
