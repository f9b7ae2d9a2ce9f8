"""
Checkpoint files.

Layout (little-endian):

    magic     4 bytes  b"COMC"
    version   u32      1
    meta_len  u64
    meta      meta_len bytes of UTF-8 JSON
    blobs     raw tensor bytes, located by the meta "tensors" index

The JSON meta carries the role tag, step counter, config snapshot, schedule,
extras (normalization statistics, sigma_data, ...), RNG state and, for each
tensor, its group, path, shape, dtype and byte offset. Tensors are stored at
their in-memory precision, so a save/load round trip is bit-exact.
"""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np

from src.errors import ConfigMismatchError, FormatError
from src.models.params import ParamSet
from src.numcore.tensor import Tensor, get_dtype
from src.storage.formats import atomic_write_bytes

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"COMC"
CHECKPOINT_VERSION = 1
PREAMBLE_DTYPE = np.dtype([("magic", "S4"), ("version", "<u4"), ("meta_len", "<u8")])

ROLES = ("teacher", "student", "ema")


@dataclass
class Checkpoint:
    """
    In-memory checkpoint.

    ``groups`` holds named parameter sets ("net" and "encoder" for a teacher;
    "theta", "theta_minus" and "encoder" for a student). ``arrays`` holds
    auxiliary named arrays such as optimizer moments.
    """

    role: str
    step: int = 0
    groups: Dict[str, ParamSet] = field(default_factory=dict)
    config: Dict[str, Any] = field(default_factory=dict)
    schedule: Dict[str, Any] = field(default_factory=dict)
    extras: Dict[str, Any] = field(default_factory=dict)
    rng_state: Optional[Dict[str, Any]] = None
    arrays: Dict[str, Dict[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if self.role not in ROLES:
            raise FormatError(f"unknown checkpoint role {self.role!r}; expected one of {ROLES}")
        if self.step < 0:
            raise FormatError(f"step must be >= 0, got {self.step}")

    def group(self, name: str) -> ParamSet:
        if name not in self.groups:
            raise ConfigMismatchError(f"{self.role} checkpoint has no parameter group {name!r}")
        return self.groups[name]

    def digest(self, name: str) -> str:
        return params_digest(self.group(name))


def params_digest(params: ParamSet) -> str:
    """SHA-256 of a parameter set (paths, shapes and raw bytes)."""
    return params.digest()


def _le(array: np.ndarray) -> np.ndarray:
    return np.ascontiguousarray(array, dtype=array.dtype.newbyteorder("<"))


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    index: List[Dict[str, Any]] = []
    blobs: List[bytes] = []
    offset = 0

    def _add(kind: str, group: str, name: str, array: np.ndarray) -> None:
        nonlocal offset
        data = _le(np.asarray(array))
        raw = data.tobytes()
        index.append({
            "kind": kind,
            "group": group,
            "name": name,
            "shape": list(data.shape),
            "dtype": data.dtype.str,
            "offset": offset,
            "nbytes": len(raw),
        })
        blobs.append(raw)
        offset += len(raw)

    for group, params in ckpt.groups.items():
        for path, tensor in params.items():
            _add("param", group, path, tensor.data)
    for group, arrays in ckpt.arrays.items():
        for name, array in arrays.items():
            _add("array", group, name, array)

    meta = {
        "role": ckpt.role,
        "step": int(ckpt.step),
        "config": ckpt.config,
        "schedule": ckpt.schedule,
        "extras": ckpt.extras,
        "rng_state": ckpt.rng_state,
        "tensors": index,
    }
    meta_bytes = json.dumps(meta, sort_keys=True).encode("utf-8")
    preamble = np.zeros((), dtype=PREAMBLE_DTYPE)
    preamble["magic"] = CHECKPOINT_MAGIC
    preamble["version"] = CHECKPOINT_VERSION
    preamble["meta_len"] = len(meta_bytes)
    return preamble.tobytes() + meta_bytes + b"".join(blobs)


def decode_checkpoint(payload: bytes, name: str = "<bytes>", requires_grad: bool = False) -> Checkpoint:
    if len(payload) < PREAMBLE_DTYPE.itemsize:
        raise FormatError(f"{name}: truncated checkpoint header")
    preamble = np.frombuffer(payload, dtype=PREAMBLE_DTYPE, count=1)[0]
    if bytes(preamble["magic"]) != CHECKPOINT_MAGIC:
        raise FormatError(f"{name}: bad magic {bytes(preamble['magic'])!r}, expected COMC")
    if int(preamble["version"]) != CHECKPOINT_VERSION:
        raise FormatError(f"{name}: unsupported checkpoint version {int(preamble['version'])}")
    start = PREAMBLE_DTYPE.itemsize
    meta_end = start + int(preamble["meta_len"])
    if meta_end > len(payload):
        raise FormatError(f"{name}: truncated checkpoint metadata")
    try:
        meta = json.loads(payload[start:meta_end].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{name}: corrupt checkpoint metadata: {e}") from e

    body = memoryview(payload)[meta_end:]
    groups: Dict[str, ParamSet] = {}
    arrays: Dict[str, Dict[str, np.ndarray]] = {}
    for entry in meta["tensors"]:
        end = entry["offset"] + entry["nbytes"]
        if end > len(body):
            raise FormatError(f"{name}: tensor {entry['group']}/{entry['name']} extends past end of file")
        array = np.frombuffer(body[entry["offset"]:end], dtype=np.dtype(entry["dtype"]))
        array = array.reshape(entry["shape"]).astype(np.dtype(entry["dtype"]).newbyteorder("="))
        if entry["kind"] == "param":
            tensor = Tensor(array, requires_grad=requires_grad)
            if tensor.data.dtype != array.dtype:
                logger.warning(f"{name}: converting {entry['name']} from {array.dtype} to {get_dtype()}")
            groups.setdefault(entry["group"], ParamSet())[entry["name"]] = tensor
        else:
            arrays.setdefault(entry["group"], {})[entry["name"]] = array

    return Checkpoint(
        role=meta["role"],
        step=int(meta["step"]),
        groups=groups,
        config=meta.get("config", {}),
        schedule=meta.get("schedule", {}),
        extras=meta.get("extras", {}),
        rng_state=meta.get("rng_state"),
        arrays=arrays,
    )


def save_checkpoint(path: Union[str, Path], ckpt: Checkpoint) -> Path:
    """Atomically write ``ckpt`` to ``path``."""
    path = Path(path)
    atomic_write_bytes(path, encode_checkpoint(ckpt))
    logger.debug(f"Saved {ckpt.role} checkpoint step={ckpt.step} to {path}")
    return path


def load_checkpoint(path: Union[str, Path], requires_grad: bool = False) -> Checkpoint:
    """
    Read a checkpoint.

    Raises:
        FileNotFoundError: If the file does not exist
        FormatError: Bad magic, version or truncated content
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    return decode_checkpoint(path.read_bytes(), name=path.name, requires_grad=requires_grad)


def require_matching_config(ckpt: Checkpoint, key: str, expected: Dict[str, Any]) -> None:
    """Raise ConfigMismatchError if the snapshot section ``key`` differs."""
    stored = ckpt.config.get(key)
    if stored is None:
        raise ConfigMismatchError(f"checkpoint has no {key!r} config snapshot")
    diffs = {k: (stored.get(k), v) for k, v in expected.items() if stored.get(k) != v}
    if diffs:
        details = ", ".join(f"{k}: checkpoint={a!r} config={b!r}" for k, (a, b) in sorted(diffs.items()))
        raise ConfigMismatchError(f"{key} config mismatch ({details})")
