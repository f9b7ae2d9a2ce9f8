"""
On-disk dataset layout.

    <root>/manifest.jsonl          one JSON object per item
    <root>/items/<id>.mel          COMM target mel (frames x n_mels)
    <root>/items/<id>.feat         COMF content features (frames x content_dim)
    <root>/items/<id>.prosody      COMF (frames x 3): f0, vuv, loudness

Manifest entries record the singer id, frame count and a SHA-256 of the
item's files so a dataset can be fingerprinted.
"""

import hashlib
import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import numpy as np

from src.errors import FormatError
from src.features.audio import MelSpec
from src.features.content import DatasetItem, FeatureSet
from src.storage.formats import FEATURE_MAGIC, MEL_MAGIC, atomic_write_bytes, encode_matrix, load_matrix

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"
ITEMS_DIR = "items"


def save_dataset(items: Sequence[DatasetItem], root: Union[str, Path], extra: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write items and the manifest under ``root``.

    Returns:
        Path of the manifest
    """
    root = Path(root)
    (root / ITEMS_DIR).mkdir(parents=True, exist_ok=True)
    lines = []
    for item in items:
        payloads = {
            "mel": encode_matrix(item.mel.values, MEL_MAGIC),
            "feat": encode_matrix(item.features.content, FEATURE_MAGIC),
            "prosody": encode_matrix(item.features.prosody(), FEATURE_MAGIC),
        }
        hasher = hashlib.sha256()
        entry: Dict[str, Any] = {
            "id": item.item_id,
            "singer_id": int(item.singer_id),
            "frames": int(item.mel.frames),
            "n_mels": int(item.mel.n_mels),
            "content_dim": int(item.features.content_dim),
        }
        for suffix, payload in payloads.items():
            rel = f"{ITEMS_DIR}/{item.item_id}.{suffix}"
            atomic_write_bytes(root / rel, payload)
            hasher.update(payload)
            entry[suffix] = rel
        entry["sha256"] = hasher.hexdigest()
        if extra:
            entry.update(extra)
        lines.append(json.dumps(entry, sort_keys=True))

    manifest = root / MANIFEST_NAME
    atomic_write_bytes(manifest, ("\n".join(lines) + "\n").encode("utf-8") if lines else b"")
    logger.info(f"Wrote {len(lines)} items to {root}")
    return manifest


def read_manifest(root: Union[str, Path]) -> List[Dict[str, Any]]:
    manifest = Path(root) / MANIFEST_NAME
    if not manifest.exists():
        raise FileNotFoundError(f"dataset manifest not found: {manifest}")
    entries = []
    with open(manifest, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            try:
                entries.append(json.loads(line))
            except json.JSONDecodeError as e:
                raise FormatError(f"{manifest.name}:{lineno}: invalid JSON ({e})") from e
    return entries


def manifest_digest(root: Union[str, Path]) -> str:
    """SHA-256 of the manifest file bytes."""
    return hashlib.sha256((Path(root) / MANIFEST_NAME).read_bytes()).hexdigest()


def load_dataset(root: Union[str, Path]) -> List[DatasetItem]:
    """
    Load every item listed in the manifest.

    Raises:
        FileNotFoundError: Missing manifest or item file
        FormatError: Malformed files or frame-count disagreement
    """
    root = Path(root)
    items = []
    for entry in read_manifest(root):
        mel = load_matrix(root / entry["mel"], magic=MEL_MAGIC).astype(np.float64)
        content = load_matrix(root / entry["feat"], magic=FEATURE_MAGIC).astype(np.float64)
        prosody = load_matrix(root / entry["prosody"], magic=FEATURE_MAGIC).astype(np.float64)
        if not (mel.shape[0] == content.shape[0] == prosody.shape[0] == entry["frames"]):
            raise FormatError(f"item {entry['id']}: stream frame counts disagree")
        items.append(
            DatasetItem(
                item_id=entry["id"],
                mel=MelSpec(values=mel),
                features=FeatureSet.from_prosody(content, prosody),
                singer_id=int(entry["singer_id"]),
            )
        )
    logger.info(f"Loaded {len(items)} items from {root}")
    return items
