"""Checkpoint container.

A checkpoint is an ``.npz`` archive: one little-endian float64 array per
parameter name (the ``.npy`` header records shape and dtype), plus two
reserved entries holding the format version and a JSON metadata record.
"""

from __future__ import annotations

import json
import os
from typing import Mapping

import numpy as np

from .errors import CheckpointError

FORMAT_VERSION = 1
_VERSION_KEY = "__format_version__"
_META_KEY = "__metadata__"


def save_checkpoint(path, arrays: Mapping[str, np.ndarray], metadata: Mapping | None = None) -> None:
    payload = {name: np.array(arr, dtype="<f8") for name, arr in arrays.items()}
    for reserved in (_VERSION_KEY, _META_KEY):
        if reserved in payload:
            raise CheckpointError(f"parameter name {reserved!r} is reserved")
    payload[_VERSION_KEY] = np.array([FORMAT_VERSION], dtype="<i8")
    meta = json.dumps(dict(metadata or {}), sort_keys=True).encode("utf-8")
    payload[_META_KEY] = np.frombuffer(meta, dtype=np.uint8)
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "wb") as fh:
        np.savez(fh, **payload)
    os.replace(tmp, path)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    try:
        with np.load(path, allow_pickle=False) as archive:
            entries = {name: archive[name] for name in archive.files}
    except (OSError, ValueError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if _VERSION_KEY not in entries:
        raise CheckpointError(f"{path} is not a checkpoint (no format version)")
    version = int(entries.pop(_VERSION_KEY)[0])
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    meta = json.loads(entries.pop(_META_KEY, np.zeros(0, np.uint8)).tobytes().decode("utf-8") or "{}")
    return {name: arr.astype(np.float64) for name, arr in entries.items()}, meta
