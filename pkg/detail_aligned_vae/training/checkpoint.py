"""Checkpoint codec: a JSON manifest plus one blob of row-major float32 arrays.

A checkpoint is a directory::

    manifest.json       names, shapes and byte offsets of every array,
                        the blob's sha256 and free-form metadata
    arrays-<hash>.bin   little-endian float32 arrays in manifest order

The manifest is written last and atomically, so a crash mid-save leaves the
previous checkpoint readable. Saving what was loaded reproduces both files
byte for byte.
"""

import hashlib
import json
import logging
import os
from collections.abc import Mapping
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch import nn

from ..core.errors import CheckpointError, MissingArtifactError

logger = logging.getLogger(__name__)

FORMAT_NAME = "davae-checkpoint"
FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.json"
ARRAY_DTYPE = np.dtype("<f4")


@dataclass
class Checkpoint:
    arrays: dict[str, torch.Tensor]
    metadata: dict[str, Any] = field(default_factory=dict)

    def subset(self, prefix: str) -> dict[str, torch.Tensor]:
        """Arrays under ``prefix.`` with the prefix stripped."""
        start = len(prefix) + 1
        return {
            name[start:]: value
            for name, value in self.arrays.items()
            if name.startswith(prefix + ".")
        }


def _to_bytes(name: str, tensor: torch.Tensor) -> bytes:
    if not torch.is_floating_point(tensor):
        raise CheckpointError(
            f"Array '{name}' has dtype {tensor.dtype}; only float arrays are stored"
        )
    array = tensor.detach().cpu().to(torch.float32).contiguous().numpy()
    return array.astype(ARRAY_DTYPE, copy=False).tobytes(order="C")


def _write_atomic(path: Path, payload: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as handle:
        handle.write(payload)
        handle.flush()
        os.fsync(handle.fileno())
    os.replace(tmp, path)


def _manifest_bytes(manifest: Mapping[str, Any]) -> bytes:
    return (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8")


def save_checkpoint(
    path: str | Path,
    arrays: Mapping[str, torch.Tensor],
    metadata: Mapping[str, Any] | None = None,
) -> str:
    """Write ``arrays`` and ``metadata`` to the checkpoint directory ``path``.

    Returns:
        The sha256 of the array blob
    """
    directory = Path(path)
    directory.mkdir(parents=True, exist_ok=True)

    entries = []
    chunks = []
    offset = 0
    for name, tensor in arrays.items():
        payload = _to_bytes(name, tensor)
        entries.append(
            {
                "name": name,
                "dtype": "float32",
                "shape": list(tensor.shape),
                "offset": offset,
                "nbytes": len(payload),
            }
        )
        chunks.append(payload)
        offset += len(payload)
    blob = b"".join(chunks)
    digest = hashlib.sha256(blob).hexdigest()
    blob_name = f"arrays-{digest[:16]}.bin"

    previous = None
    if (directory / MANIFEST_NAME).exists():
        previous = _read_manifest(directory)
    _write_atomic(directory / blob_name, blob)
    manifest = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "blob": blob_name,
        "sha256": digest,
        "arrays": entries,
        "metadata": dict(metadata or {}),
    }
    _write_atomic(directory / MANIFEST_NAME, _manifest_bytes(manifest))
    if previous is not None and previous.get("blob") not in (None, blob_name):
        stale = directory / previous["blob"]
        if stale.exists():
            stale.unlink()
    logger.debug("Saved %d arrays to %s (sha256 %s)", len(entries), directory, digest)
    return digest


def _read_manifest(directory: Path) -> dict[str, Any]:
    manifest_path = directory / MANIFEST_NAME
    try:
        manifest: dict[str, Any] = json.loads(manifest_path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as e:
        raise CheckpointError(f"Corrupt manifest {manifest_path}: {e}") from e
    if manifest.get("format") != FORMAT_NAME:
        raise CheckpointError(f"{manifest_path} is not a {FORMAT_NAME} manifest")
    return manifest


def load_checkpoint(path: str | Path) -> Checkpoint:
    """Read a checkpoint and verify its blob against the recorded hash.

    Raises:
        MissingArtifactError: If there is no manifest at ``path``
        CheckpointError: If the blob is missing, truncated or altered
    """
    directory = Path(path)
    if not (directory / MANIFEST_NAME).exists():
        raise MissingArtifactError("checkpoint", str(directory))
    manifest = _read_manifest(directory)

    blob_path = directory / manifest["blob"]
    if not blob_path.exists():
        raise CheckpointError(f"Checkpoint blob {blob_path} is missing")
    blob = blob_path.read_bytes()
    actual = hashlib.sha256(blob).hexdigest()
    if actual != manifest["sha256"]:
        raise CheckpointError(
            f"Checkpoint {directory} is corrupt: manifest records sha256 "
            f"{manifest['sha256']}, blob hashes to {actual}"
        )

    arrays: dict[str, torch.Tensor] = {}
    for entry in manifest["arrays"]:
        count = entry["nbytes"] // ARRAY_DTYPE.itemsize
        values = np.frombuffer(
            blob, dtype=ARRAY_DTYPE, count=count, offset=entry["offset"]
        )
        arrays[entry["name"]] = torch.from_numpy(
            values.astype(np.float32).reshape(entry["shape"])
        )
    return Checkpoint(arrays, manifest.get("metadata", {}))


def checkpoint_hash(path: str | Path) -> str:
    """sha256 of the manifest, which pins the blob hash and the metadata."""
    manifest_path = Path(path) / MANIFEST_NAME
    if not manifest_path.exists():
        raise MissingArtifactError("checkpoint", str(path))
    return hashlib.sha256(manifest_path.read_bytes()).hexdigest()


def state_hash(state: nn.Module | Mapping[str, torch.Tensor]) -> str:
    """Content hash of a module's state (or of named arrays), order-independent."""
    arrays = state.state_dict() if isinstance(state, nn.Module) else state
    digest = hashlib.sha256()
    for name in sorted(arrays):
        tensor = arrays[name]
        digest.update(name.encode("utf-8"))
        digest.update(str(tuple(tensor.shape)).encode("utf-8"))
        digest.update(_to_bytes(name, tensor))
    return digest.hexdigest()


def module_arrays(prefix: str, module: nn.Module) -> dict[str, torch.Tensor]:
    return {f"{prefix}.{name}": value for name, value in module.state_dict().items()}


def load_module(module: nn.Module, checkpoint: Checkpoint, prefix: str) -> None:
    """Load ``prefix.*`` arrays into ``module``; keys must match exactly."""
    state = checkpoint.subset(prefix)
    try:
        module.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise CheckpointError(f"Cannot restore '{prefix}' from checkpoint: {e}") from e


def optimizer_arrays(
    prefix: str, optimizer: torch.optim.Optimizer
) -> tuple[dict[str, torch.Tensor], list[dict[str, Any]]]:
    """Flatten optimizer state into arrays plus JSON-able param groups."""
    state = optimizer.state_dict()
    arrays = {}
    for param_id, values in state["state"].items():
        for key, value in values.items():
            if not isinstance(value, torch.Tensor):
                value = torch.tensor(float(value))
            arrays[f"{prefix}.{param_id}.{key}"] = value
    groups = [
        {
            key: list(value) if isinstance(value, tuple) else value
            for key, value in group.items()
        }
        for group in state["param_groups"]
    ]
    return arrays, groups


def restore_optimizer(
    optimizer: torch.optim.Optimizer,
    checkpoint: Checkpoint,
    prefix: str,
    param_groups: list[dict[str, Any]],
) -> None:
    per_param: dict[int, dict[str, torch.Tensor]] = {}
    for name, value in checkpoint.subset(prefix).items():
        param_id, key = name.split(".", 1)
        per_param.setdefault(int(param_id), {})[key] = value
    groups = [
        {key: tuple(value) if key == "betas" else value for key, value in group.items()}
        for group in param_groups
    ]
    try:
        optimizer.load_state_dict({"state": per_param, "param_groups": groups})
    except (ValueError, KeyError) as e:
        raise CheckpointError(f"Cannot restore optimizer '{prefix}': {e}") from e
