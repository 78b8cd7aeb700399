"""Binary model checkpoints.

Layout: magic `LSAC` | u32 LE format version | u32 LE header length |
JSON header (architecture, seed, epoch, class names, tensor manifest) |
float32 LE tensor payload in sorted-name order | SHA-256 over everything
before the digest.  Parameters and running statistics share one sorted
namespace so the payload order is unambiguous.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..architectures import ArchitectureSpec, spec_from_dict, spec_to_dict
from ..model import SequentialModel

MAGIC = b"LSAC"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class VersionError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


@dataclass
class Checkpoint:
    spec: ArchitectureSpec
    params: dict  # name -> float32 ndarray
    buffers: dict  # name -> float32 ndarray (running statistics)
    seed: int
    epoch: int
    class_names: tuple
    version: int = FORMAT_VERSION

    def __post_init__(self):
        self.class_names = tuple(self.class_names)


def _tensor_manifest(checkpoint: Checkpoint):
    entries = []
    for kind, table in (("param", checkpoint.params), ("buffer", checkpoint.buffers)):
        for name, arr in table.items():
            entries.append({"name": name, "kind": kind, "shape": list(arr.shape)})
    entries.sort(key=lambda e: e["name"])
    return entries


def save_checkpoint(checkpoint: Checkpoint, path) -> None:
    manifest = _tensor_manifest(checkpoint)
    header = json.dumps({
        "arch": spec_to_dict(checkpoint.spec),
        "seed": checkpoint.seed,
        "epoch": checkpoint.epoch,
        "class_names": list(checkpoint.class_names),
        "tensors": manifest,
    }, sort_keys=True).encode("utf-8")

    payload = bytearray()
    merged = {**checkpoint.params, **checkpoint.buffers}
    for entry in manifest:
        arr = np.ascontiguousarray(merged[entry["name"]], dtype="<f4")
        payload += arr.tobytes()

    body = MAGIC + struct.pack("<II", checkpoint.version, len(header)) + header + bytes(payload)
    digest = hashlib.sha256(body).digest()
    Path(path).write_bytes(body + digest)


def load_checkpoint(path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < len(MAGIC) + 8 + 32:
        raise CheckpointError(f"{path}: file too short to be a checkpoint")
    if blob[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {blob[:4]!r}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch, file is corrupt")
    version, header_len = struct.unpack("<II", body[4:12])
    if version != FORMAT_VERSION:
        raise VersionError(
            f"{path}: format version {version}, this build reads version {FORMAT_VERSION}"
        )
    header_end = 12 + header_len
    try:
        header = json.loads(body[12:header_end].decode("utf-8"))
        spec = spec_from_dict(header["arch"])
        manifest = header["tensors"]
        seed = header["seed"]
        epoch = header["epoch"]
        class_names = tuple(header["class_names"])
    except (json.JSONDecodeError, KeyError, TypeError) as exc:
        raise CheckpointError(f"{path}: malformed header: {exc}") from exc

    params = {}
    buffers = {}
    offset = header_end
    for entry in manifest:
        count = int(np.prod(entry["shape"])) if entry["shape"] else 1
        nbytes = count * 4
        chunk = body[offset:offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"{path}: truncated payload at tensor {entry['name']}")
        arr = np.frombuffer(chunk, dtype="<f4").reshape(entry["shape"]).copy()
        (params if entry["kind"] == "param" else buffers)[entry["name"]] = arr
        offset += nbytes
    if offset != len(body):
        raise CheckpointError(f"{path}: {len(body) - offset} unexpected trailing bytes")
    return Checkpoint(spec, params, buffers, seed, epoch, class_names, version)


def checkpoint_from_model(model: SequentialModel, epoch: int, class_names) -> Checkpoint:
    params, buffers = model.state_arrays()
    return Checkpoint(model.spec, params, buffers, model.seed, epoch, tuple(class_names))


def restore_model(checkpoint: Checkpoint) -> SequentialModel:
    model = SequentialModel(checkpoint.spec, seed=checkpoint.seed)
    model.load_state(checkpoint.params, checkpoint.buffers)
    return model
