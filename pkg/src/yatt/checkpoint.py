"""Binary checkpoint format.

Layout: the 5-byte magic ``YATT1``, a little-endian uint32 header length, a
UTF-8 JSON header, then the tensors as contiguous little-endian float64 in
:meth:`ModelWeights.tensors` order. The header records the model config,
scaler, seed, parameter count, payload length and payload SHA-256.
"""
import hashlib
import json
import struct
from pathlib import Path

import numpy as np

from . import model
from .pipeline import Scaler

MAGIC = b"YATT1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


class VersionError(CheckpointError):
    pass


class TruncatedError(CheckpointError):
    pass


class ChecksumError(CheckpointError):
    pass


class KindMismatchError(CheckpointError):
    pass


def save(path, weights, cfg, scaler, seed):
    tensors = weights.tensors()
    payload = b"".join(np.ascontiguousarray(t, dtype="<f8").tobytes() for t in tensors.values())
    header = {
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(),
        "scaler": scaler.to_dict(),
        "seed": int(seed),
        "n_params": int(weights.n_params()),
        "payload_bytes": len(payload),
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    Path(path).write_bytes(MAGIC + struct.pack("<I", len(head)) + head + payload)


def load(path, expect_kind=None):
    """Returns ``(weights, cfg, scaler, header)``."""
    blob = Path(path).read_bytes()
    if blob[:4] == MAGIC[:4] and blob[:5] != MAGIC:
        raise VersionError(f"{path}: unsupported checkpoint version {blob[4:5]!r}")
    if blob[:5] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    if len(blob) < 9:
        raise TruncatedError(f"{path}: truncated header")
    (n_head,) = struct.unpack("<I", blob[5:9])
    if len(blob) < 9 + n_head:
        raise TruncatedError(f"{path}: truncated header")
    try:
        header = json.loads(blob[9 : 9 + n_head].decode("utf-8"))
    except ValueError as exc:
        raise CheckpointError(f"{path}: unreadable header: {exc}") from None
    if header.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"{path}: format version {header.get('format_version')} is not {FORMAT_VERSION}")
    payload = blob[9 + n_head :]
    if len(payload) < header["payload_bytes"]:
        raise TruncatedError(f"{path}: payload has {len(payload)} of {header['payload_bytes']} bytes")
    payload = payload[: header["payload_bytes"]]
    if hashlib.sha256(payload).hexdigest() != header["sha256"]:
        raise ChecksumError(f"{path}: payload checksum mismatch")
    cfg = model.ModelConfig.from_dict(header["config"])
    if expect_kind is not None and cfg.kind != expect_kind:
        raise KindMismatchError(f"{path}: checkpoint holds a {cfg.kind} model, expected {expect_kind}")
    if header["n_params"] != model.count_params(cfg) or len(payload) != 8 * header["n_params"]:
        raise CheckpointError(f"{path}: parameter count does not match the stored config")
    flat = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    tensors, off = {}, 0
    for name, shape in model._shapes(cfg).items():
        size = int(np.prod(shape))
        tensors[name] = flat[off : off + size].reshape(shape).copy()
        off += size
    return model.from_tensors(cfg, tensors), cfg, Scaler.from_dict(header["scaler"]), header
