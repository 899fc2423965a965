"""Binary model checkpoints.

Layout (little-endian)::

    magic "NUCK" | u16 version | u32 header length | header JSON | raw arrays

The header carries the model config, its hash, the dtype and the ordered
parameter names and shapes; arrays follow in that order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..detsim.io import FormatError
from ..fileio import atomic_write_bytes
from ..model import ModelConfig, SiameseNet

MAGIC = b"NUCK"
VERSION = 1
PREFIX = struct.Struct("<4sHI")


class CheckpointVersionError(ValueError):
    """Checkpoint was written by another format version or for another config."""


def encode_checkpoint(model: SiameseNet, extra=None) -> bytes:
    dtype = np.dtype(model.dtype).newbyteorder("<")
    header = {
        "config": model.config.to_dict(),
        "config_hash": model.config.config_hash(),
        "dtype": model.dtype.name,
        "params": [[name, list(shape)] for name, shape, _ in model.layout],
        "extra": extra or {},
    }
    head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = b"".join(np.ascontiguousarray(model.params[name].data, dtype=dtype).tobytes()
                    for name, _, _ in model.layout)
    return PREFIX.pack(MAGIC, VERSION, len(head)) + head + body


def save_checkpoint(model: SiameseNet, path, extra=None):
    """Atomically write ``model`` to ``path``; identical weights give identical bytes."""
    return atomic_write_bytes(path, encode_checkpoint(model, extra))


def decode_checkpoint(blob: bytes, path="<bytes>", expected_hash=None):
    if len(blob) < PREFIX.size:
        raise FormatError(path, len(blob), "truncated checkpoint prefix")
    magic, version, hlen = PREFIX.unpack_from(blob, 0)
    if magic != MAGIC:
        raise FormatError(path, 0, f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise CheckpointVersionError(f"{path}: checkpoint format version {version}, "
                                     f"this build reads {VERSION}")
    try:
        header = json.loads(blob[PREFIX.size:PREFIX.size + hlen].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(path, PREFIX.size, f"unreadable header: {exc}") from exc
    config = ModelConfig.from_dict(header["config"])
    if config.config_hash() != header["config_hash"]:
        raise CheckpointVersionError(f"{path}: stored config hash {header['config_hash']} "
                                     f"does not match its config ({config.config_hash()})")
    if expected_hash is not None and expected_hash != header["config_hash"]:
        raise CheckpointVersionError(f"{path}: checkpoint config hash {header['config_hash']} "
                                     f"differs from expected {expected_hash}")
    dtype = np.dtype(header["dtype"]).newbyteorder("<")
    offset = PREFIX.size + hlen
    params = {}
    for name, shape in header["params"]:
        count = int(np.prod(shape))
        end = offset + count * dtype.itemsize
        if end > len(blob):
            raise FormatError(path, len(blob), f"payload ends inside parameter {name}")
        params[name] = np.frombuffer(blob, dtype=dtype, count=count, offset=offset).reshape(shape)
        offset = end
    if offset != len(blob):
        raise FormatError(path, offset, f"{len(blob) - offset} trailing bytes after parameters")
    model = SiameseNet(config, params, dtype=np.dtype(header["dtype"]))
    return model, header.get("extra", {})


def load_checkpoint(path, expected_hash=None, with_extra=False):
    model, extra = decode_checkpoint(Path(path).read_bytes(), path, expected_hash)
    return (model, extra) if with_extra else model
