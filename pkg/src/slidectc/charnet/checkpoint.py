"""Binary checkpoint format.

Layout (little-endian): magic ``SCCM1``; 8-byte config digest; u32 length +
UTF-8 JSON metadata (network config, step counter, caller extras); u32
tensor count; per tensor: u16 name length, name, u8 ndim, u32 dims, float64
data.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptCheckpoint, IncompatibleCheckpoint, IoError
from .config import NetworkConfig
from .network import Network

MAGIC = b"SCCM1"


def checkpoint_bytes(net: Network, extra: dict | None = None) -> bytes:
    meta = json.dumps(
        {"network": net.config.to_dict(), "step": net.step, "extra": extra or {}},
        sort_keys=True,
    ).encode("utf-8")
    out = [MAGIC, net.config.digest(), struct.pack("<I", len(meta)), meta]
    names = net.state_names()
    out.append(struct.pack("<I", len(names)))
    for name in names:
        arr = np.ascontiguousarray(net.tensors[name], dtype="<f8")
        key = name.encode("utf-8")
        out.append(struct.pack("<H", len(key)) + key + struct.pack("<B", arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(arr.tobytes())
    return b"".join(out)


def save_checkpoint(net: Network, path, extra: dict | None = None) -> None:
    try:
        Path(path).write_bytes(checkpoint_bytes(net, extra))
    except OSError as exc:
        raise IoError(f"cannot write checkpoint {path}: {exc}") from exc


class _Reader:
    def __init__(self, data: bytes):
        self.data, self.pos = data, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CorruptCheckpoint("checkpoint is truncated")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def load_checkpoint(path) -> tuple[Network, dict]:
    """Returns the network and the ``extra`` metadata stored with it."""
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise IoError(f"cannot read checkpoint {path}: {exc}") from exc
    if not data.startswith(MAGIC):
        raise IncompatibleCheckpoint(f"{path}: not a {MAGIC.decode()} checkpoint")
    r = _Reader(data)
    r.take(len(MAGIC))
    digest = r.take(8)
    (meta_len,) = r.unpack("<I")
    try:
        meta = json.loads(r.take(meta_len).decode("utf-8"))
        config = NetworkConfig.from_dict(meta["network"])
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptCheckpoint(f"{path}: unreadable metadata ({exc})") from exc
    if config.digest() != digest:
        raise CorruptCheckpoint(f"{path}: config digest does not match its metadata")
    (count,) = r.unpack("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I")
        n = int(np.prod(shape, dtype=np.int64))
        arr = np.frombuffer(r.take(8 * n), dtype="<f8").reshape(shape)
        tensors[name] = arr.astype(config.dtype)
    if r.pos != len(data):
        raise CorruptCheckpoint(f"{path}: trailing bytes after the last tensor")
    net = Network(config, tensors=None, step=int(meta["step"]))
    missing = set(net.param_names + net.buffer_names) - set(tensors)
    if missing:
        raise CorruptCheckpoint(f"{path}: missing tensors {sorted(missing)}")
    for name, arr in tensors.items():
        if name in net.tensors and net.tensors[name].shape != arr.shape:
            raise IncompatibleCheckpoint(f"{path}: tensor {name} has shape {arr.shape}")
    net.tensors = tensors
    return net, meta.get("extra", {})
