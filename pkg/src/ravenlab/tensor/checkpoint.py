"""Binary parameter checkpoints.

Layout (all integers little-endian):

    magic      8 bytes   b"RVLCKPT\\0"
    version    uint32    currently 1
    count      uint32    number of tensors
    then, per tensor, in insertion order:
        name_len  uint16
        name      name_len bytes, UTF-8
        ndim      uint8
        dims      ndim x uint32
        data      prod(dims) x float64, C order

Reading back yields exactly the stored float64 values, so a save/load round
trip is lossless and two saves of the same state are byte-identical.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"RVLCKPT\0"
VERSION = 1


def dumps_checkpoint(named):
    parts = [MAGIC, struct.pack("<II", VERSION, len(named))]
    for name, array in named.items():
        array = np.asarray(array, dtype="<f8")
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", array.ndim))
        parts.append(struct.pack(f"<{array.ndim}I", *array.shape))
        parts.append(array.tobytes(order="C"))
    return b"".join(parts)


def loads_checkpoint(blob):
    if blob[:8] != MAGIC:
        raise FormatError("not a checkpoint file (bad magic)")
    version, count = struct.unpack_from("<II", blob, 8)
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    pos = 16
    out = {}
    try:
        for _ in range(count):
            (n,) = struct.unpack_from("<H", blob, pos)
            pos += 2
            name = blob[pos:pos + n].decode("utf-8")
            pos += n
            (ndim,) = struct.unpack_from("<B", blob, pos)
            pos += 1
            shape = struct.unpack_from(f"<{ndim}I", blob, pos)
            pos += 4 * ndim
            size = int(np.prod(shape, dtype=np.int64))
            if pos + 8 * size > len(blob):
                raise FormatError(f"truncated data for tensor {name!r}")
            out[name] = np.frombuffer(blob, dtype="<f8", count=size, offset=pos).reshape(shape).astype(np.float64)
            pos += 8 * size
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from None
    if pos != len(blob):
        raise FormatError(f"{len(blob) - pos} trailing bytes after {count} tensors")
    return out


def save_checkpoint(path, named):
    Path(path).write_bytes(dumps_checkpoint(named))


def load_checkpoint(path):
    return loads_checkpoint(Path(path).read_bytes())
