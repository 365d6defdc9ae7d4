"""Checkpoint container (magic ``ACFN``).

Layout, little-endian:

    b"ACFN" | payload | crc32(payload) u32

    payload = version u16
            | config length u32 | config JSON (UTF-8, canonical key order)
            | tensor count u32
            | per tensor: name u16+UTF-8 | dtype u8 | ndim u8 | dims u32*
                        | raw data

Tensors are written sorted by name and the JSON uses sorted keys with fixed
separators, so serializing the same state twice yields identical bytes.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from ..errors import FormatError

MAGIC = b"ACFN"
VERSION = 1

_DTYPE_CODES = {np.dtype("<f4"): 0, np.dtype("<f8"): 1, np.dtype("<i8"): 2}
_CODE_DTYPES = {v: k for k, v in _DTYPE_CODES.items()}


def write_checkpoint(config: dict, tensors: dict[str, np.ndarray]) -> bytes:
    config_json = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    parts = [struct.pack("<H", VERSION), struct.pack("<I", len(config_json)), config_json]
    parts.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.ascontiguousarray(tensors[name])
        dt = arr.dtype.newbyteorder("<")
        if dt not in _DTYPE_CODES:
            raise ValueError(f"unsupported tensor dtype {arr.dtype} for {name!r}")
        raw_name = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw_name)))
        parts.append(raw_name)
        parts.append(struct.pack("<BB", _DTYPE_CODES[dt], arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.astype(dt, copy=False).tobytes())
    payload = b"".join(parts)
    return MAGIC + payload + struct.pack("<I", zlib.crc32(payload))


def read_checkpoint(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if len(data) < 8 or data[:4] != MAGIC:
        raise FormatError("bad magic: not an ACFN checkpoint")
    payload, (stored_crc,) = data[4:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != stored_crc:
        raise FormatError("checkpoint checksum mismatch (file corrupted or tampered)")
    off = 0
    try:
        (version,) = struct.unpack_from("<H", payload, off)
        off += 2
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        (config_len,) = struct.unpack_from("<I", payload, off)
        off += 4
        config = json.loads(payload[off : off + config_len].decode("utf-8"))
        off += config_len
        (n_tensors,) = struct.unpack_from("<I", payload, off)
        off += 4
        tensors = {}
        for _ in range(n_tensors):
            (name_len,) = struct.unpack_from("<H", payload, off)
            off += 2
            name = payload[off : off + name_len].decode("utf-8")
            off += name_len
            code, ndim = struct.unpack_from("<BB", payload, off)
            off += 2
            shape = struct.unpack_from(f"<{ndim}I", payload, off)
            off += 4 * ndim
            if code not in _CODE_DTYPES:
                raise FormatError(f"unknown tensor dtype code {code} for {name!r}")
            dt = _CODE_DTYPES[code]
            count = int(np.prod(shape)) if ndim else 1
            nbytes = count * dt.itemsize
            if len(payload) - off < nbytes:
                raise FormatError(f"truncated tensor data for {name!r}")
            arr = np.frombuffer(payload, dtype=dt, count=count, offset=off).reshape(shape)
            off += nbytes
            tensors[name] = arr.copy()
    except struct.error as exc:
        raise FormatError(f"truncated checkpoint: {exc}") from exc
    return config, tensors


def save_checkpoint(path, config: dict, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_bytes(write_checkpoint(config, tensors))


def load_checkpoint(path) -> tuple[dict, dict[str, np.ndarray]]:
    return read_checkpoint(Path(path).read_bytes())
