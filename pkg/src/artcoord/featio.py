"""Binary feature-matrix files (magic ``ACFT``).

Layout, everything little-endian:

    b"ACFT" | version u16 | frame_rate f64 | n_channels u32 | n_frames u32
    | per channel: name byte-length u16 + UTF-8 name
    | n_channels * n_frames float32, channel-major

Used both for ingesting externally produced feature tracks and for caching
per-segment correlation matrices (frame_rate 0, one row per channel pair).
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import FormatError
from .features import FeatureTrack

MAGIC = b"ACFT"
VERSION = 1


def track_to_bytes(track: FeatureTrack) -> bytes:
    parts = [MAGIC, struct.pack("<Hd", VERSION, float(track.frame_rate))]
    m, n = track.data.shape
    parts.append(struct.pack("<II", m, n))
    for name in track.channel_names:
        raw = name.encode("utf-8")
        parts.append(struct.pack("<H", len(raw)))
        parts.append(raw)
    parts.append(np.ascontiguousarray(track.data, dtype="<f4").tobytes())
    return b"".join(parts)


def track_from_bytes(data: bytes) -> FeatureTrack:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic: not an ACFT file")
    off = 4
    try:
        version, frame_rate = struct.unpack_from("<Hd", data, off)
        off += struct.calcsize("<Hd")
        if version != VERSION:
            raise FormatError(f"unsupported ACFT version {version}")
        m, n = struct.unpack_from("<II", data, off)
        off += 8
        names = []
        for _ in range(m):
            (ln,) = struct.unpack_from("<H", data, off)
            off += 2
            names.append(data[off : off + ln].decode("utf-8"))
            off += ln
        need = m * n * 4
        if len(data) - off < need:
            raise FormatError(f"truncated ACFT payload: need {need} bytes, have {len(data) - off}")
        matrix = np.frombuffer(data, dtype="<f4", count=m * n, offset=off).reshape(m, n)
    except struct.error as exc:
        raise FormatError(f"truncated ACFT header: {exc}") from exc
    return FeatureTrack(data=matrix.copy(), frame_rate=frame_rate, channel_names=tuple(names))


def write_track(path, track: FeatureTrack) -> None:
    Path(path).write_bytes(track_to_bytes(track))


def read_track(path) -> FeatureTrack:
    return track_from_bytes(Path(path).read_bytes())
