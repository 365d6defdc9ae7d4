"""WAV ingestion (RIFF/WAVE, 16-bit PCM, mono)."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError


@dataclass
class AudioClip:
    samples: np.ndarray  # float32 in [-1, 1)
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float32)
        if self.samples.ndim != 1 or self.samples.size == 0:
            raise ValueError("audio clip must be a non-empty 1-D array")
        if self.sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


def decode_wav(data: bytes) -> AudioClip:
    """Decode a mono 16-bit PCM WAV byte string.

    Samples are scaled by 1/32768 so the output lies in [-1, 1).  Anything
    that is not RIFF/WAVE with a PCM fmt chunk, one channel and 16 bits per
    sample is rejected.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise FormatError("not a RIFF/WAVE file")

    fmt = None
    payload = None
    off = 12
    while off + 8 <= len(data):
        chunk_id = data[off : off + 4]
        (chunk_size,) = struct.unpack_from("<I", data, off + 4)
        body = data[off + 8 : off + 8 + chunk_size]
        if chunk_id == b"fmt ":
            if len(body) < 16:
                raise FormatError("truncated fmt chunk")
            fmt = struct.unpack_from("<HHIIHH", body, 0)
        elif chunk_id == b"data":
            if len(body) < chunk_size:
                raise FormatError(
                    f"truncated data chunk: declared {chunk_size} bytes, have {len(body)}"
                )
            payload = body
        # chunks are word-aligned
        off += 8 + chunk_size + (chunk_size & 1)

    if fmt is None:
        raise FormatError("missing fmt chunk")
    if payload is None:
        raise FormatError("missing data chunk")

    audio_format, n_channels, sample_rate, _, _, bits = fmt
    if audio_format != 1:
        raise FormatError(f"only PCM supported, got format tag {audio_format}")
    if n_channels != 1:
        raise FormatError(f"only mono supported, got {n_channels} channels")
    if bits != 16:
        raise FormatError(f"only 16-bit samples supported, got {bits}")
    if len(payload) % 2:
        raise FormatError("data chunk is not an integral number of 16-bit samples")
    if not payload:
        raise FormatError("empty data chunk")

    samples = np.frombuffer(payload, dtype="<i2").astype(np.float32) / 32768.0
    return AudioClip(samples=samples, sample_rate=sample_rate)


def read_wav(path) -> AudioClip:
    return decode_wav(Path(path).read_bytes())


def encode_wav(clip: AudioClip) -> bytes:
    """Inverse of decode_wav; used by the synthesizer demos and tests."""
    ints = np.clip(np.round(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    payload = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF",
        36 + len(payload),
        b"WAVE",
        b"fmt ",
        16,
        1,
        1,
        clip.sample_rate,
        clip.sample_rate * 2,
        2,
        16,
        b"data",
        len(payload),
    )
    return header + payload
