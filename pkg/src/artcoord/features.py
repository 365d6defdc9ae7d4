"""Multichannel feature tracks and track-level operations.

A ``FeatureTrack`` is the common currency of the pipeline: a channels-by-frames
matrix with a frame rate and named channels.  This module holds the operations
that act on whole tracks: per-channel normalization, fixed-window segmentation,
and assembly of the 8-channel articulatory representation (six vocal tract
variables followed by the two glottal channels).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import FormatError

TV_CHANNELS = (
    "lip_aperture",
    "lip_protrusion",
    "tongue_body_location",
    "tongue_body_degree",
    "tongue_tip_location",
    "tongue_tip_degree",
)
GLOTTAL_CHANNELS = ("periodicity", "aperiodicity")

# Segmentation protocol: long recordings are cut into fixed windows with a
# regular shift; recordings between the minimum and the window length are kept
# whole; anything shorter is dropped.
SEGMENT_SECONDS = 20.0
SEGMENT_SHIFT_SECONDS = 5.0
MIN_SEGMENT_SECONDS = 10.0

# Channels whose population standard deviation falls below this are treated
# as constant and normalized to all zeros.
_DEGENERATE_STD = 1e-12


def default_channel_names(n: int) -> tuple[str, ...]:
    return tuple(f"ch{i:02d}" for i in range(n))


@dataclass
class FeatureTrack:
    """A channels-by-frames real matrix with frame-rate metadata.

    ``data`` has shape (n_channels, n_frames).  ``frame_rate`` is in Hz; a
    value of 0 marks non-temporal matrices (used when the container format is
    reused for cached correlation features).
    """

    data: np.ndarray
    frame_rate: float
    channel_names: tuple[str, ...] = ()

    def __post_init__(self):
        self.data = np.asarray(self.data)
        if self.data.ndim != 2:
            raise ValueError(f"track data must be 2-D, got shape {self.data.shape}")
        m, n = self.data.shape
        if m < 1 or n < 1:
            raise ValueError(f"track must have at least one channel and one frame, got {self.data.shape}")
        if not np.all(np.isfinite(self.data)):
            raise ValueError("track contains non-finite values")
        if self.frame_rate < 0:
            raise ValueError(f"frame_rate must be >= 0, got {self.frame_rate}")
        if not self.channel_names:
            self.channel_names = default_channel_names(m)
        self.channel_names = tuple(self.channel_names)
        if len(self.channel_names) != m:
            raise ValueError(f"{len(self.channel_names)} channel names for {m} channels")
        if len(set(self.channel_names)) != m:
            raise ValueError("channel names must be unique")

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def duration(self) -> float:
        """Track length in seconds (requires a temporal frame rate)."""
        if self.frame_rate <= 0:
            raise ValueError("duration is undefined for non-temporal tracks")
        return self.n_frames / self.frame_rate


@dataclass
class Segment:
    """A labeled slice of a recording's feature track."""

    recording_id: str
    start_time: float
    end_time: float
    track: FeatureTrack
    label: int | None = None

    @property
    def duration(self) -> float:
        return self.end_time - self.start_time


def normalize_channels(track: FeatureTrack) -> FeatureTrack:
    """Mean-variance normalize each channel independently.

    Uses the population standard deviation.  Constant channels come out as
    all zeros instead of raising, so silent stretches survive the pipeline.
    Statistics are accumulated in float64 regardless of the track dtype.
    """
    x = track.data.astype(np.float64)
    mean = x.mean(axis=1, keepdims=True)
    std = x.std(axis=1, keepdims=True)
    out = np.zeros_like(x)
    live = std[:, 0] > _DEGENERATE_STD
    out[live] = (x[live] - mean[live]) / std[live]
    return FeatureTrack(
        data=out.astype(track.data.dtype, copy=False),
        frame_rate=track.frame_rate,
        channel_names=track.channel_names,
    )


def segment_track(
    track: FeatureTrack,
    label: int | None = None,
    recording_id: str = "",
) -> list[Segment]:
    """Cut a track into analysis segments.

    Shorter than ``MIN_SEGMENT_SECONDS``: dropped entirely.  Between the
    minimum and ``SEGMENT_SECONDS``: one segment covering the whole track.
    Longer: ``SEGMENT_SECONDS`` windows every ``SEGMENT_SHIFT_SECONDS``, with
    any trailing remainder shorter than a full window discarded.

    All arithmetic is done on frame indices so that audio-derived and
    file-ingested tracks segment identically.
    """
    fr = track.frame_rate
    if fr <= 0:
        raise ValueError("segmentation requires a temporal frame rate")
    n = track.n_frames
    min_frames = int(round(MIN_SEGMENT_SECONDS * fr))
    seg_frames = int(round(SEGMENT_SECONDS * fr))
    shift_frames = int(round(SEGMENT_SHIFT_SECONDS * fr))

    if n < min_frames:
        return []

    def make(start: int, stop: int) -> Segment:
        piece = FeatureTrack(
            data=track.data[:, start:stop],
            frame_rate=fr,
            channel_names=track.channel_names,
        )
        return Segment(
            recording_id=recording_id,
            start_time=start / fr,
            end_time=stop / fr,
            track=piece,
            label=label,
        )

    if n <= seg_frames:
        return [make(0, n)]
    count = (n - seg_frames) // shift_frames + 1
    return [make(k * shift_frames, k * shift_frames + seg_frames) for k in range(count)]


def assemble_tv8(tv: FeatureTrack, glottal: FeatureTrack) -> FeatureTrack:
    """Stack six vocal-tract-variable channels with the two glottal channels.

    Frame rates must agree; frame counts may differ by at most two frames
    (both tracks are trimmed to the shorter one).
    """
    if tv.n_channels != len(TV_CHANNELS):
        raise ValueError(f"expected {len(TV_CHANNELS)} TV channels, got {tv.n_channels}")
    if glottal.n_channels != len(GLOTTAL_CHANNELS):
        raise ValueError(f"expected {len(GLOTTAL_CHANNELS)} glottal channels, got {glottal.n_channels}")
    if abs(tv.frame_rate - glottal.frame_rate) > 1e-9 * max(tv.frame_rate, glottal.frame_rate):
        raise ValueError(
            f"frame rate mismatch: TV track at {tv.frame_rate} Hz, glottal track at {glottal.frame_rate} Hz"
        )
    if abs(tv.n_frames - glottal.n_frames) > 2:
        raise ValueError(
            f"frame counts too far apart to align: {tv.n_frames} vs {glottal.n_frames}"
        )
    n = min(tv.n_frames, glottal.n_frames)
    data = np.vstack([tv.data[:, :n], glottal.data[:, :n]])
    return FeatureTrack(
        data=data,
        frame_rate=tv.frame_rate,
        channel_names=TV_CHANNELS + GLOTTAL_CHANNELS,
    )


def load_tv_track(path) -> FeatureTrack:
    """Read a six-channel vocal-tract-variable track from an "ACFT" file.

    The file must carry exactly the canonical TV channel names; channels are
    reordered to the canonical order if stored differently.
    """
    from . import featio

    track = featio.read_track(path)
    if track.n_channels != len(TV_CHANNELS):
        raise FormatError(
            f"TV track must have {len(TV_CHANNELS)} channels, got {track.n_channels} in {path}"
        )
    if set(track.channel_names) != set(TV_CHANNELS):
        raise FormatError(
            f"TV track channel names {track.channel_names} do not match {TV_CHANNELS}"
        )
    if track.channel_names == TV_CHANNELS:
        return track
    order = [track.channel_names.index(name) for name in TV_CHANNELS]
    return FeatureTrack(
        data=track.data[order],
        frame_rate=track.frame_rate,
        channel_names=TV_CHANNELS,
    )
