"""Simplified glottal periodicity and aperiodicity tracks.

Per 20 ms frame (10 ms shift, same grid as the MFCC front end) an average
magnitude difference function is evaluated over lags of 2.5-20 ms.  A voiced
frame has a deep AMDF minimum at the pitch period, so

    periodicity  = clamp(1 - min(AMDF) / mean(AMDF), 0, 1)
    aperiodicity = 1 - periodicity

This is a deliberately lightweight stand-in for a full periodicity detector:
it needs no training data and the two channels are only consumed as broad
voicing-coordination evidence downstream.

Each frame's AMDF is averaged over a fixed 160-sample comparison span, so the
analysis segment extends one maximum lag past the frame (truncated near the
end of the signal, where late lags fall back on however many sample pairs
remain).
"""

from __future__ import annotations

import numpy as np

from .audio import AudioClip
from .features import GLOTTAL_CHANNELS, FeatureTrack
from .mfcc import FRAME_RATE, HOP_SAMPLES, SAMPLE_RATE, WINDOW_SAMPLES, frame_count

MIN_LAG_SECONDS = 0.0025
MAX_LAG_SECONDS = 0.020

MIN_LAG = int(round(MIN_LAG_SECONDS * SAMPLE_RATE))  # 20 samples
MAX_LAG = int(round(MAX_LAG_SECONDS * SAMPLE_RATE))  # 160 samples
_SPAN = WINDOW_SAMPLES  # averaging span per lag
_EXTENT = _SPAN + MAX_LAG  # samples consumed per fully interior frame


def _amdf_periodicity(segment: np.ndarray) -> float:
    """Periodicity of one analysis segment (length >= WINDOW_SAMPLES)."""
    length = segment.size
    values = []
    for lag in range(MIN_LAG, MAX_LAG + 1):
        span = min(_SPAN, length - lag)
        if span < 1:
            break
        values.append(np.mean(np.abs(segment[:span] - segment[lag : lag + span])))
    amdf = np.asarray(values)
    mean = amdf.mean()
    if mean <= 0.0:
        return 0.0
    return float(np.clip(1.0 - amdf.min() / mean, 0.0, 1.0))


def estimate_glottal_tracks(clip: AudioClip) -> FeatureTrack:
    """Two-channel (periodicity, aperiodicity) track at 100 Hz."""
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(
            f"glottal estimation expects {SAMPLE_RATE} Hz audio, got {clip.sample_rate} Hz (no resampling)"
        )
    x = clip.samples.astype(np.float64)
    n_frames = frame_count(x.size)
    if n_frames == 0:
        raise ValueError(
            f"clip of {x.size} samples is shorter than one {WINDOW_SAMPLES}-sample window"
        )

    periodicity = np.empty(n_frames)
    # frames whose full analysis extent fits inside the signal, vectorized
    n_full = min(n_frames, max(0, (x.size - _EXTENT) // HOP_SAMPLES + 1))
    if n_full > 0:
        stride = x.strides[0]
        full = np.lib.stride_tricks.as_strided(
            x, shape=(n_full, _EXTENT), strides=(HOP_SAMPLES * stride, stride)
        )
        amdf = np.empty((n_full, MAX_LAG - MIN_LAG + 1))
        for k, lag in enumerate(range(MIN_LAG, MAX_LAG + 1)):
            amdf[:, k] = np.mean(np.abs(full[:, :_SPAN] - full[:, lag : lag + _SPAN]), axis=1)
        mean = amdf.mean(axis=1)
        live = mean > 0.0
        periodicity[:n_full] = 0.0
        periodicity[:n_full][live] = np.clip(1.0 - amdf.min(axis=1)[live] / mean[live], 0.0, 1.0)
    for k in range(n_full, n_frames):
        periodicity[k] = _amdf_periodicity(x[k * HOP_SAMPLES :])

    data = np.vstack([periodicity, 1.0 - periodicity]).astype(np.float32)
    return FeatureTrack(data=data, frame_rate=FRAME_RATE, channel_names=GLOTTAL_CHANNELS)
