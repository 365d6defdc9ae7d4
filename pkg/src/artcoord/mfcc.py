"""Mel-frequency cepstral coefficient extraction for 8 kHz speech.

Fixed analysis protocol: 20 ms Hamming windows with a 10 ms shift (so the
output frame rate is 100 Hz), 256-point real FFT, 26 triangular mel filters
spanning 0-4000 Hz, natural-log filterbank energies floored at 1e-10, an
orthonormal DCT-II, and cepstral coefficients 1-12 retained (coefficient 0
is dropped).  No pre-emphasis.
"""

from __future__ import annotations

import numpy as np

from .audio import AudioClip
from .features import FeatureTrack

SAMPLE_RATE = 8000
WINDOW_SAMPLES = 160  # 20 ms
HOP_SAMPLES = 80  # 10 ms
FFT_SIZE = 256
N_FILTERS = 26
N_COEFFS = 12  # coefficients 1..12 after dropping the 0th
FMIN_HZ = 0.0
FMAX_HZ = 4000.0
LOG_FLOOR = 1e-10

FRAME_RATE = SAMPLE_RATE / HOP_SAMPLES  # 100 Hz


def hz_to_mel(hz):
    return 2595.0 * np.log10(1.0 + np.asarray(hz, dtype=np.float64) / 700.0)


def mel_to_hz(mel):
    return 700.0 * (10.0 ** (np.asarray(mel, dtype=np.float64) / 2595.0) - 1.0)


def frame_count(n_samples: int, window: int = WINDOW_SAMPLES, hop: int = HOP_SAMPLES) -> int:
    """Number of full analysis windows: floor((n - window)/hop) + 1."""
    if n_samples < window:
        return 0
    return (n_samples - window) // hop + 1


def frame_signal(samples: np.ndarray, window: int = WINDOW_SAMPLES, hop: int = HOP_SAMPLES) -> np.ndarray:
    """View of shape (n_frames, window) onto overlapping analysis windows."""
    n = frame_count(len(samples), window, hop)
    if n == 0:
        raise ValueError(f"signal of {len(samples)} samples is shorter than one {window}-sample window")
    stride = samples.strides[0]
    return np.lib.stride_tricks.as_strided(samples, shape=(n, window), strides=(hop * stride, stride))


def mel_filterbank(
    n_filters: int = N_FILTERS,
    fft_size: int = FFT_SIZE,
    sample_rate: int = SAMPLE_RATE,
    fmin: float = FMIN_HZ,
    fmax: float = FMAX_HZ,
) -> np.ndarray:
    """Triangular mel filters over rfft bins, shape (n_filters, fft_size//2 + 1).

    Filter edges are mel-spaced between fmin and fmax and snapped to FFT bin
    indices, the common bin-anchored construction.
    """
    points = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_filters + 2))
    bins = np.floor((fft_size + 1) * points / sample_rate).astype(int)
    bank = np.zeros((n_filters, fft_size // 2 + 1))
    for j in range(n_filters):
        lo, mid, hi = bins[j], bins[j + 1], bins[j + 2]
        for i in range(lo, mid):
            bank[j, i] = (i - lo) / (mid - lo)
        for i in range(mid, hi):
            bank[j, i] = (hi - i) / (hi - mid)
    return bank


def dct2_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Orthonormal DCT-II matrix of shape (n_out, n_in)."""
    n = np.arange(n_in)
    k = np.arange(n_out)[:, None]
    mat = np.cos(np.pi * k * (2 * n + 1) / (2 * n_in)) * np.sqrt(2.0 / n_in)
    mat[0] /= np.sqrt(2.0)
    return mat


def compute_mfcc(clip: AudioClip) -> FeatureTrack:
    """12-channel MFCC track at 100 Hz from an 8 kHz clip.

    Raises if the clip is not at 8 kHz or is shorter than one window.
    """
    if clip.sample_rate != SAMPLE_RATE:
        raise ValueError(
            f"MFCC extraction expects {SAMPLE_RATE} Hz audio, got {clip.sample_rate} Hz (no resampling)"
        )
    frames = frame_signal(clip.samples.astype(np.float64)) * np.hamming(WINDOW_SAMPLES)
    spectrum = np.fft.rfft(frames, n=FFT_SIZE)
    power = spectrum.real**2 + spectrum.imag**2
    energies = power @ mel_filterbank().T
    log_e = np.log(np.maximum(energies, LOG_FLOOR))
    coeffs = log_e @ dct2_matrix(N_COEFFS + 1, N_FILTERS).T
    data = coeffs[:, 1:].T.astype(np.float32)
    names = tuple(f"mfcc{i:02d}" for i in range(1, N_COEFFS + 1))
    return FeatureTrack(data=data, frame_rate=FRAME_RATE, channel_names=names)
