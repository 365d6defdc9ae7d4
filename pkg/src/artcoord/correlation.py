"""Channel-delay correlation matrices.

For an M-channel track, the delayed correlation between channel i and
channel j at a non-negative delay d is the average lagged product

    r(i, j, d) = sum_{t=0}^{N-d-1} x_i[t] * x_j[t+d] / (N - d).

Stacking the length-(D+1) correlation vectors of every ordered channel pair
gives an M^2 x (D+1) matrix: row k holds the vector for pair (i, j) with
k = i*M + j (0-based, row-major over ordered pairs).  Negative delays do not
need their own rows since r(i, j, -d) = r(j, i, d).

These matrices are the classifier input.  Channels are expected to be
mean-variance normalized upstream, which makes each entry a biased-lag
Pearson-style estimate; no per-lag renormalization is applied beyond the
N - d divisor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .features import FeatureTrack

# std threshold under which a matrix cell is considered degenerate when
# z-normalizing against training statistics
_DEGENERATE_STD = 1e-8


@dataclass
class ChannelDelayCorrelationMatrix:
    """Stacked delayed auto- and cross-correlations of one track segment."""

    data: np.ndarray  # (n_channels**2, max_delay + 1)
    n_channels: int
    max_delay: int
    row_order: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        self.data = np.asarray(self.data)
        m, d = self.n_channels, self.max_delay
        if self.data.shape != (m * m, d + 1):
            raise ValueError(
                f"expected shape {(m * m, d + 1)} for M={m}, D={d}, got {self.data.shape}"
            )
        if not np.all(np.isfinite(self.data)):
            raise ValueError("correlation matrix contains non-finite values")
        if not self.row_order:
            self.row_order = pair_order(m)
        self.row_order = tuple(tuple(p) for p in self.row_order)
        if self.row_order != pair_order(m):
            raise ValueError("row_order must be row-major over ordered channel pairs")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def pair_order(n_channels: int) -> tuple[tuple[int, int], ...]:
    """Canonical (i, j) ordering: i outer, j inner, 0-based."""
    return tuple((i, j) for i in range(n_channels) for j in range(n_channels))


def delayed_correlation(x_i: np.ndarray, x_j: np.ndarray, delay: int) -> float:
    """Average product of x_i against x_j delayed by ``delay`` frames."""
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    if x_i.shape != x_j.shape or x_i.ndim != 1:
        raise ValueError(f"channels must be equal-length 1-D arrays, got {x_i.shape} and {x_j.shape}")
    n = x_i.size
    if not 0 <= delay < n:
        raise ValueError(f"delay must satisfy 0 <= d < {n}, got {delay}")
    return float(np.dot(x_i[: n - delay], x_j[delay:]) / (n - delay))


def correlation_vector(x_i: np.ndarray, x_j: np.ndarray, max_delay: int) -> np.ndarray:
    """Delayed correlations of one channel pair for delays 0..max_delay."""
    x_i = np.asarray(x_i, dtype=np.float64)
    if max_delay >= x_i.size:
        raise ValueError(f"max delay {max_delay} must be smaller than channel length {x_i.size}")
    return np.array([delayed_correlation(x_i, x_j, d) for d in range(max_delay + 1)])


def build_acf(track: FeatureTrack | np.ndarray, max_delay: int) -> ChannelDelayCorrelationMatrix:
    """Channel-delay correlation matrix of a (normalized) track.

    Accepts a FeatureTrack or a raw (channels, frames) array.  Requires more
    frames than the maximum delay.
    """
    x = track.data if isinstance(track, FeatureTrack) else np.asarray(track)
    if x.ndim != 2:
        raise ValueError(f"expected a (channels, frames) matrix, got shape {x.shape}")
    x = x.astype(np.float64)
    m, n = x.shape
    if n <= max_delay:
        raise ValueError(f"segment too short: {n} frames cannot support delays up to {max_delay}")
    out = np.empty((m * m, max_delay + 1))
    for d in range(max_delay + 1):
        out[:, d] = (x[:, : n - d] @ x[:, d:].T).reshape(-1) / (n - d)
    return ChannelDelayCorrelationMatrix(data=out, n_channels=m, max_delay=max_delay)


@dataclass
class NormStats:
    """Elementwise z-normalization statistics fit on training matrices."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean)
        self.std = np.asarray(self.std)
        if self.mean.shape != self.std.shape:
            raise ValueError(f"mean/std shape mismatch: {self.mean.shape} vs {self.std.shape}")
        if np.any(self.std < 0):
            raise ValueError("std entries must be non-negative")


def fit_stats_array(stack: np.ndarray) -> NormStats:
    """Elementwise mean and population std over the leading axis."""
    stack = np.asarray(stack)
    if stack.shape[0] < 1:
        raise ValueError("cannot fit statistics on an empty set")
    return NormStats(mean=stack.mean(axis=0), std=stack.std(axis=0))


def apply_stats_array(x: np.ndarray, stats: NormStats) -> np.ndarray:
    """(x - mean) / std elementwise; cells with degenerate std map to 0."""
    if x.shape[-stats.mean.ndim :] != stats.mean.shape:
        raise ValueError(f"shape {x.shape} does not match statistics of shape {stats.mean.shape}")
    live = stats.std >= _DEGENERATE_STD
    safe_std = np.where(live, stats.std, 1.0)
    return np.where(live, (x - stats.mean) / safe_std, 0.0).astype(x.dtype, copy=False)


def fit_norm_stats(acfs: list[ChannelDelayCorrelationMatrix]) -> NormStats:
    """Fit z-normalization statistics over a list of correlation matrices."""
    if not acfs:
        raise ValueError("cannot fit statistics on an empty set")
    shapes = {a.shape for a in acfs}
    if len(shapes) != 1:
        raise ValueError(f"matrices have mismatched shapes: {sorted(shapes)}")
    return fit_stats_array(np.stack([a.data for a in acfs]))


def apply_norm(
    acf: ChannelDelayCorrelationMatrix, stats: NormStats
) -> ChannelDelayCorrelationMatrix:
    """z-normalize one matrix against training statistics."""
    if acf.data.shape != stats.mean.shape:
        raise ValueError(f"matrix shape {acf.data.shape} does not match stats shape {stats.mean.shape}")
    return ChannelDelayCorrelationMatrix(
        data=apply_stats_array(acf.data, stats),
        n_channels=acf.n_channels,
        max_delay=acf.max_delay,
        row_order=acf.row_order,
    )


# --- cache files: correlation matrices reuse the ACFT container ----------


def acf_to_track(acf: ChannelDelayCorrelationMatrix) -> FeatureTrack:
    names = tuple(f"r{i:02d}x{j:02d}" for i, j in acf.row_order)
    return FeatureTrack(data=acf.data.astype(np.float32), frame_rate=0.0, channel_names=names)


def acf_from_track(track: FeatureTrack) -> ChannelDelayCorrelationMatrix:
    rows = track.n_channels
    m = int(round(rows**0.5))
    if m * m != rows:
        raise ValueError(f"cached matrix has {rows} rows, not a perfect square")
    return ChannelDelayCorrelationMatrix(
        data=track.data, n_channels=m, max_delay=track.n_frames - 1
    )


def save_acf(path, acf: ChannelDelayCorrelationMatrix) -> None:
    from . import featio

    featio.write_track(path, acf_to_track(acf))


def load_acf(path) -> ChannelDelayCorrelationMatrix:
    from . import featio

    return acf_from_track(featio.read_track(path))
