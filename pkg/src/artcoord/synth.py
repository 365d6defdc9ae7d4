"""Synthetic multichannel corpora with class-dependent coupling delays.

Real clinical speech corpora are private, so end-to-end behavior is
exercised on generated feature tracks instead.  The construction mimics the
property the classifier is supposed to pick up: neighbouring channels are
coupled copies of each other, and the coupling LAG differs between the two
classes.  Channel 0 is a smoothed noise process (first-order autoregression,
coefficient 0.95); each later channel is a gain-scaled, class-delayed copy
of its predecessor plus fresh noise (noise sd is relative to the driving
channel's sd, so the signal-to-noise ratio is uniform along the chain).

Everything is keyed off integer seeds through per-recording seed sequences,
so corpora are bit-reproducible and recordings could be generated in any
order or in parallel.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .dataset import ClinicalScore, Database, Label, RecordingRecord, Scale, write_manifest
from .features import GLOTTAL_CHANNELS, TV_CHANNELS, FeatureTrack

AR_COEFF = 0.95

# manifest scores consistent with the class labels (well inside the
# severe and normal bands respectively)
_SCORE_DEPRESSED = 20
_SCORE_NORMAL = 2


@dataclass
class SynthSpec:
    speakers_per_class: int = 40
    recordings_per_speaker: int = 3
    duration_range: tuple[float, float] = (30.0, 60.0)
    n_channels: int = 8
    frame_rate: float = 100.0
    delay_nondepressed: int = 3  # coupling delay in frames
    delay_depressed: int = 12
    gain: float = 0.8
    noise_level: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.delay_nondepressed == self.delay_depressed:
            raise ValueError("class coupling delays must differ")
        if not 0.0 <= self.gain < 1.0:
            raise ValueError(f"gain must be in [0, 1), got {self.gain}")
        if self.n_channels < 2:
            raise ValueError("need at least 2 channels for coupling")
        if self.duration_range[0] > self.duration_range[1] or self.duration_range[0] <= 0:
            raise ValueError(f"bad duration range {self.duration_range}")
        max_delay = max(self.delay_nondepressed, self.delay_depressed)
        min_frames = self.duration_range[0] * self.frame_rate
        if max_delay >= min_frames:
            raise ValueError(
                f"coupling delay {max_delay} does not fit into the shortest "
                f"recording ({min_frames:.0f} frames)"
            )


def _channel_names(n: int) -> tuple[str, ...]:
    if n == 8:
        return TV_CHANNELS + GLOTTAL_CHANNELS
    if n == 12:
        return tuple(f"mfcc{i:02d}" for i in range(1, 13))
    return tuple(f"ch{i:02d}" for i in range(n))


def _coupled_track(spec: SynthSpec, rng, n_frames: int, delay: int, speaker_gain: float) -> FeatureTrack:
    data = np.empty((spec.n_channels, n_frames))
    innovations = rng.standard_normal(n_frames)
    base = np.empty(n_frames)
    # start at the stationary distribution so early frames are typical
    base[0] = innovations[0] / np.sqrt(1.0 - AR_COEFF**2)
    for t in range(1, n_frames):
        base[t] = AR_COEFF * base[t - 1] + innovations[t]
    data[0] = base
    for j in range(1, spec.n_channels):
        prev = data[j - 1]
        noise_sd = spec.noise_level * prev.std()
        noise = noise_sd * rng.standard_normal(n_frames)
        data[j] = noise
        data[j, delay:] += speaker_gain * prev[: n_frames - delay]
    return FeatureTrack(
        data=data.astype(np.float32),
        frame_rate=spec.frame_rate,
        channel_names=_channel_names(spec.n_channels),
    )


def generate(
    spec: SynthSpec,
    secondary: SynthSpec | None = None,
) -> list[tuple[RecordingRecord, tuple[FeatureTrack, ...]]]:
    """Generate a labeled synthetic corpus.

    Returns (record, tracks) entries where ``tracks`` has one element, or two
    when ``secondary`` is given: the secondary spec reuses the primary's
    speakers, labels and durations but draws an independent signal (its own
    channel count, delays, gain, noise and seed), which is how fused-model
    corpora with two information sources are produced.
    """
    if secondary is not None:
        if secondary.speakers_per_class != spec.speakers_per_class or (
            secondary.recordings_per_speaker != spec.recordings_per_speaker
        ):
            raise ValueError("secondary spec must match the primary corpus layout")
    entries = []
    classes = (
        (Label.NON_DEPRESSED, spec.delay_nondepressed, "n"),
        (Label.DEPRESSED, spec.delay_depressed, "d"),
    )
    for class_idx, (label, delay, tag) in enumerate(classes):
        for s in range(spec.speakers_per_class):
            speaker_id = f"syn_{tag}{s:03d}"
            jitter_rng = np.random.default_rng(
                np.random.SeedSequence(entropy=spec.seed, spawn_key=(class_idx, s))
            )
            speaker_gain = spec.gain * (1.0 + jitter_rng.uniform(-0.1, 0.1))
            sec_gain = None
            if secondary is not None:
                sec_jitter = np.random.default_rng(
                    np.random.SeedSequence(entropy=secondary.seed, spawn_key=(class_idx, s))
                )
                sec_delay = (
                    secondary.delay_nondepressed
                    if label == Label.NON_DEPRESSED
                    else secondary.delay_depressed
                )
                sec_gain = secondary.gain * (1.0 + sec_jitter.uniform(-0.1, 0.1))
            for r in range(spec.recordings_per_speaker):
                structure_rng = np.random.default_rng(
                    np.random.SeedSequence(entropy=spec.seed, spawn_key=(class_idx, s, r, 0))
                )
                duration = structure_rng.uniform(*spec.duration_range)
                n_frames = int(round(duration * spec.frame_rate))
                signal_rng = np.random.default_rng(
                    np.random.SeedSequence(entropy=spec.seed, spawn_key=(class_idx, s, r, 1))
                )
                tracks = [_coupled_track(spec, signal_rng, n_frames, delay, speaker_gain)]
                if secondary is not None:
                    sec_rng = np.random.default_rng(
                        np.random.SeedSequence(entropy=secondary.seed, spawn_key=(class_idx, s, r, 2))
                    )
                    tracks.append(
                        _coupled_track(secondary, sec_rng, n_frames, sec_delay, sec_gain)
                    )
                score = _SCORE_DEPRESSED if label == Label.DEPRESSED else _SCORE_NORMAL
                record = RecordingRecord(
                    recording_id=f"{speaker_id}_r{r:02d}",
                    speaker_id=speaker_id,
                    database=Database.SYNTH,
                    path="",
                    scores=(ClinicalScore(Scale.HAMD, score),),
                    label=label,
                )
                entries.append((record, tuple(tracks)))
    return entries


def write_corpus(
    entries: list[tuple[RecordingRecord, tuple[FeatureTrack, ...]]],
    out_dir,
    stream_names: tuple[str, ...] = ("tv8",),
) -> Path:
    """Write feature files plus a manifest; returns the manifest path.

    Feature files are named ``<recording_id>.<stream>.acft``; the manifest
    path field points at the first stream's file, and sibling streams swap
    the suffix (the convention the featurizer resolves).
    """
    from . import featio

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    records = []
    for record, tracks in entries:
        if len(tracks) != len(stream_names):
            raise ValueError(f"{len(tracks)} tracks per entry but {len(stream_names)} stream names")
        for name, track in zip(stream_names, tracks):
            featio.write_track(out_dir / f"{record.recording_id}.{name}.acft", track)
        records.append(
            replace(record, path=f"{record.recording_id}.{stream_names[0]}.acft")
        )
    manifest = out_dir / "manifest.jsonl"
    write_manifest(manifest, records)
    return manifest
