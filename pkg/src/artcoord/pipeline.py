"""Manifest-driven featurization: recordings on disk to cached correlation
matrices plus a segment index.

A manifest row names one primary file per recording; sibling files share the
recording's stem so the featurizer can resolve whatever combination a feature
mode needs:

    <stem>.wav          8 kHz mono PCM audio
    <stem>.tv.acft      6-channel vocal-tract-variable track
    <stem>.tv8.acft     8-channel track (TVs + glottal, preassembled)
    <stem>.mfcc12.acft  12-channel cepstral track

tv8 features come from a preassembled 8-channel file, or from a TV file plus
the audio (glottal channels are computed from the waveform).  mfcc12 features
come from a precomputed 12-channel file or from the audio.
"""

from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .audio import read_wav
from .corpus import MODE_STREAMS, segment_features
from .dataset import RecordingRecord
from .features import FeatureTrack, assemble_tv8, load_tv_track
from .glottal import estimate_glottal_tracks
from .mfcc import compute_mfcc

logger = logging.getLogger(__name__)

_KNOWN_SUFFIXES = (".tv8.acft", ".mfcc12.acft", ".tv.acft", ".wav")


def atomic_write_bytes(path, data: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def recording_stem(path: Path) -> Path:
    name = path.name
    for suffix in _KNOWN_SUFFIXES:
        if name.endswith(suffix):
            return path.with_name(name[: -len(suffix)])
    return path.with_suffix("")


def resolve_stream_track(record_path: Path, stream: str) -> FeatureTrack:
    """Produce the feature track of one stream for a recording."""
    from . import featio

    stem = recording_stem(record_path)
    if stream == "tv8":
        preassembled = stem.with_name(stem.name + ".tv8.acft")
        if preassembled.exists():
            track = featio.read_track(preassembled)
            if track.n_channels != 8:
                raise ValueError(f"{preassembled} has {track.n_channels} channels, expected 8")
            return track
        tv_path = stem.with_name(stem.name + ".tv.acft")
        wav_path = stem.with_name(stem.name + ".wav")
        if tv_path.exists() and wav_path.exists():
            return assemble_tv8(load_tv_track(tv_path), estimate_glottal_tracks(read_wav(wav_path)))
        raise FileNotFoundError(
            f"cannot produce tv8 features for {record_path}: need {preassembled.name} "
            f"or {tv_path.name} + {wav_path.name}"
        )
    if stream == "mfcc12":
        precomputed = stem.with_name(stem.name + ".mfcc12.acft")
        if precomputed.exists():
            track = featio.read_track(precomputed)
            if track.n_channels != 12:
                raise ValueError(f"{precomputed} has {track.n_channels} channels, expected 12")
            return track
        wav_path = stem.with_name(stem.name + ".wav")
        if wav_path.exists():
            return compute_mfcc(read_wav(wav_path))
        raise FileNotFoundError(
            f"cannot produce mfcc12 features for {record_path}: need {precomputed.name} "
            f"or {wav_path.name}"
        )
    raise ValueError(f"unknown stream {stream!r}")


@dataclass
class FeaturizeOutcome:
    rows: list[dict]
    n_segments: int
    error: str | None = None


def featurize_record(
    record: RecordingRecord,
    manifest_dir: Path,
    out_dir: Path,
    feature_mode: str,
    max_delay: int,
) -> FeaturizeOutcome:
    """Featurize one labeled recording into per-segment matrix files.

    Returns index rows; an empty row list with no error means the recording
    was shorter than the minimum segment length.
    """
    from . import featio
    from .correlation import acf_to_track
    from .correlation import ChannelDelayCorrelationMatrix

    try:
        record_path = manifest_dir / record.path
        streams = MODE_STREAMS[feature_mode]
        per_stream = []
        for stream in streams:
            track = resolve_stream_track(record_path, stream)
            per_stream.append(segment_features(track, record.label, record.recording_id, max_delay))
        counts = {len(p) for p in per_stream}
        if len(counts) != 1:
            raise ValueError(f"streams produced different segment counts {counts}")
        rows = []
        for k, (seg, _) in enumerate(per_stream[0]):
            segment_id = f"{record.recording_id}_s{k:03d}"
            files = {}
            for stream, pairs in zip(streams, per_stream):
                m = int(round(pairs[k][1].shape[0] ** 0.5))
                acf = ChannelDelayCorrelationMatrix(
                    data=pairs[k][1], n_channels=m, max_delay=max_delay
                )
                filename = f"{segment_id}.{stream}.acft"
                atomic_write_bytes(out_dir / filename, featio.track_to_bytes(acf_to_track(acf)))
                files[stream] = filename
            rows.append(
                {
                    "segment_id": segment_id,
                    "recording_id": record.recording_id,
                    "speaker_id": record.speaker_id,
                    "database": str(getattr(record.database, "value", record.database)),
                    "label": int(record.label),
                    "start": seg.start_time,
                    "end": seg.end_time,
                    "files": files,
                }
            )
        return FeaturizeOutcome(rows=rows, n_segments=len(rows))
    except Exception as exc:  # per-file failures must not kill the run
        return FeaturizeOutcome(rows=[], n_segments=0, error=f"{record.recording_id}: {exc}")


def run_featurize(
    records: list[RecordingRecord],
    manifest_dir: Path,
    out_dir: Path,
    feature_mode: str,
    max_delay: int,
    jobs: int = 1,
) -> tuple[list[dict], list[str]]:
    """Featurize all records; returns (index rows, error strings)."""
    out_dir.mkdir(parents=True, exist_ok=True)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(
                pool.map(
                    featurize_record,
                    records,
                    [manifest_dir] * len(records),
                    [out_dir] * len(records),
                    [feature_mode] * len(records),
                    [max_delay] * len(records),
                )
            )
    else:
        outcomes = [
            featurize_record(r, manifest_dir, out_dir, feature_mode, max_delay) for r in records
        ]
    rows: list[dict] = []
    errors: list[str] = []
    for record, outcome in zip(records, outcomes):
        if outcome.error is not None:
            errors.append(outcome.error)
            logger.error("featurize failed: %s", outcome.error)
        elif outcome.n_segments == 0:
            logger.warning(
                "recording %s produced no segments (shorter than the minimum)",
                record.recording_id,
            )
        rows.extend(outcome.rows)
    return rows, errors
