"""Sample sets: segment-level correlation features ready for the classifier.

A SampleSet bundles one input array per model tower (raw, un-z-normalized
correlation matrices shaped (n, channels, delays+1, 1)) with labels and the
speaker/database/recording bookkeeping needed for disjoint splits and
per-database reporting.  Normalization against training statistics happens
inside the training and scoring paths, never here, so statistics cannot leak
across sets by construction.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .correlation import build_acf
from .dataset import DatasetSplit, RecordingRecord
from .features import FeatureTrack, Segment, normalize_channels, segment_track

FEATURE_MODES = ("tv8", "mfcc12", "fused")
# streams (input towers) per feature mode, in tower order
MODE_STREAMS = {"tv8": ("tv8",), "mfcc12": ("mfcc12",), "fused": ("tv8", "mfcc12")}


@dataclass
class SampleSet:
    inputs: tuple[np.ndarray, ...]  # one (n, C, D+1, 1) float32 array per tower
    labels: np.ndarray  # (n,) int8
    speakers: np.ndarray  # (n,) str
    databases: np.ndarray  # (n,) str
    recording_ids: np.ndarray  # (n,) str
    segment_ids: np.ndarray  # (n,) str

    def __post_init__(self):
        n = len(self.labels)
        for arr in self.inputs:
            if arr.shape[0] != n:
                raise ValueError(f"input stream has {arr.shape[0]} samples for {n} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def subset(self, mask) -> "SampleSet":
        mask = np.asarray(mask)
        return SampleSet(
            inputs=tuple(arr[mask] for arr in self.inputs),
            labels=self.labels[mask],
            speakers=self.speakers[mask],
            databases=self.databases[mask],
            recording_ids=self.recording_ids[mask],
            segment_ids=self.segment_ids[mask],
        )

    def by_recording_ids(self, ids) -> "SampleSet":
        wanted = set(ids)
        return self.subset(np.array([r in wanted for r in self.recording_ids]))

    def speaker_set(self) -> set[str]:
        return set(self.speakers.tolist())


def speaker_disjoint(*sets: SampleSet) -> bool:
    seen: set[str] = set()
    for s in sets:
        speakers = s.speaker_set()
        if seen & speakers:
            return False
        seen |= speakers
    return True


def split_sample_set(samples: SampleSet, split: DatasetSplit) -> tuple[SampleSet, SampleSet, SampleSet]:
    return tuple(samples.by_recording_ids(split.part(name)) for name in DatasetSplit.PART_NAMES)


def segment_features(
    track: FeatureTrack, label, recording_id: str, max_delay: int
) -> list[tuple[Segment, np.ndarray]]:
    """Normalize a recording track, segment it, and build one correlation
    matrix per segment.  Returns (segment, matrix data) pairs."""
    normalized = normalize_channels(track)
    out = []
    for seg in segment_track(normalized, label=label, recording_id=recording_id):
        acf = build_acf(seg.track, max_delay)
        out.append((seg, acf.data.astype(np.float32)))
    return out


def build_sample_set(
    entries: list[tuple[RecordingRecord, tuple[FeatureTrack, ...]]],
    max_delay: int,
) -> SampleSet:
    """Featurize in-memory recordings into a SampleSet.

    Each entry pairs a labeled record with one track per stream (one for
    single-tower modes, two for fused).  Tracks of one recording must
    segment identically, which holds whenever their frame rates and frame
    counts agree.
    """
    streams: list[list[np.ndarray]] = []
    labels, speakers, databases, rec_ids, seg_ids = [], [], [], [], []
    for record, tracks in entries:
        if record.label is None:
            raise ValueError(f"record {record.recording_id!r} is unlabeled")
        per_stream = [
            segment_features(t, record.label, record.recording_id, max_delay) for t in tracks
        ]
        counts = {len(p) for p in per_stream}
        if len(counts) != 1:
            raise ValueError(
                f"streams of {record.recording_id!r} produced different segment counts {counts}"
            )
        if not streams:
            streams = [[] for _ in per_stream]
        if len(streams) != len(per_stream):
            raise ValueError("entries have inconsistent stream counts")
        for k, (seg, _) in enumerate(per_stream[0]):
            for s, pairs in enumerate(per_stream):
                streams[s].append(pairs[k][1])
            labels.append(int(record.label))
            speakers.append(record.speaker_id)
            databases.append(str(getattr(record.database, "value", record.database)))
            rec_ids.append(record.recording_id)
            seg_ids.append(f"{record.recording_id}_s{k:03d}")
    if not labels:
        raise ValueError("no segments produced (all recordings too short?)")
    return SampleSet(
        inputs=tuple(np.stack(s)[..., None] for s in streams),
        labels=np.asarray(labels, dtype=np.int8),
        speakers=np.asarray(speakers),
        databases=np.asarray(databases),
        recording_ids=np.asarray(rec_ids),
        segment_ids=np.asarray(seg_ids),
    )


# --- segment index files (featurize output) -------------------------------


def write_segment_index(path, rows: list[dict]) -> None:
    lines = [json.dumps(row, sort_keys=True) for row in rows]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_segment_index(path) -> list[dict]:
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line:
            rows.append(json.loads(line))
    return rows


def load_sample_set(index_path, feature_mode: str, recording_ids=None) -> SampleSet:
    """Assemble a SampleSet from a featurize run's segment index.

    ``feature_mode`` selects which cached matrix files to read; fused needs
    both per-segment files.  Paths in the index are relative to its folder.
    """
    from .correlation import load_acf

    if feature_mode not in MODE_STREAMS:
        raise ValueError(f"unknown feature mode {feature_mode!r}, expected one of {FEATURE_MODES}")
    stream_names = MODE_STREAMS[feature_mode]
    base = Path(index_path).parent
    rows = read_segment_index(index_path)
    if recording_ids is not None:
        wanted = set(recording_ids)
        rows = [r for r in rows if r["recording_id"] in wanted]
    if not rows:
        raise ValueError(f"no segments selected from {index_path}")

    streams = [[] for _ in stream_names]
    labels, speakers, databases, rec_ids, seg_ids = [], [], [], [], []
    for row in rows:
        for s, name in enumerate(stream_names):
            if name not in row["files"]:
                raise ValueError(
                    f"segment {row['segment_id']!r} has no {name!r} features; "
                    f"re-run featurize with --feature-mode {feature_mode}"
                )
            streams[s].append(load_acf(base / row["files"][name]).data.astype(np.float32))
        labels.append(int(row["label"]))
        speakers.append(row["speaker_id"])
        databases.append(row["database"])
        rec_ids.append(row["recording_id"])
        seg_ids.append(row["segment_id"])
    return SampleSet(
        inputs=tuple(np.stack(s)[..., None] for s in streams),
        labels=np.asarray(labels, dtype=np.int8),
        speakers=np.asarray(speakers),
        databases=np.asarray(databases),
        recording_ids=np.asarray(rec_ids),
        segment_ids=np.asarray(seg_ids),
    )
