"""Clinical score mapping, recording manifests, splits, and class weights.

Two clinician-rated scales are supported.  Each maps onto five severity
levels; level 1 is the non-depressed category and levels 2-5 collapse into
the depressed category.  Recordings scored on both scales are kept only when
the two scores agree (strictly, on the severity level; optionally only on the
binary category).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum, IntEnum
from pathlib import Path

import numpy as np


class Scale(str, Enum):
    HAMD = "HAMD"
    QIDS = "QIDS"


class SeverityLevel(IntEnum):
    NORMAL = 1
    MILD = 2
    MODERATE = 3
    SEVERE = 4
    VERY_SEVERE = 5


class Label(IntEnum):
    NON_DEPRESSED = 0
    DEPRESSED = 1


class Database(str, Enum):
    MD1 = "MD1"
    MD2 = "MD2"
    SYNTH = "SYNTH"


# Inclusive score bands per scale, indexed by severity level 1..5.
SEVERITY_BANDS = {
    Scale.HAMD: ((0, 7), (8, 13), (14, 18), (19, 22), (23, 52)),
    Scale.QIDS: ((0, 5), (6, 10), (11, 15), (16, 20), (21, 27)),
}


@dataclass(frozen=True)
class ClinicalScore:
    scale: Scale
    value: int


@dataclass
class RecordingRecord:
    recording_id: str
    speaker_id: str
    database: Database
    path: str
    scores: tuple[ClinicalScore, ...] = ()
    label: Label | None = None


@dataclass
class ClassWeights:
    depressed: float
    non_depressed: float

    def for_label(self, label: int) -> float:
        return self.depressed if label == Label.DEPRESSED else self.non_depressed

    def as_array(self, labels: np.ndarray) -> np.ndarray:
        labels = np.asarray(labels)
        return np.where(labels == Label.DEPRESSED, self.depressed, self.non_depressed)


@dataclass
class DatasetSplit:
    train: tuple[str, ...]
    validation: tuple[str, ...]
    test: tuple[str, ...]
    ratios: tuple[float, float, float]
    seed: int

    PART_NAMES = ("train", "validation", "test")

    def part(self, name: str) -> tuple[str, ...]:
        if name not in self.PART_NAMES:
            raise ValueError(f"unknown split part {name!r}, expected one of {self.PART_NAMES}")
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {
            "train": list(self.train),
            "validation": list(self.validation),
            "test": list(self.test),
            "ratios": list(self.ratios),
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetSplit":
        return cls(
            train=tuple(d["train"]),
            validation=tuple(d["validation"]),
            test=tuple(d["test"]),
            ratios=tuple(d["ratios"]),
            seed=int(d["seed"]),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "DatasetSplit":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def score_to_severity(score: ClinicalScore) -> SeverityLevel:
    """Map a clinical score onto its severity level (band bounds inclusive)."""
    bands = SEVERITY_BANDS[Scale(score.scale)]
    for level, (lo, hi) in zip(SeverityLevel, bands):
        if lo <= score.value <= hi:
            return level
    top = bands[-1][1]
    raise ValueError(f"{Scale(score.scale).value} score {score.value} outside valid range 0..{top}")


def assign_label(record: RecordingRecord, binary_agreement: bool = False) -> Label | None:
    """Derive the binary label from a record's clinical scores.

    Single score: severity level 1 is non-depressed, levels 2-5 depressed.
    Two scores: a label is assigned only when both agree; by default they
    must land on the same severity level, with ``binary_agreement`` they only
    need the same binary category.  Disagreement returns None (the record is
    excluded rather than guessed at).
    """
    if not record.scores:
        raise ValueError(f"record {record.recording_id!r} has no clinical scores")
    levels = [score_to_severity(s) for s in record.scores]
    if len(levels) == 1:
        return _level_to_label(levels[0])
    if len(levels) != 2:
        raise ValueError(f"record {record.recording_id!r} has {len(levels)} scores, expected 1 or 2")
    if binary_agreement:
        labels = {_level_to_label(lv) for lv in levels}
        return labels.pop() if len(labels) == 1 else None
    if levels[0] == levels[1]:
        return _level_to_label(levels[0])
    return None


def _level_to_label(level: SeverityLevel) -> Label:
    return Label.NON_DEPRESSED if level == SeverityLevel.NORMAL else Label.DEPRESSED


def label_records(
    records: list[RecordingRecord], binary_agreement: bool = False
) -> tuple[list[RecordingRecord], list[RecordingRecord]]:
    """Split records into (labeled, excluded) after applying the agreement rule."""
    labeled, excluded = [], []
    for rec in records:
        label = assign_label(rec, binary_agreement=binary_agreement)
        if label is None:
            excluded.append(rec)
        else:
            labeled.append(replace(rec, label=label))
    return labeled, excluded


def class_weights(train_labels) -> ClassWeights:
    """Balanced inverse-frequency weights: w_c = N / (2 * N_c).

    With these weights the two classes contribute equal total weight, i.e.
    w_d * N_d == w_nd * N_nd.
    """
    labels = np.asarray(list(train_labels))
    n = labels.size
    n_dep = int(np.sum(labels == Label.DEPRESSED))
    n_non = n - n_dep
    if n_dep == 0 or n_non == 0:
        raise ValueError(f"both classes must be present, got {n_dep} depressed / {n_non} non-depressed")
    return ClassWeights(depressed=n / (2.0 * n_dep), non_depressed=n / (2.0 * n_non))


def make_split(
    records: list[RecordingRecord],
    ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
    seed: int = 0,
    weights: dict[str, float] | None = None,
) -> DatasetSplit:
    """Speaker-disjoint train/validation/test split with class stratification.

    Speakers are atomic: every recording of a speaker lands in the same part.
    Assignment is greedy: speakers are visited in descending order of total
    sample weight (seed-shuffled before the stable sort, so ties break
    reproducibly but differently across seeds) and each goes to the part that
    minimizes the total absolute deviation from the per-class targets, with
    the largest remaining part deficit as tie-breaker.

    ``weights`` optionally maps recording_id to a sample count (e.g. segment
    counts once segmentation is known); the default weighs each recording 1.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be three non-negative values summing to 1, got {ratios}")
    for rec in records:
        if rec.label is None:
            raise ValueError(f"record {rec.recording_id!r} is unlabeled; label records before splitting")

    def weight_of(rec):
        w = 1.0 if weights is None else float(weights.get(rec.recording_id, 1.0))
        if w <= 0:
            raise ValueError(f"non-positive weight for record {rec.recording_id!r}")
        return w

    speakers: dict[str, list[RecordingRecord]] = {}
    for rec in records:
        speakers.setdefault(rec.speaker_id, []).append(rec)
    if len(speakers) < 3:
        raise ValueError(f"infeasible split: need at least 3 distinct speakers, got {len(speakers)}")

    # per-speaker weight per class, and overall class totals
    spk_w = {
        spk: np.array(
            [
                sum(weight_of(r) for r in recs if r.label == Label.NON_DEPRESSED),
                sum(weight_of(r) for r in recs if r.label == Label.DEPRESSED),
            ]
        )
        for spk, recs in speakers.items()
    }
    totals = sum(spk_w.values())
    targets = np.outer(np.asarray(ratios), totals)  # (3 parts, 2 classes)

    rng = np.random.default_rng(seed)
    order = list(speakers)
    rng.shuffle(order)
    order.sort(key=lambda s: -spk_w[s].sum())  # stable: shuffle breaks ties

    current = np.zeros((3, 2))
    assignment: dict[str, int] = {}
    for spk in order:
        best_part, best_key = None, None
        for part in range(3):
            trial = current.copy()
            trial[part] += spk_w[spk]
            deviation = np.abs(trial - targets).sum()
            deficit = targets[part].sum() - current[part].sum()
            key = (deviation, -deficit, part)
            if best_key is None or key < best_key:
                best_part, best_key = part, key
        assignment[spk] = best_part
        current[best_part] += spk_w[spk]

    parts: tuple[list[str], list[str], list[str]] = ([], [], [])
    for rec in records:
        parts[assignment[rec.speaker_id]].append(rec.recording_id)
    return DatasetSplit(
        train=tuple(parts[0]),
        validation=tuple(parts[1]),
        test=tuple(parts[2]),
        ratios=tuple(ratios),
        seed=seed,
    )


def verify_speaker_disjoint(split: DatasetSplit, records: list[RecordingRecord]) -> None:
    """Raise if any speaker contributes to more than one split part."""
    by_id = {rec.recording_id: rec.speaker_id for rec in records}
    speaker_sets = []
    for name in DatasetSplit.PART_NAMES:
        ids = split.part(name)
        speaker_sets.append({by_id[i] for i in ids if i in by_id})
    for i in range(3):
        for j in range(i + 1, 3):
            shared = speaker_sets[i] & speaker_sets[j]
            if shared:
                raise ValueError(
                    f"speakers {sorted(shared)} appear in both "
                    f"{DatasetSplit.PART_NAMES[i]} and {DatasetSplit.PART_NAMES[j]}"
                )


# --- manifest files: one JSON object per line, UTF-8 ---------------------


def read_manifest(path) -> list[RecordingRecord]:
    """Read a line-delimited manifest of recordings.

    Fields per line: recording_id, speaker_id, database, path, and optional
    integer hamd / qids scores.
    """
    records = []
    seen = set()
    for line_no, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}:{line_no}: invalid manifest line: {exc}") from exc
        missing = {"recording_id", "speaker_id", "database", "path"} - obj.keys()
        if missing:
            raise ValueError(f"{path}:{line_no}: missing fields {sorted(missing)}")
        rid = str(obj["recording_id"])
        if rid in seen:
            raise ValueError(f"{path}:{line_no}: duplicate recording_id {rid!r}")
        seen.add(rid)
        scores = []
        if obj.get("hamd") is not None:
            scores.append(ClinicalScore(Scale.HAMD, int(obj["hamd"])))
        if obj.get("qids") is not None:
            scores.append(ClinicalScore(Scale.QIDS, int(obj["qids"])))
        records.append(
            RecordingRecord(
                recording_id=rid,
                speaker_id=str(obj["speaker_id"]),
                database=Database(obj["database"]),
                path=str(obj["path"]),
                scores=tuple(scores),
            )
        )
    return records


def write_manifest(path, records: list[RecordingRecord]) -> None:
    lines = []
    for rec in records:
        obj = {
            "recording_id": rec.recording_id,
            "speaker_id": rec.speaker_id,
            "database": Database(rec.database).value,
            "path": rec.path,
        }
        for score in rec.scores:
            obj["hamd" if score.scale == Scale.HAMD else "qids"] = score.value
        lines.append(json.dumps(obj, sort_keys=True))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
