"""Evaluation metrics and reports.

AUC-ROC uses the rank-statistic formulation: the fraction of
(positive, negative) score pairs ranked correctly, ties counting one half.
F1 is reported once per class, treating each class in turn as the positive
one.  The decision threshold for accuracy/F1 defaults to 0.5 and never
affects AUC.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus import SampleSet
from .correlation import NormStats, apply_stats_array
from .dataset import Label

REPORT_COLUMNS = ("feats", "train", "test", "accuracy", "auc_roc", "f1_d", "f1_nd")


@dataclass
class ScoredSample:
    segment_id: str
    label: int
    score: float
    database: str = ""


@dataclass
class EvaluationReport:
    accuracy: float
    auc_roc: float
    f1_depressed: float
    f1_nondepressed: float
    tp: int
    fp: int
    tn: int
    fn: int
    n_depressed: int
    n_nondepressed: int
    threshold: float
    per_database: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = {
            "accuracy": self.accuracy,
            "auc_roc": self.auc_roc,
            "f1_depressed": self.f1_depressed,
            "f1_nondepressed": self.f1_nondepressed,
            "confusion": {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn},
            "n_depressed": self.n_depressed,
            "n_nondepressed": self.n_nondepressed,
            "threshold": self.threshold,
        }
        if self.per_database:
            d["per_database"] = {k: v.to_dict() for k, v in self.per_database.items()}
        return d

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n", encoding="utf-8")

    def table_row(self, feats: str, train_tag: str, test_tag: str) -> str:
        return "\t".join(
            [
                feats,
                train_tag,
                test_tag,
                f"{self.accuracy:.4f}",
                f"{self.auc_roc:.4f}",
                f"{self.f1_depressed:.4f}",
                f"{self.f1_nondepressed:.4f}",
            ]
        )

    @staticmethod
    def table_header() -> str:
        return "\t".join(REPORT_COLUMNS)


def auc_roc(labels, scores) -> float:
    """Probability a random depressed sample outscores a random
    non-depressed one, ties counted 0.5 (midrank formulation)."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    pos = labels == Label.DEPRESSED
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"AUC undefined: need both classes, got {n_pos} positive / {n_neg} negative")
    _, inverse, counts = np.unique(scores, return_inverse=True, return_counts=True)
    first_rank = np.concatenate(([0], np.cumsum(counts)[:-1])) + 1.0
    midranks = (first_rank + (counts - 1) / 2.0)[inverse]
    rank_sum = midranks[pos].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def _binary_f1(tp: int, fp: int, fn: int, class_name: str) -> float:
    if tp == 0 and fp == 0 and fn == 0:
        warnings.warn(f"F1({class_name}) undefined: no actual or predicted positives; reporting 0")
        return 0.0
    if tp == 0:
        return 0.0
    precision = tp / (tp + fp)
    recall = tp / (tp + fn)
    return 2.0 * precision * recall / (precision + recall)


def f1_per_class(labels, scores, threshold: float = 0.5) -> tuple[float, float]:
    """(F1 with depressed positive, F1 with non-depressed positive)."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise ValueError("cannot compute F1 on an empty set")
    preds = np.asarray(scores, dtype=np.float64) >= threshold
    actual = labels == Label.DEPRESSED
    tp = int(np.sum(preds & actual))
    fp = int(np.sum(preds & ~actual))
    fn = int(np.sum(~preds & actual))
    tn = int(np.sum(~preds & ~actual))
    return (
        _binary_f1(tp, fp, fn, "depressed"),
        _binary_f1(tn, fn, fp, "non-depressed"),
    )


def confusion_counts(labels, scores, threshold: float = 0.5) -> tuple[int, int, int, int]:
    """(TP, FP, TN, FN) with the depressed class as positive."""
    labels = np.asarray(labels)
    preds = np.asarray(scores, dtype=np.float64) >= threshold
    actual = labels == Label.DEPRESSED
    return (
        int(np.sum(preds & actual)),
        int(np.sum(preds & ~actual)),
        int(np.sum(~preds & ~actual)),
        int(np.sum(~preds & actual)),
    )


def report_from_scores(labels, scores, threshold: float = 0.5) -> EvaluationReport:
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if labels.size == 0:
        raise ValueError("cannot evaluate an empty set")
    tp, fp, tn, fn = confusion_counts(labels, scores, threshold)
    f1_d, f1_nd = f1_per_class(labels, scores, threshold)
    return EvaluationReport(
        accuracy=(tp + tn) / labels.size,
        auc_roc=auc_roc(labels, scores),
        f1_depressed=f1_d,
        f1_nondepressed=f1_nd,
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        n_depressed=int(np.sum(labels == Label.DEPRESSED)),
        n_nondepressed=int(np.sum(labels != Label.DEPRESSED)),
        threshold=threshold,
    )


def score_samples(
    model,
    samples: SampleSet,
    norm_stats: list[NormStats],
    batch_size: int = 256,
) -> np.ndarray:
    """Eval-mode scores in [0, 1], one per segment.

    Inputs are z-normalized stream-by-stream against the supplied training
    statistics before the forward pass.
    """
    if len(norm_stats) != len(samples.inputs):
        raise ValueError(f"{len(norm_stats)} stat sets for {len(samples.inputs)} input streams")
    n = len(samples)
    scores = np.empty(n, dtype=np.float64)
    for start in range(0, n, batch_size):
        stop = min(start + batch_size, n)
        batch = [
            apply_stats_array(arr[start:stop], stats)
            for arr, stats in zip(samples.inputs, norm_stats)
        ]
        scores[start:stop] = model.forward(batch, train=False).reshape(-1)
    return scores


def evaluate(
    model,
    samples: SampleSet,
    norm_stats: list[NormStats],
    threshold: float = 0.5,
    per_recording: bool = False,
    batch_size: int = 256,
) -> EvaluationReport:
    """Score a sample set and compute the full report.

    The default evaluation unit is the segment.  ``per_recording`` instead
    averages segment scores within each recording first (experimental; the
    protocol reports segment-level numbers).  The report carries a
    per-database breakdown whenever more than one database tag is present.
    """
    if len(samples) == 0:
        raise ValueError("cannot evaluate an empty sample set")
    scores = score_samples(model, samples, norm_stats, batch_size=batch_size)
    labels = samples.labels
    groups = samples.databases

    if per_recording:
        rec_ids, first = np.unique(samples.recording_ids, return_index=True)
        agg_scores = np.array([scores[samples.recording_ids == r].mean() for r in rec_ids])
        labels = samples.labels[first]
        groups = samples.databases[first]
        scores = agg_scores

    report = report_from_scores(labels, scores, threshold)
    tags = sorted(set(groups.tolist()))
    if len(tags) > 1:
        for tag in tags:
            mask = groups == tag
            try:
                report.per_database[tag] = report_from_scores(labels[mask], scores[mask], threshold)
            except ValueError:
                # single-class subsets have no defined AUC; skip the breakdown row
                continue
    return report
