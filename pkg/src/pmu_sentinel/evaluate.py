"""Precision, recall and F1 of detections against injected ground truth."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ._validation import check_int
from .exceptions import AlignmentError, IntegrityError
from .inject import AnomalyMask

TABLE_COLUMNS = ("model", "noise_filtration", "recall", "precision", "f1")


@dataclass(frozen=True)
class ConfusionCounts:
    true_positives: int
    false_positives: int
    false_negatives: int
    true_negatives: int

    @property
    def total(self):
        return self.true_positives + self.false_positives + self.false_negatives + self.true_negatives


def _truth_flags(mask):
    if isinstance(mask, AnomalyMask):
        return mask.flags
    return np.asarray(mask, dtype=bool)


def _dilate(flags, w):
    if w == 0:
        return flags
    # count of true samples in [i - w, i + w] from a prefix sum
    n = flags.size
    csum = np.concatenate([[0], np.cumsum(flags, dtype=np.int64)])
    idx = np.arange(n)
    hi = np.minimum(idx + w + 1, n)
    lo = np.maximum(idx - w, 0)
    return (csum[hi] - csum[lo]) > 0


def confusion(flags, mask, tolerance=0) -> ConfusionCounts:
    """Pointwise confusion counts.

    With ``tolerance`` w > 0, a flagged sample within w samples of any true
    anomalous sample counts as a true positive. Ground-truth samples are not
    consumed, so several flags may match the same anomaly. Unflagged samples
    are false negatives when anomalous and true negatives otherwise.
    """
    flags = np.asarray(flags, dtype=bool).reshape(-1)
    truth = _truth_flags(mask).reshape(-1)
    if flags.shape != truth.shape:
        raise AlignmentError(f"{flags.size} flags vs {truth.size} ground-truth samples")
    w = check_int(tolerance, "tolerance", minimum=0)
    near = _dilate(truth, w)
    tp = int(np.sum(flags & near))
    fp = int(np.sum(flags & ~near))
    fn = int(np.sum(~flags & truth))
    tn = int(np.sum(~flags & ~truth))
    return ConfusionCounts(tp, fp, fn, tn)


def precision(counts: ConfusionCounts) -> float:
    """TP / (TP + FP); 0 when nothing was flagged."""
    denom = counts.true_positives + counts.false_positives
    return counts.true_positives / denom if denom else 0.0


def recall(counts: ConfusionCounts) -> float:
    """TP / (TP + FN); 0 when there is nothing to find."""
    denom = counts.true_positives + counts.false_negatives
    return counts.true_positives / denom if denom else 0.0


def f1(counts: ConfusionCounts) -> float:
    p, r = precision(counts), recall(counts)
    return 2.0 * p * r / (p + r) if p + r > 0 else 0.0


def episode_hits(flags, mask: AnomalyMask, tolerance=0):
    """Per episode, whether any flag falls inside it (widened by ``tolerance``)."""
    flags = np.asarray(flags, dtype=bool).reshape(-1)
    hits = []
    for s, e in mask.episodes:
        lo, hi = max(0, s - tolerance), min(flags.size, e + tolerance)
        hits.append(bool(flags[lo:hi].any()))
    return np.array(hits, dtype=bool)


@dataclass
class EvalReport:
    """Metrics of one run, stored as percentages like the published table."""

    model: str
    noise_filtration: bool
    precision: float
    recall: float
    f1: float
    counts: ConfusionCounts
    config: dict = field(default_factory=dict)

    @classmethod
    def from_counts(cls, model, noise_filtration, counts, config=None):
        return cls(model, bool(noise_filtration), 100.0 * precision(counts), 100.0 * recall(counts),
                   100.0 * f1(counts), counts, dict(config or {}))

    def check(self):
        """Raise :class:`IntegrityError` if the metrics disagree with the counts."""
        for name, fn in (("precision", precision), ("recall", recall), ("f1", f1)):
            if abs(getattr(self, name) - 100.0 * fn(self.counts)) > 1e-9:
                raise IntegrityError(f"report {name}={getattr(self, name)} inconsistent with counts {self.counts}")
        return self

    def to_dict(self):
        d = asdict(self)
        d["counts"] = asdict(self.counts)
        d["zero_denominator_policy"] = "metric is 0 when its denominator is 0"
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(d["model"], bool(d["noise_filtration"]), float(d["precision"]), float(d["recall"]),
                   float(d["f1"]), ConfusionCounts(**d["counts"]), dict(d.get("config", {})))

    def save_json(self, path):
        self.check()
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def table_row(self):
        return (self.model, "yes" if self.noise_filtration else "no",
                f"{self.recall:.2f}", f"{self.precision:.2f}", f"{self.f1:.2f}")


def write_table_csv(reports, path):
    """Rows shaped like the published results table."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(TABLE_COLUMNS) + "\n")
        for rep in reports:
            rep.check()
            fh.write(",".join(rep.table_row()) + "\n")


@dataclass(frozen=True)
class ReferenceRow:
    model: str
    noise_filtration: bool
    recall: float
    precision: float
    f1: float


_REFERENCE = (
    ReferenceRow("CNN", True, 94.67, 87.65, 91.03),
    ReferenceRow("CNN", False, 86.67, 94.20, 90.28),
    ReferenceRow("LSTM", True, 90.38, 94.0, 92.16),
    ReferenceRow("LSTM", False, 91.23, 69.33, 78.79),
    ReferenceRow("BiLSTM", True, 94.05, 98.75, 96.34),
    ReferenceRow("BiLSTM", False, 82.0, 91.11, 86.32),
    ReferenceRow("CLSTM", True, 97.50, 96.30, 96.89),
    ReferenceRow("CLSTM", False, 94.12, 96.0, 95.05),
)


def reference_table():
    """Published results (percent) on the real PMU dataset, for side-by-side reports."""
    return list(_REFERENCE)


def reference_row(model, noise_filtration):
    for row in _REFERENCE:
        if row.model == model and row.noise_filtration == bool(noise_filtration):
            return row
    return None
