"""Confusion matrices, per-class metrics, and window-length sweeps."""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from sklearn.base import clone

from .classifiers import CvPlan, RandomForestClassifier, cross_val_predict, grid_search_cv
from .descriptors import ThresholdPolicy, extract_dataset
from .io_utils import atomic_write_text
from .motion import MotionSequence, WindowSpec


class EvaluationError(ValueError):
    pass


@dataclass
class ConfusionMatrix:
    """Rows are true classes, columns predicted classes."""

    classes: list
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.int64)
        n = len(self.classes)
        if self.counts.shape != (n, n):
            raise EvaluationError(f"counts must be {n}x{n}, got {self.counts.shape}")
        if (self.counts < 0).any():
            raise EvaluationError("counts must be non-negative")

    @classmethod
    def from_labels(cls, y_true, y_pred, classes: Sequence | None = None) -> "ConfusionMatrix":
        y_true = np.asarray(y_true, dtype=object)
        y_pred = np.asarray(y_pred, dtype=object)
        if classes is None:
            classes = sorted(set(y_true.tolist()) | set(y_pred.tolist()), key=str)
        index = {c: i for i, c in enumerate(classes)}
        counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
        for t, p in zip(y_true.tolist(), y_pred.tolist()):
            counts[index[t], index[p]] += 1
        return cls(list(classes), counts)

    @property
    def n_classes(self) -> int:
        return len(self.classes)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.counts)) / self.total

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["true\\pred"] + list(self.classes))
        for c, row in zip(self.classes, self.counts):
            w.writerow([c] + row.tolist())
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text

    def to_svg(self, path: str | os.PathLike | None = None, cell: int = 36) -> str:
        n = self.n_classes
        margin = 110
        size = margin + n * cell + 20
        row_sums = self.counts.sum(axis=1, keepdims=True)
        frac = self.counts / np.where(row_sums > 0, row_sums, 1)
        parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
                 'font-family="sans-serif" font-size="10">']
        for i, c in enumerate(self.classes):
            parts.append(f'<text x="{margin - 6}" y="{margin + i * cell + cell / 2 + 3}" '
                         f'text-anchor="end">{c}</text>')
            parts.append(f'<text x="{margin + i * cell + cell / 2}" y="{margin - 6}" '
                         f'text-anchor="start" transform="rotate(-60 {margin + i * cell + cell / 2} '
                         f'{margin - 6})">{c}</text>')
            for j in range(n):
                shade = int(255 * (1 - frac[i, j]))
                parts.append(f'<rect x="{margin + j * cell}" y="{margin + i * cell}" width="{cell}" '
                             f'height="{cell}" fill="rgb({shade},{shade},255)" stroke="#fff"/>')
                parts.append(f'<text x="{margin + j * cell + cell / 2}" y="{margin + i * cell + cell / 2 + 3}" '
                             f'text-anchor="middle">{self.counts[i, j]}</text>')
        parts.append("</svg>")
        text = "\n".join(parts) + "\n"
        if path is not None:
            atomic_write_text(path, text)
        return text


@dataclass
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int
    flags: tuple = ()


@dataclass
class MetricsReport:
    per_class: dict
    macro_precision: float
    macro_recall: float
    macro_f1: float
    accuracy: float

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1", "support", "flags"])
        for c, m in self.per_class.items():
            w.writerow([c, repr(m.precision), repr(m.recall), repr(m.f1), m.support, ";".join(m.flags)])
        support = sum(m.support for m in self.per_class.values())
        w.writerow(["macro_average", repr(self.macro_precision), repr(self.macro_recall),
                    repr(self.macro_f1), support, ""])
        w.writerow(["accuracy", "", "", repr(self.accuracy), support, ""])
        text = buf.getvalue()
        if path is not None:
            atomic_write_text(path, text)
        return text


def per_class_metrics(cm: ConfusionMatrix) -> MetricsReport:
    """Precision, recall and F1 per class, their unweighted means, and accuracy.

    A class never predicted gets precision 0, a class never present gets
    recall 0; both cases are flagged.
    """
    if cm.n_classes == 0 or cm.total == 0:
        raise EvaluationError("confusion matrix is empty")
    counts = cm.counts
    out = {}
    for i, c in enumerate(cm.classes):
        tp = counts[i, i]
        predicted = counts[:, i].sum()
        actual = counts[i, :].sum()
        flags = []
        if predicted == 0:
            precision = 0.0
            flags.append("never_predicted")
        else:
            precision = tp / predicted
        if actual == 0:
            recall = 0.0
            flags.append("no_true_samples")
        else:
            recall = tp / actual
        f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
        out[c] = ClassMetrics(float(precision), float(recall), float(f1), int(actual), tuple(flags))
    return MetricsReport(out,
                         float(np.mean([m.precision for m in out.values()])),
                         float(np.mean([m.recall for m in out.values()])),
                         float(np.mean([m.f1 for m in out.values()])),
                         cm.accuracy)


def sequence_vote_accuracy(y_true, y_pred, groups) -> float:
    """Accuracy after a majority vote over the windows of each sequence
    (ties go to the alphabetically first label)."""
    y_true = np.asarray(y_true, dtype=object)
    y_pred = np.asarray(y_pred, dtype=object)
    groups = np.asarray(groups, dtype=object)
    hits = []
    for g in sorted(set(groups.tolist()), key=str):
        sel = groups == g
        labels, counts = np.unique(y_pred[sel].astype(str), return_counts=True)
        vote = labels[np.argmax(counts)]
        truth = np.unique(y_true[sel].astype(str))
        hits.append(len(truth) == 1 and vote == truth[0])
    return float(np.mean(hits))


# ---------------------------------------------------------------- window sweep

@dataclass
class TrainingConfig:
    estimator: object = field(default_factory=lambda: RandomForestClassifier(n_trees=100))
    grid: Mapping[str, Sequence] = field(default_factory=dict)
    folds: int = 3
    seed: int = 0
    stride: int = 1
    sub_window: int = 5
    threshold_multiplier: float = 1.0
    n_jobs: int = 1

    def window_spec(self, length: int) -> WindowSpec:
        return WindowSpec(length, self.stride, max(1, min(self.sub_window, length - 1)))


def cv_accuracy(X, y, groups, config: TrainingConfig) -> float:
    """Mean validation accuracy over grouped folds; with a grid, that of the best cell."""
    y = np.asarray(y)
    plan = CvPlan.grouped(groups, y, config.folds, config.seed)
    if config.grid:
        result = grid_search_cv(config.estimator, X, y, config.grid, plan, config.n_jobs)
        return result.best_score
    scores = []
    for train, val in plan.splits():
        model = clone(config.estimator).fit(X[train], y[train])
        scores.append(float(np.mean(model.predict(X[val]) == y[val])))
    return float(np.mean(scores))


@dataclass
class SweepRow:
    length: int
    accuracy: float
    n_windows: int
    feasible: bool


def window_sweep(sequences: Sequence[MotionSequence], lengths: Sequence[int],
                 config: TrainingConfig = TrainingConfig()) -> list[SweepRow]:
    """Re-extract features and re-run grouped CV for each window length."""
    rows = []
    longest = max(s.n_frames for s in sequences)
    for length in sorted(set(int(n) for n in lengths)):
        if length < 2 or length > longest:
            rows.append(SweepRow(length, float("nan"), 0, False))
            continue
        table = extract_dataset(sequences, config.window_spec(length),
                                ThresholdPolicy(config.threshold_multiplier), config.n_jobs)
        y = np.asarray(table.labels, dtype=object)
        try:
            acc = cv_accuracy(table.X, y, table.groups, config)
        except ValueError:
            rows.append(SweepRow(length, float("nan"), len(table), False))
            continue
        rows.append(SweepRow(length, acc, len(table), True))
    return rows


def sweep_csv(rows: Sequence[SweepRow], path: str | os.PathLike | None = None) -> str:
    lines = ["window_length,mean_cv_accuracy,n_windows,feasible"]
    for r in rows:
        acc = "" if not r.feasible else repr(r.accuracy)
        lines.append(f"{r.length},{acc},{r.n_windows},{str(r.feasible).lower()}")
    text = "\n".join(lines) + "\n"
    if path is not None:
        atomic_write_text(path, text)
    return text


def sweep_svg(rows: Sequence[SweepRow], path: str | os.PathLike | None = None) -> str:
    pts = [(r.length, r.accuracy) for r in rows if r.feasible]
    width, height, pad = 480, 320, 50
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             'font-family="sans-serif" font-size="11">',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad / 2}" y2="{height - pad}" stroke="#000"/>',
             f'<line x1="{pad}" y1="{pad / 2}" x2="{pad}" y2="{height - pad}" stroke="#000"/>',
             f'<text x="{width / 2}" y="{height - 12}" text-anchor="middle">window length (frames)</text>',
             f'<text x="14" y="{height / 2}" transform="rotate(-90 14 {height / 2})" '
             'text-anchor="middle">mean CV accuracy</text>']
    if pts:
        xs = [p[0] for p in pts]
        lo, hi = min(xs), max(xs)
        span = hi - lo if hi > lo else 1

        def px(x):
            return pad + (x - lo) / span * (width - 1.5 * pad)

        def py(a):
            return height - pad - a * (height - 1.5 * pad)

        coords = " ".join(f"{px(x):.1f},{py(a):.1f}" for x, a in pts)
        parts.append(f'<polyline points="{coords}" fill="none" stroke="#c33" stroke-width="2"/>')
        for x, a in pts:
            parts.append(f'<circle cx="{px(x):.1f}" cy="{py(a):.1f}" r="3" fill="#c33"/>')
            parts.append(f'<text x="{px(x):.1f}" y="{height - pad + 14}" text-anchor="middle">{x}</text>')
        for a in (0.0, 0.5, 1.0):
            parts.append(f'<text x="{pad - 6}" y="{py(a) + 4:.1f}" text-anchor="end">{a:.1f}</text>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        atomic_write_text(path, text)
    return text


def out_of_fold_predictions(X, y, groups, estimator, folds: int = 3, seed: int = 0) -> np.ndarray:
    y = np.asarray(y)
    return cross_val_predict(estimator, X, y, CvPlan.grouped(groups, y, folds, seed))
