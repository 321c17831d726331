"""Confusion-matrix evaluation, inference timing, and complexity reporting.

Rates are one-vs-rest per class. Zero-division conventions: precision is 0
when TP+FP=0, recall and FNR are 0 when TP+FN=0, F1 is 0 when
precision+recall=0, so degenerate classes never produce non-finite values.
Aggregates use the unweighted (macro) class mean.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import neural
from .errors import DataError, ShapeError


@dataclass
class ClassMetrics:
    name: str
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float
    recall: float
    f1: float
    fnr: float


@dataclass
class MetricsReport:
    classes: list
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float
    n_samples: int

    def to_json_dict(self):
        return {
            "accuracy": self.accuracy,
            "macro_precision": self.macro_precision,
            "macro_recall": self.macro_recall,
            "macro_f1": self.macro_f1,
            "n_samples": self.n_samples,
            "per_class": [
                {
                    "class": c.name,
                    "tp": c.tp,
                    "fp": c.fp,
                    "fn": c.fn,
                    "tn": c.tn,
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "fnr": c.fnr,
                }
                for c in self.classes
            ],
        }

    def format_table(self):
        lines = [
            f"{'Class':<16} {'FNR (%)':>8} {'Recall':>8} {'Precision':>10} {'F1 Score':>9}"
        ]
        for c in self.classes:
            lines.append(
                f"{c.name:<16} {100 * c.fnr:>8.2f} {c.recall:>8.4f} "
                f"{c.precision:>10.4f} {c.f1:>9.4f}"
            )
        lines.append(
            f"accuracy {self.accuracy:.4f}  macro precision {self.macro_precision:.4f}  "
            f"macro recall {self.macro_recall:.4f}  macro F1 {self.macro_f1:.4f}  "
            f"(n={self.n_samples})"
        )
        return "\n".join(lines) + "\n"


def confusion_and_rates(predictions, truths, n_classes, class_names=None):
    preds = np.asarray(predictions, dtype=np.int64)
    truth = np.asarray(truths, dtype=np.int64)
    if preds.shape != truth.shape or preds.ndim != 1:
        raise ShapeError(f"prediction/truth shapes differ: {preds.shape} vs {truth.shape}")
    if preds.size and (
        preds.min() < 0 or truth.min() < 0
        or preds.max() >= n_classes or truth.max() >= n_classes
    ):
        raise DataError("label outside 0..n_classes-1")
    if class_names is None:
        class_names = tuple(str(c) for c in range(n_classes))

    n = preds.size
    per_class = []
    for c in range(n_classes):
        tp = int(((preds == c) & (truth == c)).sum())
        fp = int(((preds == c) & (truth != c)).sum())
        fn = int(((preds != c) & (truth == c)).sum())
        tn = n - tp - fp - fn
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        fnr = fn / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        per_class.append(
            ClassMetrics(class_names[c], tp, fp, fn, tn, precision, recall, f1, fnr)
        )
    accuracy = float((preds == truth).mean()) if n else 0.0
    return MetricsReport(
        classes=per_class,
        accuracy=accuracy,
        macro_precision=float(np.mean([c.precision for c in per_class])),
        macro_recall=float(np.mean([c.recall for c in per_class])),
        macro_f1=float(np.mean([c.f1 for c in per_class])),
        n_samples=n,
    )


@dataclass
class TimingRecord:
    batch_size: int
    repetitions: int
    warmup: int
    per_item_ms: list  # (end - start) / batch_size per repetition, in ms
    batch_ms: list  # raw per-batch wall time per repetition, in ms
    per_item_ms_median: float
    batch_ms_median: float
    latencies_us: list = field(default_factory=list)  # streaming path only
    p50_us: float = 0.0
    p99_us: float = 0.0
    max_us: float = 0.0

    def to_json_dict(self):
        return {
            "batch_size": self.batch_size,
            "repetitions": self.repetitions,
            "warmup": self.warmup,
            "per_item_ms_median": self.per_item_ms_median,
            "batch_ms_median": self.batch_ms_median,
            "per_item_ms": self.per_item_ms,
            "batch_ms": self.batch_ms,
            "p50_us": self.p50_us,
            "p99_us": self.p99_us,
            "max_us": self.max_us,
        }


def latency_percentiles(latencies_us):
    arr = np.asarray(latencies_us, dtype=np.float64)
    if arr.size == 0:
        return 0.0, 0.0, 0.0
    return (
        float(np.percentile(arr, 50)),
        float(np.percentile(arr, 99)),
        float(arr.max()),
    )


def measure_inference(pipeline, batch, repetitions=30, warmup=5):
    """Median wall time of pipeline(batch), divided by the batch size.

    Uses a monotonic clock; the median is reported because single-shot
    timings at sub-millisecond scale are scheduler-noise dominated.
    """
    if repetitions < 1:
        raise DataError("repetitions must be >= 1")
    batch_size = len(batch)
    for _ in range(warmup):
        pipeline(batch)
    per_item, per_batch = [], []
    for _ in range(repetitions):
        start = time.perf_counter()
        pipeline(batch)
        end = time.perf_counter()
        per_batch.append((end - start) * 1e3)
        per_item.append((end - start) * 1e3 / batch_size)
    return TimingRecord(
        batch_size=batch_size,
        repetitions=repetitions,
        warmup=warmup,
        per_item_ms=per_item,
        batch_ms=per_batch,
        per_item_ms_median=float(np.median(per_item)),
        batch_ms_median=float(np.median(per_batch)),
    )


def complexity_report(entries):
    """Rows of {name, params, budget, ok} for (name, model, budget) entries.

    model may be an MlpModel, a ClassifierModel, or anything exposing
    .layers / .mlp; budget None means unconstrained.
    """
    rows = []
    for name, model, budget in entries:
        target = getattr(model, "mlp", model)
        count = neural.count_params(target)
        rows.append(
            {
                "name": name,
                "params": count,
                "budget": budget,
                "ok": True if budget is None else count <= budget,
            }
        )
    return rows


def format_complexity(rows):
    lines = [f"{'Model':<12} {'Parameters':>11} {'Budget':>8} {'Within':>7}"]
    for r in rows:
        budget = "-" if r["budget"] is None else str(r["budget"])
        lines.append(
            f"{r['name']:<12} {r['params']:>11} {budget:>8} "
            f"{'yes' if r['ok'] else 'NO':>7}"
        )
    return "\n".join(lines) + "\n"
