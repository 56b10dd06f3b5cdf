"""Confusion matrices, per-class metrics and report rendering.

Metrics are computed in exact rational arithmetic and converted to float
once, so identities such as "weighted-average recall equals accuracy" hold
bit-for-bit. Rounding happens only when rendering the table.
"""
from __future__ import annotations

import json
from collections import Counter
from dataclasses import asdict, dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from fractions import Fraction

import numpy as np

from graphfraud.data import FRAUD, UNKNOWN_STATE

CLASS_NAMES = {0: "0 (Non-Fraud)", 1: "1 (Fraud)"}


@dataclass(frozen=True)
class ConfusionMatrix:
    """Binary confusion matrix; the positive class is fraud (label 1)."""

    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        for name in ("tp", "fp", "fn", "tn"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    def __add__(self, other: ConfusionMatrix) -> ConfusionMatrix:
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> ConfusionMatrix:
        y_true = np.asarray(y_true)
        y_pred = np.asarray(y_pred)
        if y_true.shape != y_pred.shape:
            raise ValueError("y_true and y_pred differ in length")
        return cls(
            tp=int(np.count_nonzero((y_true == 1) & (y_pred == 1))),
            fp=int(np.count_nonzero((y_true == 0) & (y_pred == 1))),
            fn=int(np.count_nonzero((y_true == 1) & (y_pred == 0))),
            tn=int(np.count_nonzero((y_true == 0) & (y_pred == 0))),
        )


@dataclass(frozen=True)
class ClassMetrics:
    label: int
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class AverageMetrics:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class MetricsReport:
    classes: tuple[ClassMetrics, ...]
    accuracy: float
    macro: AverageMetrics
    weighted: AverageMetrics
    confusion: ConfusionMatrix
    config_fingerprint: str = ""
    zero_division: tuple[str, ...] = field(default=())

    def by_label(self, label: int) -> ClassMetrics:
        return next(c for c in self.classes if c.label == label)

    def to_dict(self) -> dict:
        return {
            "confusion": asdict(self.confusion),
            "classes": [asdict(c) for c in self.classes],
            "accuracy": self.accuracy,
            "macro": asdict(self.macro),
            "weighted": asdict(self.weighted),
            "config_fingerprint": self.config_fingerprint,
            "zero_division": list(self.zero_division),
        }

    @classmethod
    def from_dict(cls, d: dict) -> MetricsReport:
        return cls(
            classes=tuple(ClassMetrics(**c) for c in d["classes"]),
            accuracy=d["accuracy"],
            macro=AverageMetrics(**d["macro"]),
            weighted=AverageMetrics(**d["weighted"]),
            confusion=ConfusionMatrix(**d["confusion"]),
            config_fingerprint=d.get("config_fingerprint", ""),
            zero_division=tuple(d.get("zero_division", ())),
        )

    @classmethod
    def from_json(cls, text: str) -> MetricsReport:
        return cls.from_dict(json.loads(text))


def _ratio(num: int, den: int, flag: str, flags: list) -> Fraction:
    if den == 0:
        flags.append(flag)
        return Fraction(0)
    return Fraction(num, den)


def compute_metrics(cm: ConfusionMatrix, config_fingerprint: str = "") -> MetricsReport:
    """Per-class, macro and support-weighted precision/recall/F1.

    A zero denominator yields 0.0 and is listed in ``zero_division``.
    """
    n = cm.total
    if n == 0:
        raise ValueError("confusion matrix is empty")
    flags: list[str] = []
    # (tp, fp, fn) from each class's own point of view
    views = {0: (cm.tn, cm.fn, cm.fp), 1: (cm.tp, cm.fp, cm.fn)}
    exact = {}
    for label, (tp, fp, fn) in views.items():
        p = _ratio(tp, tp + fp, f"{label}.precision", flags)
        r = _ratio(tp, tp + fn, f"{label}.recall", flags)
        if p + r == 0:
            f1 = Fraction(0)
            flags.append(f"{label}.f1")
        else:
            f1 = 2 * p * r / (p + r)
        exact[label] = (p, r, f1, tp + fn)

    def averages(weight_of) -> AverageMetrics:
        total_w = sum(weight_of(label) for label in exact)
        if total_w == 0:
            return AverageMetrics(0.0, 0.0, 0.0, n)
        vals = [
            sum(weight_of(label) * exact[label][k] for label in exact) / total_w for k in range(3)
        ]
        return AverageMetrics(float(vals[0]), float(vals[1]), float(vals[2]), n)

    classes = tuple(
        ClassMetrics(label, float(p), float(r), float(f1), support)
        for label, (p, r, f1, support) in exact.items()
    )
    return MetricsReport(
        classes=classes,
        accuracy=float(Fraction(cm.tp + cm.tn, n)),
        macro=averages(lambda label: Fraction(1)),
        weighted=averages(lambda label: Fraction(exact[label][3])),
        confusion=cm,
        config_fingerprint=config_fingerprint,
        zero_division=tuple(flags),
    )


def round_half_up(x: float, places: int = 2) -> str:
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(float(x))).quantize(quantum, rounding=ROUND_HALF_UP))


def render_table(report: MetricsReport) -> str:
    head = f"{'category':<16}{'Precision':>10}{'Recall':>10}{'F1-Score':>10}{'Support':>10}"
    lines = [head]
    for c in report.classes:
        lines.append(
            f"{CLASS_NAMES[c.label]:<16}{round_half_up(c.precision):>10}"
            f"{round_half_up(c.recall):>10}{round_half_up(c.f1):>10}{c.support:>10}"
        )
    n = report.confusion.total
    lines.append(f"{'Accuracy':<16}{'':>10}{'':>10}{round_half_up(report.accuracy):>10}{n:>10}")
    for name, avg in (("Macro Avg", report.macro), ("Weighted Avg", report.weighted)):
        lines.append(
            f"{name:<16}{round_half_up(avg.precision):>10}{round_half_up(avg.recall):>10}"
            f"{round_half_up(avg.f1):>10}{avg.support:>10}"
        )
    cm = report.confusion
    lines += [
        "",
        "confusion matrix (rows: true, cols: predicted)",
        f"{'':<16}{'pred 0':>10}{'pred 1':>10}",
        f"{'true 0':<16}{cm.tn:>10}{cm.fp:>10}",
        f"{'true 1':<16}{cm.fn:>10}{cm.tp:>10}",
    ]
    return "\n".join(lines) + "\n"


def emit_report(report: MetricsReport, format: str = "table") -> str:
    if format == "table":
        return render_table(report)
    if format == "json":
        return json.dumps(report.to_dict(), indent=2) + "\n"
    raise ValueError(f"unknown report format {format!r}")


def auc(scores, labels) -> float:
    """Area under the ROC curve by the trapezoid rule (ties form one ROC step)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = np.count_nonzero(labels == 1)
    neg = np.count_nonzero(labels == 0)
    if pos == 0 or neg == 0:
        raise ValueError("AUC needs both classes")
    order = np.argsort(-scores, kind="stable")
    s, y = scores[order], labels[order]
    last_of_run = np.r_[np.flatnonzero(np.diff(s) != 0), s.shape[0] - 1]
    tps = np.cumsum(y == 1)[last_of_run]
    fps = np.cumsum(y == 0)[last_of_run]
    tpr = np.r_[0.0, tps / pos]
    fpr = np.r_[0.0, fps / neg]
    return float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))


# --- dataset-level reports -------------------------------------------------

def _select(dataset, fraud_only: bool):
    return [t for t in dataset.records if not fraud_only or t.label == FRAUD]


def amount_histogram(dataset, bucket_width_cents: int = 5000, fraud_only: bool = True):
    """``[(bucket_start_cents, count), ...]`` for fixed-width buckets from 0."""
    if bucket_width_cents <= 0:
        raise ValueError("bucket width must be positive")
    amounts = np.array([t.amount for t in _select(dataset, fraud_only)], dtype=np.int64)
    if amounts.size == 0:
        return []
    counts = np.bincount(amounts // bucket_width_cents)
    return [(i * bucket_width_cents, int(c)) for i, c in enumerate(counts)]


def state_counts(dataset, fraud_only: bool = True):
    """``[(state, count), ...]`` by descending count, ties alphabetical."""
    tally = Counter(t.merchant_state or UNKNOWN_STATE for t in _select(dataset, fraud_only))
    return sorted(tally.items(), key=lambda kv: (-kv[1], kv[0]))


def histogram_to_text(hist, bucket_width_cents: int) -> str:
    rows = ["bucket_lo_cents,bucket_hi_cents,count"]
    rows += [f"{lo},{lo + bucket_width_cents},{c}" for lo, c in hist]
    return "\n".join(rows) + "\n"


def state_counts_to_text(counts) -> str:
    return "\n".join(["state,count"] + [f"{s},{c}" for s, c in counts]) + "\n"
