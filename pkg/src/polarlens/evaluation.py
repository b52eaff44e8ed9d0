"""Metric suite: one-vs-rest confusion counts, accuracy, macro/micro F1 and
Jaccard, relative performance, and per-language breakdown reports."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .corpus import BiasLabel

NUM_CLASSES = 3


class EvalError(Exception):
    pass


def _indices(labels) -> list:
    out = []
    for lab in labels:
        if isinstance(lab, BiasLabel):
            out.append(lab.value)
        else:
            out.append(int(lab))
    for i in out:
        if not 0 <= i < NUM_CLASSES:
            raise EvalError(f"label index out of range: {i}")
    return out


@dataclass
class ConfusionCounts:
    """One-vs-rest counts per class; tp[c] + tn[c] + fp[c] + fn[c] == n."""

    tp: list = field(default_factory=lambda: [0] * NUM_CLASSES)
    tn: list = field(default_factory=lambda: [0] * NUM_CLASSES)
    fp: list = field(default_factory=lambda: [0] * NUM_CLASSES)
    fn: list = field(default_factory=lambda: [0] * NUM_CLASSES)

    @property
    def total(self) -> int:
        return self.tp[0] + self.tn[0] + self.fp[0] + self.fn[0]

    def support(self, c: int) -> int:
        return self.tp[c] + self.fn[c]

    def pooled(self) -> tuple:
        return (sum(self.tp), sum(self.tn), sum(self.fp), sum(self.fn))


def confusion(true_labels, predicted_labels) -> ConfusionCounts:
    y_true = _indices(true_labels)
    y_pred = _indices(predicted_labels)
    if len(y_true) != len(y_pred):
        raise EvalError(f"length mismatch: {len(y_true)} true vs {len(y_pred)} predicted")
    counts = ConfusionCounts()
    for t, p in zip(y_true, y_pred):
        for c in range(NUM_CLASSES):
            if t == c and p == c:
                counts.tp[c] += 1
            elif t == c:
                counts.fn[c] += 1
            elif p == c:
                counts.fp[c] += 1
            else:
                counts.tn[c] += 1
    return counts


def accuracy(true_labels, predicted_labels) -> float:
    """Multiclass accuracy: correct / total."""
    y_true = _indices(true_labels)
    y_pred = _indices(predicted_labels)
    if len(y_true) != len(y_pred):
        raise EvalError("length mismatch")
    if not y_true:
        raise EvalError("accuracy undefined on empty input")
    return sum(t == p for t, p in zip(y_true, y_pred)) / len(y_true)


def _f1_from(tp: int, fp: int, fn: int) -> float:
    denom = 2 * tp + fp + fn
    return (2 * tp / denom) if denom else 0.0


def _jaccard_from(tp: int, fp: int, fn: int) -> float:
    denom = tp + fp + fn
    return (tp / denom) if denom else 0.0


def f1(counts: ConfusionCounts, averaging: str = "macro") -> float:
    """Macro: mean of per-class F1 (empty classes contribute 0).
    Micro: pooled counts."""
    if averaging == "macro":
        return sum(_f1_from(counts.tp[c], counts.fp[c], counts.fn[c]) for c in range(NUM_CLASSES)) / NUM_CLASSES
    if averaging == "micro":
        tp, _, fp, fn = counts.pooled()
        return _f1_from(tp, fp, fn)
    raise EvalError(f"unknown averaging: {averaging!r}")


def jaccard(counts: ConfusionCounts, averaging: str = "macro") -> float:
    if averaging == "macro":
        return sum(_jaccard_from(counts.tp[c], counts.fp[c], counts.fn[c]) for c in range(NUM_CLASSES)) / NUM_CLASSES
    if averaging == "micro":
        tp, _, fp, fn = counts.pooled()
        return _jaccard_from(tp, fp, fn)
    raise EvalError(f"unknown averaging: {averaging!r}")


@dataclass
class PerClassMetrics:
    precision: float
    recall: float
    f1: float
    jaccard: float
    support: int


@dataclass
class MetricReport:
    accuracy: float
    macro_f1: float
    micro_f1: float
    macro_jaccard: float
    micro_jaccard: float
    per_class: list
    n: int
    empty_classes: list = field(default_factory=list)

    def to_json_obj(self) -> dict:
        return {
            "n": self.n,
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "macro_jaccard": self.macro_jaccard,
            "micro_jaccard": self.micro_jaccard,
            "empty_classes": [BiasLabel(c).canonical for c in self.empty_classes],
            "per_class": {
                BiasLabel(c).canonical: {
                    "precision": pc.precision,
                    "recall": pc.recall,
                    "f1": pc.f1,
                    "jaccard": pc.jaccard,
                    "support": pc.support,
                }
                for c, pc in enumerate(self.per_class)
            },
        }


def metric_report(true_labels, predicted_labels) -> MetricReport:
    y_true = _indices(true_labels)
    y_pred = _indices(predicted_labels)
    counts = confusion(y_true, y_pred)
    per_class = []
    for c in range(NUM_CLASSES):
        tp, fp, fn = counts.tp[c], counts.fp[c], counts.fn[c]
        precision = tp / (tp + fp) if (tp + fp) else 0.0
        recall = tp / (tp + fn) if (tp + fn) else 0.0
        per_class.append(
            PerClassMetrics(
                precision=precision,
                recall=recall,
                f1=_f1_from(tp, fp, fn),
                jaccard=_jaccard_from(tp, fp, fn),
                support=counts.support(c),
            )
        )
    return MetricReport(
        accuracy=accuracy(y_true, y_pred),
        macro_f1=f1(counts, "macro"),
        micro_f1=f1(counts, "micro"),
        macro_jaccard=jaccard(counts, "macro"),
        micro_jaccard=jaccard(counts, "micro"),
        per_class=per_class,
        n=len(y_true),
        empty_classes=[c for c in range(NUM_CLASSES) if counts.support(c) == 0],
    )


@dataclass
class RelativePerformance:
    numerator_metric: float
    denominator_metric: float

    def __post_init__(self):
        if self.denominator_metric <= 0:
            raise EvalError("relative performance needs a positive baseline metric")

    @property
    def ratio(self) -> float:
        return self.numerator_metric / self.denominator_metric

    @property
    def reported(self) -> float:
        """Ratio rounded to 2 decimals, the tables' convention."""
        return round(self.ratio, 2)


def relative_performance(candidate_metric: float, baseline_metric: float) -> RelativePerformance:
    return RelativePerformance(candidate_metric, baseline_metric)


def language_breakdown(records, predictions: dict) -> dict:
    """Per-language metric reports. `records` carry id/language/label;
    `predictions` maps record id -> predicted label or index."""
    by_language: dict = {}
    seen_ids = set()
    for rec in records:
        seen_ids.add(rec.id)
        if rec.id in predictions:
            true_list, pred_list = by_language.setdefault(rec.language, ([], []))
            true_list.append(rec.label)
            pred_list.append(predictions[rec.id])
    dangling = set(predictions) - seen_ids
    if dangling:
        raise EvalError(f"predictions reference unknown record ids: {sorted(dangling)[:5]}")
    return {
        language: metric_report(trues, preds)
        for language, (trues, preds) in sorted(by_language.items())
    }


def breakdown_with_rp(records, runs: dict, baseline: str) -> dict:
    """Per-language reports for several runs plus relative performance of every
    non-baseline run against the baseline run, per metric."""
    if baseline not in runs:
        raise EvalError(f"baseline run {baseline!r} not present")
    reports = {name: language_breakdown(records, preds) for name, preds in runs.items()}
    out: dict = {}
    for language in reports[baseline]:
        base = reports[baseline][language]
        entry = {"baseline": base.to_json_obj(), "runs": {}}
        for name, per_lang in reports.items():
            if name == baseline or language not in per_lang:
                continue
            rep = per_lang[language]
            entry["runs"][name] = {
                "report": rep.to_json_obj(),
                "rp": {
                    metric: (
                        relative_performance(getattr(rep, metric), getattr(base, metric)).reported
                        if getattr(base, metric) > 0
                        else None
                    )
                    for metric in ("accuracy", "micro_f1", "micro_jaccard")
                },
            }
        out[language] = entry
    return out


def load_predictions(path) -> dict:
    """Predictions file: JSON lines {id, predicted_label, probabilities:[3]}."""
    out = {}
    with Path(path).open(encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            out[obj["id"]] = BiasLabel.parse(obj["predicted_label"])
    return out


def save_predictions(path, rows) -> None:
    """Rows: iterable of (id, label index, probabilities)."""
    with Path(path).open("w", encoding="utf-8") as fh:
        for rec_id, label_idx, probs in rows:
            fh.write(
                json.dumps(
                    {
                        "id": rec_id,
                        "predicted_label": BiasLabel(int(label_idx)).canonical,
                        "probabilities": [float(p) for p in probs],
                    }
                )
                + "\n"
            )


def report_table(reports: dict, metrics=("accuracy", "macro_f1", "macro_jaccard")) -> str:
    """Aligned text table: one column per run name, one row per metric."""
    names = list(reports)
    headers = [""] + names
    rows = []
    for metric in metrics:
        rows.append([metric] + [f"{getattr(reports[n], metric):.2f}" for n in names])
    widths = [max(len(r[i]) for r in [headers] + rows) for i in range(len(headers))]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip()]
    for row in rows:
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
    return "\n".join(lines)
