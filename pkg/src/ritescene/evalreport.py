"""Per-class recall / precision, macro averages and table-shaped reports.

Report rows follow the shot-detection table layout
(Event, Total, Correct, False, Miss, Precision, Recall) where Total counts
the samples assigned to the class (Correct + False), or the classifier
comparison layout (Event, TrainN, TestN, ANN, KNN, SVM).
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from typing import Mapping, Sequence

NA = "n/a"


@dataclass(frozen=True)
class ClassCounts:
    correct: int  # true positives
    false: int  # false positives
    miss: int  # false negatives

    def __post_init__(self):
        if min(self.correct, self.false, self.miss) < 0:
            raise ValueError("counts must be non-negative")

    @property
    def total(self) -> int:
        return self.correct + self.false


def recall(counts: ClassCounts) -> float | None:
    """Percent, or None when there are no positives to find."""
    denom = counts.correct + counts.miss
    return None if denom == 0 else 100.0 * counts.correct / denom


def precision(counts: ClassCounts) -> float | None:
    denom = counts.correct + counts.false
    return None if denom == 0 else 100.0 * counts.correct / denom


def confusion_counts(predictions: Sequence[str], truths: Sequence[str],
                     vocabulary: Sequence[str] | None = None) -> dict[str, ClassCounts]:
    if len(predictions) != len(truths):
        raise ValueError(f"{len(predictions)} predictions for {len(truths)} truths")
    vocab = list(vocabulary) if vocabulary is not None else sorted(set(truths) | set(predictions))
    known = set(vocab)
    stray = (set(predictions) | set(truths)) - known
    if stray:
        raise ValueError(f"labels outside vocabulary: {sorted(stray)}")
    tp = dict.fromkeys(vocab, 0)
    fp = dict.fromkeys(vocab, 0)
    fn = dict.fromkeys(vocab, 0)
    for p, t in zip(predictions, truths):
        if p == t:
            tp[p] += 1
        else:
            fp[p] += 1
            fn[t] += 1
    return {c: ClassCounts(tp[c], fp[c], fn[c]) for c in vocab}


def macro_average(values: Sequence[float | None]) -> float:
    """Unweighted mean over the defined (non-None) values."""
    defined = [v for v in values if v is not None]
    if not defined:
        raise ValueError("no class has a defined metric")
    return sum(defined) / len(defined)


def round_half_up(value: float, places: int = 1) -> Decimal:
    return Decimal(repr(value)).quantize(Decimal(1).scaleb(-places), rounding=ROUND_HALF_UP)


def format_percent(value: float | None, places: int = 1) -> str:
    if value is None:
        return NA
    return f"{round_half_up(value, places)}%"


@dataclass
class MetricsReport:
    counts: dict[str, ClassCounts]
    classifier: str = ""
    title: str = ""

    @property
    def classes(self) -> list[str]:
        return list(self.counts)

    def precision(self) -> dict[str, float | None]:
        return {c: precision(v) for c, v in self.counts.items()}

    def recall(self) -> dict[str, float | None]:
        return {c: recall(v) for c, v in self.counts.items()}

    def macro(self) -> tuple[float | None, float | None]:
        """(precision, recall) macro averages; None when nothing is defined."""
        out = []
        for metric in (self.precision(), self.recall()):
            vals = list(metric.values())
            out.append(macro_average(vals) if any(v is not None for v in vals) else None)
        return out[0], out[1]

    def undefined(self) -> int:
        return sum(v is None for v in self.precision().values()) + sum(v is None for v in self.recall().values())

    @property
    def n_samples(self) -> int:
        return sum(c.correct + c.miss for c in self.counts.values())

    @property
    def accuracy(self) -> float | None:
        n = self.n_samples
        return None if n == 0 else 100.0 * sum(c.correct for c in self.counts.values()) / n


TABLE_I = ["Event", "Total", "Correct", "False", "Miss", "Precision", "Recall"]
TABLE_II = ["Event", "TrainN", "TestN", "ANN", "KNN", "SVM"]


def _csv(rows: list[list[str]]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerows(rows)
    return buf.getvalue()


def emit_report(report: MetricsReport, fmt: str = "csv") -> str:
    prec, rec = report.precision(), report.recall()
    if fmt == "csv":
        rows = [TABLE_I]
        for c, cnt in report.counts.items():
            rows.append([c, str(cnt.total), str(cnt.correct), str(cnt.false), str(cnt.miss),
                         format_percent(prec[c]), format_percent(rec[c])])
        return _csv(rows)
    if fmt == "json":
        mp, mr = report.macro()
        doc = {
            "title": report.title,
            "classifier": report.classifier,
            "classes": [
                {"event": c, "total": cnt.total, "correct": cnt.correct, "false": cnt.false,
                 "miss": cnt.miss, "precision": format_percent(prec[c]), "recall": format_percent(rec[c])}
                for c, cnt in report.counts.items()
            ],
            "macro_precision": format_percent(mp, 2),
            "macro_recall": format_percent(mr, 2),
            "undefined_metrics": report.undefined(),
        }
        return json.dumps(doc, indent=1) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")


def parse_report(text: str) -> MetricsReport:
    """Counts back from either report format (percentages are derived)."""
    stripped = text.lstrip()
    counts: dict[str, ClassCounts] = {}
    if stripped.startswith("{"):
        doc = json.loads(text)
        for r in doc["classes"]:
            counts[r["event"]] = ClassCounts(int(r["correct"]), int(r["false"]), int(r["miss"]))
        return MetricsReport(counts, doc.get("classifier", ""), doc.get("title", ""))
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != TABLE_I:
        raise ValueError("not a per-class report CSV")
    for r in rows[1:]:
        counts[r[0]] = ClassCounts(int(r[2]), int(r[3]), int(r[4]))
    return MetricsReport(counts)


@dataclass
class ComparisonRow:
    event: str
    train_n: int
    test_n: int
    accuracy: dict[str, float | None] = field(default_factory=dict)  # keyed by knn / ann / svm


def comparison_rows(reports: Mapping[str, MetricsReport], train_counts: Mapping[str, int]) -> list[ComparisonRow]:
    """Per-class recognition rate (recall) for each classifier kind."""
    events: list[str] = []
    for rep in reports.values():
        for c in rep.classes:
            if c not in events:
                events.append(c)
    rows = []
    for e in events:
        test_n = 0
        acc = {}
        for kind, rep in reports.items():
            cnt = rep.counts.get(e)
            acc[kind] = recall(cnt) if cnt is not None else None
            if cnt is not None:
                test_n = cnt.correct + cnt.miss
        rows.append(ComparisonRow(e, int(train_counts.get(e, 0)), test_n, acc))
    return rows


def emit_comparison(rows: Sequence[ComparisonRow], fmt: str = "csv") -> str:
    if fmt == "csv":
        out = [TABLE_II]
        for r in rows:
            out.append([r.event, str(r.train_n), str(r.test_n)]
                       + [format_percent(r.accuracy.get(k)) for k in ("ann", "knn", "svm")])
        return _csv(out)
    if fmt == "json":
        return json.dumps([
            {"event": r.event, "train_n": r.train_n, "test_n": r.test_n,
             **{k.upper(): format_percent(r.accuracy.get(k)) for k in ("ann", "knn", "svm")}}
            for r in rows], indent=1) + "\n"
    raise ValueError(f"unknown report format {fmt!r}")
