"""Confusion matrices, headline metrics and misclassification reports."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from math import floor
from typing import Iterable, Mapping

from .errors import EmptyInput, IdMismatch
from .roads import CROSSWALK, NOT_CROSSWALK
from .verdict import EXCLUDED, LENIENT, Verdict


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError(f"negative count in {self}")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


def confusion(predictions: Mapping[str, str], truths: Mapping[str, str]) -> ConfusionMatrix:
    """Tally (truth, prediction) pairs; excluded predictions are dropped first."""
    scored = {sid: p for sid, p in predictions.items() if p != EXCLUDED}
    truth = {sid: t for sid, t in truths.items() if predictions.get(sid) != EXCLUDED}
    if scored.keys() != truth.keys():
        raise IdMismatch(scored.keys() - truth.keys(), truth.keys() - scored.keys())
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for sid, pred in scored.items():
        t = truth[sid]
        if pred not in (CROSSWALK, NOT_CROSSWALK) or t not in (CROSSWALK, NOT_CROSSWALK):
            raise ValueError(f"sample {sid}: bad label pair ({t!r}, {pred!r})")
        if pred == CROSSWALK:
            counts["tp" if t == CROSSWALK else "fp"] += 1
        else:
            counts["fn" if t == CROSSWALK else "tn"] += 1
    return ConfusionMatrix(**counts)


def round_half_up(x: Fraction, places: int = 2) -> Fraction:
    scale = 10**places
    return Fraction(floor(x * scale + Fraction(1, 2)), scale)


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    accuracy: float
    confusion: ConfusionMatrix
    config: str = ""
    excluded: int = 0
    policy: str = LENIENT
    undefined: tuple[str, ...] = field(default_factory=tuple)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["undefined"] = list(self.undefined)
        return d


def metrics(cm: ConfusionMatrix, *, config: str = "", excluded: int = 0, policy: str = LENIENT) -> MetricsReport:
    """Percentages rounded half-up to two decimals.

    F1 is the harmonic mean of the reported (rounded) precision and recall,
    so the three fields stay consistent with each other. Ratios with a zero denominator
    are reported as 0 and named in ``undefined``.
    """
    if cm.total == 0:
        raise EmptyInput("no scored samples")
    undefined = []

    def pct(num: int, den: int, name: str) -> Fraction:
        if den == 0:
            undefined.append(name)
            return Fraction(0)
        return round_half_up(Fraction(100 * num, den))

    p = pct(cm.tp, cm.tp + cm.fp, "precision")
    r = pct(cm.tp, cm.tp + cm.fn, "recall")
    if p + r == 0:
        undefined.append("f1")
        f1 = Fraction(0)
    else:
        f1 = round_half_up(2 * p * r / (p + r))
    acc = round_half_up(Fraction(100 * (cm.tp + cm.tn), cm.total))
    return MetricsReport(
        precision=float(p),
        recall=float(r),
        f1=float(f1),
        accuracy=float(acc),
        confusion=cm,
        config=config,
        excluded=excluded,
        policy=policy,
        undefined=tuple(undefined),
    )


TABLE_COLUMNS = ("Configuration", "Precision (%)", "Recall (%)", "F1-Score (%)", "Accuracy (%)")


def format_table(reports: Iterable[MetricsReport]) -> str:
    rows = [TABLE_COLUMNS]
    for r in reports:
        rows.append((r.config, f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f1:.2f}", f"{r.accuracy:.2f}"))
    widths = [max(len(row[i]) for row in rows) for i in range(len(TABLE_COLUMNS))]
    sep = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    lines = [sep]
    for k, row in enumerate(rows):
        lines.append("| " + " | ".join(c.ljust(w) for c, w in zip(row, widths)) + " |")
        if k == 0:
            lines.append(sep)
    lines.append(sep)
    return "\n".join(lines) + "\n"


def misclassification_report(
    samples: Iterable,
    verdicts: Mapping[str, Verdict],
    predictions: Mapping[str, str],
) -> list[dict]:
    """Every false positive / false negative with its rationale, by sample id."""
    out = []
    for s in samples:
        pred = predictions.get(s.sample_id)
        if pred in (None, EXCLUDED) or pred == s.truth_label:
            continue
        v = verdicts[s.sample_id]
        out.append(
            {
                "sample_id": s.sample_id,
                "error": "fp" if pred == CROSSWALK else "fn",
                "images": list(s.images),
                "truth": s.truth_label,
                "prediction": pred,
                "label": v.label,
                "positive_signs": v.positive_signs,
                "negative_signs": v.negative_signs,
                "risks": v.risks,
                "reason": v.reason,
            }
        )
    out.sort(key=lambda e: e["sample_id"])
    return out


def to_jsonl(records: Iterable[dict]) -> str:
    return "".join(json.dumps(r, sort_keys=True, ensure_ascii=False) + "\n" for r in records)
