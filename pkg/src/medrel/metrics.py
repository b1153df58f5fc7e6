"""Precision, recall and F-score over the five positive relation types."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

from .corpus import POSITIVE_LABELS, RelationLabel


def prf(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    """Precision, recall, F1 with every 0/0 taken as 0.

    F is computed as 2tp / (2tp + fp + fn), the harmonic mean of P and R
    written in counts, so each value is a single correctly rounded division.
    """
    if min(tp, fp, fn) < 0:
        raise ValueError("counts must be non-negative")
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * tp / (2 * tp + fp + fn) if tp else 0.0
    return p, r, f


@dataclass(frozen=True)
class ClassMetrics:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return prf(self.tp, self.fp, self.fn)[0]

    @property
    def recall(self) -> float:
        return prf(self.tp, self.fp, self.fn)[1]

    @property
    def f(self) -> float:
        return prf(self.tp, self.fp, self.fn)[2]


def count_confusion(
    gold: Mapping[tuple, RelationLabel], pred: Mapping[tuple, RelationLabel]
) -> dict[RelationLabel, ClassMetrics]:
    """Per-label tp/fp/fn.  Keys absent from *pred* count as Null."""
    extra = set(pred) - set(gold)
    if extra:
        raise KeyError(f"{len(extra)} predicted key(s) outside the gold universe, e.g. {next(iter(extra))}")
    counts = {lab: [0, 0, 0] for lab in POSITIVE_LABELS}
    for key, g in gold.items():
        p = pred.get(key, RelationLabel.Null)
        if g == p:
            if g is not RelationLabel.Null:
                counts[g][0] += 1
            continue
        if p is not RelationLabel.Null:
            counts[p][1] += 1
        if g is not RelationLabel.Null:
            counts[g][2] += 1
    return {lab: ClassMetrics(*c) for lab, c in counts.items()}


@dataclass(frozen=True)
class EvalReport:
    per_class: dict
    total: ClassMetrics
    average: str = "micro"
    macro: tuple[float, float, float] | None = None

    @property
    def total_prf(self) -> tuple[float, float, float]:
        if self.average == "macro":
            return self.macro
        t = self.total
        return t.precision, t.recall, t.f

    def to_table(self) -> str:
        """Aligned text table: rows P/R/F, one column per label plus Total."""
        cols = [lab.value for lab in POSITIVE_LABELS] + ["Total"]
        vals = [(m.precision, m.recall, m.f) for m in self.per_class.values()] + [self.total_prf]
        lines = ["".ljust(10) + "".join(c.rjust(8) for c in cols)]
        for k, name in enumerate(("Precision", "Recall", "F-score")):
            lines.append(name.ljust(10) + "".join(f"{v[k]:8.2f}" for v in vals))
        return "\n".join(lines)

    def to_lines(self) -> list[str]:
        """Machine-readable ``key=value`` lines with full precision."""
        out = []
        for lab, m in self.per_class.items():
            out += [
                f"{lab.value}.tp={m.tp}",
                f"{lab.value}.fp={m.fp}",
                f"{lab.value}.fn={m.fn}",
                f"{lab.value}.precision={m.precision!r}",
                f"{lab.value}.recall={m.recall!r}",
                f"{lab.value}.f={m.f!r}",
            ]
        t = self.total
        p, r, f = self.total_prf
        out += [
            f"total.tp={t.tp}",
            f"total.fp={t.fp}",
            f"total.fn={t.fn}",
            f"total.average={self.average}",
            f"total.precision={p!r}",
            f"total.recall={r!r}",
            f"total.f={f!r}",
        ]
        return out


def evaluate(
    gold: Mapping[tuple, RelationLabel],
    pred: Mapping[tuple, RelationLabel],
    average: str = "micro",
) -> EvalReport:
    if average not in ("micro", "macro"):
        raise ValueError(f"average must be 'micro' or 'macro', got {average!r}")
    per = count_confusion(gold, pred)
    total = ClassMetrics(
        sum(m.tp for m in per.values()),
        sum(m.fp for m in per.values()),
        sum(m.fn for m in per.values()),
    )
    macro = None
    if average == "macro":
        n = len(per)
        macro = tuple(sum(getattr(m, a) for m in per.values()) / n for a in ("precision", "recall", "f"))
    return EvalReport(per, total, average, macro)
