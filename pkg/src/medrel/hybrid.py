"""Combining network predictions with high-precision rule predictions."""

from __future__ import annotations

from typing import Iterable, Mapping

from .corpus import RelationLabel

PredictionSet = dict  # instance key -> RelationLabel


def merge_predictions(
    nn: Mapping[tuple, RelationLabel],
    rules: Mapping[tuple, RelationLabel | None],
    exclude: Iterable[RelationLabel] = (RelationLabel.TrAP,),
) -> PredictionSet:
    """Network labels, overridden by every rule label not in *exclude*.

    Rule TrAP output is dropped by default because rule precision on that
    class is poor; on the other classes the rules win any conflict.
    """
    skip = set(exclude) | {RelationLabel.Null}
    merged = dict(nn)
    for key, label in rules.items():
        if label is not None and label not in skip:
            merged[key] = label
    return merged
