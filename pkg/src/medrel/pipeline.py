"""End-to-end glue: corpus → encoded instances → model / rules → labels."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .corpus import AnnotationError, Corpus, RelationInstance, RelationLabel, generate_candidates, sample_negatives
from .features import AssertionLexicons, EncodedInstance, FeatureExtractor
from .network import BiLstmModel, TrainConfig, TrainResult, init_model, load_embeddings, predict_batch, train
from .rules import ParseGraph, PhrasePattern, VerbLexicon, apply_rules


@dataclass
class FittedSystem:
    model: BiLstmModel
    extractor: FeatureExtractor
    losses: list[float]


def training_instances(corpus: Corpus, config: TrainConfig) -> list[RelationInstance]:
    """All positive candidates plus ``config.neg_samples`` sampled Nulls."""
    return sample_negatives(generate_candidates(corpus), config.neg_samples, config.seed)


def fit(
    corpus: Corpus,
    config: TrainConfig,
    lexicons: AssertionLexicons | None = None,
    embeddings: str | None = None,
) -> FittedSystem:
    instances = training_instances(corpus, config)
    if not instances:
        raise AnnotationError("training corpus has no treatment-problem candidates")
    extractor = FeatureExtractor.fit(corpus, instances, lexicons)
    encoded = [extractor.encode(r) for r in instances]
    model = None
    if embeddings is not None:
        model = init_model(config, extractor.vocab.sizes, np.random.default_rng(config.seed))
        load_embeddings(embeddings, extractor.vocab, model)
    result: TrainResult = train(encoded, config, extractor.vocab.sizes, config.seed, model)
    return FittedSystem(result.model, extractor, result.losses)


def gold_labels(instances: Sequence[RelationInstance]) -> dict[tuple, RelationLabel]:
    return {r.key: r.label for r in instances}


def encode_all(extractor: FeatureExtractor, instances: Sequence[RelationInstance]) -> list[EncodedInstance]:
    return [extractor.encode(r) for r in instances]


def network_predictions(
    model: BiLstmModel, extractor: FeatureExtractor, instances: Sequence[RelationInstance]
) -> dict[tuple, RelationLabel]:
    labels, _ = predict_batch(model, encode_all(extractor, instances))
    return {r.key: lab for r, lab in zip(instances, labels)}


def rule_predictions(
    instances: Sequence[RelationInstance],
    patterns: Sequence[PhrasePattern],
    lex: VerbLexicon,
    parses: dict[tuple[str, int], ParseGraph] | None = None,
) -> dict[tuple, RelationLabel]:
    return apply_rules(instances, patterns, lex, parses)


def relabel(instances: Sequence[RelationInstance], labels: dict[tuple, RelationLabel]) -> list[RelationInstance]:
    return [r.with_label(labels.get(r.key, RelationLabel.Null)) for r in instances]
