"""Word-level ids, position offsets and the 108-dim sentence-level block."""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .corpus import ConceptSpan, Corpus, RelationInstance, RelationLabel, Sentence, SpanRangeError

POS_SEQ_DIM = 100
N_ASSERTION = 7
SENTENCE_DIM = POS_SEQ_DIM + 1 + N_ASSERTION  # 108

LEXICON_NAMES = (
    "allergy",
    "cause",
    "fail",
    "certainty",
    "history",
    "hypothetical",
    "uncertainty",
)


@dataclass
class FeatureVocab:
    """String → id maps.  Ids run 1..V in first-seen order; 0 is OOV."""

    word_ids: dict[str, int] = field(default_factory=dict)
    pos_ids: dict[str, int] = field(default_factory=dict)
    chunk_ids: dict[str, int] = field(default_factory=dict)

    def word(self, s: str) -> int:
        return self.word_ids.get(s, 0)

    def pos(self, s: str) -> int:
        return self.pos_ids.get(s, 0)

    def chunk(self, s: str) -> int:
        return self.chunk_ids.get(s, 0)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.word_ids), len(self.pos_ids), len(self.chunk_ids)


def build_vocab(train: Corpus | Iterable[Sentence]) -> FeatureVocab:
    sentences = train.sentences if isinstance(train, Corpus) else train
    vocab = FeatureVocab()
    for sent in sentences:
        for tok in sent.tokens:
            for table, key in (
                (vocab.word_ids, tok.text),
                (vocab.pos_ids, tok.pos),
                (vocab.chunk_ids, tok.chunk),
            ):
                if key not in table:
                    table[key] = len(table) + 1
    return vocab


def position_vector(sentence_len: int, span: ConceptSpan) -> np.ndarray:
    """Signed token distance to *span*: negative to the left, 0 inside."""
    if not 0 <= span.tok_start <= span.tok_end < sentence_len:
        raise SpanRangeError(
            f"span {span.tok_start}:{span.tok_end} outside sentence of {sentence_len} tokens"
        )
    i = np.arange(sentence_len)
    return np.where(
        i < span.tok_start, i - span.tok_start, np.where(i > span.tok_end, i - span.tok_end, 0)
    )


# --- sentence-level block ---------------------------------------------------


def between_pos(instance: RelationInstance) -> tuple[str, ...]:
    """POS tags of tokens strictly between the two spans, in surface order."""
    left, right = instance.ordered_spans()
    toks = instance.sentence.tokens[left.tok_end + 1 : right.tok_start]
    return tuple(t.pos for t in toks)


def top_pos_sequences(
    train: Iterable[RelationInstance], k: int = POS_SEQ_DIM
) -> list[tuple[str, ...]]:
    """The *k* most frequent between-span POS sequences over positive
    instances; ties broken lexicographically."""
    counts = Counter(between_pos(r) for r in train if r.label is not RelationLabel.Null)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    return [seq for seq, _ in ranked[:k]]


def encode_pos_sequence(instance: RelationInstance, top: Sequence[tuple[str, ...]]) -> np.ndarray:
    if len(top) > POS_SEQ_DIM:
        raise ValueError(f"at most {POS_SEQ_DIM} POS sequences, got {len(top)}")
    v = np.zeros(POS_SEQ_DIM)
    seq = between_pos(instance)
    for j, cand in enumerate(top):
        if tuple(cand) == seq:
            v[j] = 1.0
            break
    return v


def save_top_pos(top: Sequence[tuple[str, ...]], path: str | Path) -> None:
    # an empty between-span sequence is written as an empty line
    Path(path).write_text("".join(" ".join(s) + "\n" for s in top), encoding="utf-8")


def load_top_pos(path: str | Path) -> list[tuple[str, ...]]:
    text = Path(path).read_text(encoding="utf-8")
    return [tuple(line.split()) for line in text.split("\n")[:-1]] if text else []


@dataclass
class CooccurrenceCounts:
    """Sentence-level counts of case-folded concept texts."""

    n_sentences: int = 0
    single: Counter = field(default_factory=Counter)
    pair: Counter = field(default_factory=Counter)

    @staticmethod
    def _pair_key(a: str, b: str) -> str:
        a, b = sorted((a, b))
        return f"{a}\x00{b}"

    def pair_count(self, a: str, b: str) -> int:
        return self.pair[self._pair_key(a.lower(), b.lower())]

    def to_json(self) -> dict:
        return {"n_sentences": self.n_sentences, "single": dict(self.single), "pair": dict(self.pair)}

    @classmethod
    def from_json(cls, d: dict) -> "CooccurrenceCounts":
        return cls(d["n_sentences"], Counter(d["single"]), Counter(d["pair"]))


def cooccurrence_counts(train: Corpus) -> CooccurrenceCounts:
    counts = CooccurrenceCounts()
    for doc in train.documents.values():
        per_line: dict[int, set[str]] = {}
        for c in doc.concepts:
            if c.ctype in ("treatment", "problem"):
                per_line.setdefault(c.line, set()).add(c.text.lower())
        counts.n_sentences += len(doc.sentences)
        for texts in per_line.values():
            counts.single.update(texts)
            for a, b in combinations(sorted(texts), 2):
                counts.pair[CooccurrenceCounts._pair_key(a, b)] += 1
    return counts


def compute_pmi(counts: CooccurrenceCounts, treatment_text: str, problem_text: str) -> float:
    """Add-one smoothed PMI, natural log:
    ln(((c(t,p)+1) N) / ((c(t)+1)(c(p)+1)))."""
    t, p = treatment_text.lower(), problem_text.lower()
    n = counts.n_sentences
    if n == 0:
        return 0.0
    ct, cp = counts.single[t], counts.single[p]
    ctp = counts.pair_count(t, p)
    return math.log((ctp + 1) * n / ((ct + 1) * (cp + 1)))


@dataclass(frozen=True)
class AssertionLexicons:
    lists: tuple[frozenset, ...]

    def __post_init__(self):
        if len(self.lists) != N_ASSERTION:
            raise ValueError(f"expected {N_ASSERTION} word lists, got {len(self.lists)}")

    @classmethod
    def from_lists(cls, lists: Sequence[Iterable[str]]) -> "AssertionLexicons":
        return cls(tuple(frozenset(w.lower() for w in words) for words in lists))

    @classmethod
    def empty(cls) -> "AssertionLexicons":
        return cls(tuple(frozenset() for _ in LEXICON_NAMES))


def read_word_list(path: str | Path) -> list[str]:
    words = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.split("#", 1)[0].strip().lower()
        if line and line not in words:
            words.append(line)
    return words


def load_lexicons(directory: str | Path | None = None) -> AssertionLexicons:
    """Read the seven ``<name>.txt`` lists; the bundled starter lists when
    *directory* is None.  Missing files count as empty lists."""
    if directory is None:
        root = resources.files("medrel") / "data" / "lexicons"
        lists = [read_word_list(root / f"{name}.txt") for name in LEXICON_NAMES]
    else:
        directory = Path(directory)
        if not directory.is_dir():
            raise FileNotFoundError(f"lexicon directory not found: {directory}")
        lists = [
            read_word_list(directory / f"{name}.txt") if (directory / f"{name}.txt").exists() else []
            for name in LEXICON_NAMES
        ]
    return AssertionLexicons.from_lists(lists)


def assertion_indices(sentence: Sentence, lexicons: AssertionLexicons) -> np.ndarray:
    """Per list: (1 + index of first matching token) / sentence length, else 0."""
    words = [t.text.lower() for t in sentence.tokens]
    n = len(words)
    out = np.zeros(N_ASSERTION)
    for k, lex in enumerate(lexicons.lists):
        for i, w in enumerate(words):
            if w in lex:
                out[k] = (i + 1) / n
                break
    return out


@dataclass(frozen=True)
class SentenceLevelFeatures:
    pos_seq_onehot: np.ndarray
    pmi: float
    assertion_idx: np.ndarray

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.pos_seq_onehot, [self.pmi], self.assertion_idx])


@dataclass(frozen=True)
class EncodedInstance:
    word: np.ndarray
    pos: np.ndarray
    chunk: np.ndarray
    pos_to_treatment: np.ndarray
    pos_to_problem: np.ndarray
    sentence_feats: np.ndarray
    label: RelationLabel = RelationLabel.Null

    def __len__(self) -> int:
        return len(self.word)


@dataclass
class FeatureExtractor:
    """Everything needed to encode an instance, fitted on training data."""

    vocab: FeatureVocab
    top_pos: list[tuple[str, ...]]
    counts: CooccurrenceCounts
    lexicons: AssertionLexicons

    @classmethod
    def fit(
        cls,
        train: Corpus,
        instances: Iterable[RelationInstance],
        lexicons: AssertionLexicons | None = None,
    ) -> "FeatureExtractor":
        return cls(
            build_vocab(train),
            top_pos_sequences(instances),
            cooccurrence_counts(train),
            lexicons if lexicons is not None else load_lexicons(),
        )

    def sentence_features(self, instance: RelationInstance) -> SentenceLevelFeatures:
        return SentenceLevelFeatures(
            encode_pos_sequence(instance, self.top_pos),
            compute_pmi(self.counts, instance.treatment.text, instance.problem.text),
            assertion_indices(instance.sentence, self.lexicons),
        )

    def encode(self, instance: RelationInstance) -> EncodedInstance:
        return encode_instance(instance, self.vocab, self.top_pos, self.counts, self.lexicons)

    def save(self, path: str | Path) -> None:
        """Vocab, POS sequences and counts as JSON.  Lexicons are not saved;
        they are reloaded from their directory."""
        blob = {
            "word_ids": self.vocab.word_ids,
            "pos_ids": self.vocab.pos_ids,
            "chunk_ids": self.vocab.chunk_ids,
            "top_pos": [list(s) for s in self.top_pos],
            "counts": self.counts.to_json(),
        }
        Path(path).write_text(json.dumps(blob, sort_keys=True), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path, lexicons: AssertionLexicons | None = None) -> "FeatureExtractor":
        blob = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(
            FeatureVocab(blob["word_ids"], blob["pos_ids"], blob["chunk_ids"]),
            [tuple(s) for s in blob["top_pos"]],
            CooccurrenceCounts.from_json(blob["counts"]),
            lexicons if lexicons is not None else load_lexicons(),
        )


def encode_instance(
    instance: RelationInstance,
    vocab: FeatureVocab,
    top_pos: Sequence[tuple[str, ...]],
    counts: CooccurrenceCounts,
    lexicons: AssertionLexicons,
) -> EncodedInstance:
    sent = instance.sentence
    n = len(sent)
    feats = SentenceLevelFeatures(
        encode_pos_sequence(instance, top_pos),
        compute_pmi(counts, instance.treatment.text, instance.problem.text),
        assertion_indices(sent, lexicons),
    )
    return EncodedInstance(
        word=np.array([vocab.word(t.text) for t in sent.tokens], dtype=np.int64),
        pos=np.array([vocab.pos(t.pos) for t in sent.tokens], dtype=np.int64),
        chunk=np.array([vocab.chunk(t.chunk) for t in sent.tokens], dtype=np.int64),
        pos_to_treatment=position_vector(n, instance.treatment).astype(np.int64),
        pos_to_problem=position_vector(n, instance.problem).astype(np.int64),
        sentence_feats=feats.to_vector(),
        label=instance.label,
    )
