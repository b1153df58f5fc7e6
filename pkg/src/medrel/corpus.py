"""Reading i2b2-style annotation files and building classification candidates.

A document ``<id>.txt`` holds one pre-tokenized sentence per line.  Concepts
live in ``<id>.con``, relations in ``<id>.rel`` and optional POS/chunk tags in
``<id>.tags``.  Line numbers are 1-based, token offsets 0-based and inclusive.
"""

from __future__ import annotations

import enum
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

log = logging.getLogger(__name__)

UNTAGGED = "UNK"
PLACEHOLDER_POS = "NN"
PLACEHOLDER_CHUNK = "NP"
CONCEPT_TYPES = ("treatment", "problem", "test")
# relation types from the i2b2 2010 task that do not involve a treatment
OTHER_I2B2_LABELS = frozenset({"TeRP", "TeCP", "PIP"})


class AnnotationError(ValueError):
    """Base class for malformed or inconsistent annotation data."""


class ParseError(AnnotationError):
    def __init__(self, reason: str, offset: int, line: str = ""):
        self.reason = reason
        self.offset = offset
        self.line = line
        super().__init__(f"{reason} at byte {offset}: {line!r}")


class SpanRangeError(AnnotationError):
    pass


class LabelError(AnnotationError):
    def __init__(self, label: str):
        self.label = label
        super().__init__(f"unknown relation label {label!r}")


class DanglingAnnotationError(AnnotationError):
    def __init__(self, doc_id: str, lines: Sequence[int]):
        self.doc_id = doc_id
        self.lines = list(lines)
        where = ", ".join(str(n) for n in self.lines)
        super().__init__(
            f"{doc_id}.rel: relation argument(s) not found in concept file (lines {where})"
        )


class RelationLabel(enum.Enum):
    """Relation types in their fixed index order; ``Null`` means no relation."""

    TrAP = "TrAP"
    TrCP = "TrCP"
    TrIP = "TrIP"
    TrNAP = "TrNAP"
    TrWP = "TrWP"
    Null = "Null"

    @property
    def index(self) -> int:
        return _LABEL_INDEX[self]

    @classmethod
    def from_index(cls, i: int) -> "RelationLabel":
        return LABELS[i]

    @classmethod
    def parse(cls, text: str) -> "RelationLabel":
        try:
            label = cls(text)
        except ValueError:
            raise LabelError(text) from None
        if label is cls.Null:
            raise LabelError(text)
        return label

    def __str__(self) -> str:
        return self.value


LABELS: tuple[RelationLabel, ...] = tuple(RelationLabel)
POSITIVE_LABELS: tuple[RelationLabel, ...] = LABELS[:-1]
_LABEL_INDEX = {lab: i for i, lab in enumerate(LABELS)}


@dataclass(frozen=True)
class Token:
    text: str
    index: int
    pos: str = UNTAGGED
    chunk: str = UNTAGGED


@dataclass(frozen=True)
class Sentence:
    doc_id: str
    line: int
    tokens: tuple[Token, ...]

    def __post_init__(self):
        if not self.tokens:
            raise AnnotationError(f"{self.doc_id}:{self.line}: empty sentence")
        if self.line < 1:
            raise AnnotationError(f"{self.doc_id}: line numbers start at 1, got {self.line}")

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def words(self) -> list[str]:
        return [t.text for t in self.tokens]


@dataclass(frozen=True)
class ConceptSpan:
    """A concept mention.  ``ctype`` is None for spans read from a relation
    line, before they are matched against the concept file."""

    text: str
    line: int
    tok_start: int
    tok_end: int
    ctype: str | None = None

    def __post_init__(self):
        if self.tok_start > self.tok_end:
            raise SpanRangeError(
                f"span start {self.tok_start} after end {self.tok_end} on line {self.line}"
            )
        if self.ctype is not None and self.ctype not in CONCEPT_TYPES:
            raise AnnotationError(f"unknown concept type {self.ctype!r}")

    @property
    def location(self) -> tuple[int, int, int]:
        return (self.line, self.tok_start, self.tok_end)

    def overlaps(self, other: "ConceptSpan") -> bool:
        return (
            self.line == other.line
            and self.tok_start <= other.tok_end
            and other.tok_start <= self.tok_end
        )


@dataclass(frozen=True)
class RelationInstance:
    sentence: Sentence
    treatment: ConceptSpan
    problem: ConceptSpan
    label: RelationLabel = RelationLabel.Null

    @property
    def key(self) -> tuple:
        """Identity of the candidate pair, independent of its label."""
        t, p = self.treatment, self.problem
        return (
            self.sentence.doc_id,
            self.sentence.line,
            (t.tok_start, t.tok_end),
            (p.tok_start, p.tok_end),
        )

    def with_label(self, label: RelationLabel) -> "RelationInstance":
        return RelationInstance(self.sentence, self.treatment, self.problem, label)

    def ordered_spans(self) -> tuple[ConceptSpan, ConceptSpan]:
        """The two spans in surface order."""
        if self.treatment.tok_start <= self.problem.tok_start:
            return self.treatment, self.problem
        return self.problem, self.treatment


@dataclass
class Document:
    doc_id: str
    sentences: dict[int, Sentence] = field(default_factory=dict)
    concepts: list[ConceptSpan] = field(default_factory=list)
    relations: list[RelationInstance] = field(default_factory=list)


@dataclass
class Corpus:
    documents: dict[str, Document] = field(default_factory=dict)
    source: dict[str, Path | None] = field(default_factory=dict)

    @property
    def sentences(self) -> list[Sentence]:
        return [s for d in self.documents.values() for s in d.sentences.values()]

    @property
    def concepts(self) -> list[tuple[str, ConceptSpan]]:
        return [(d.doc_id, c) for d in self.documents.values() for c in d.concepts]

    @property
    def gold_relations(self) -> list[RelationInstance]:
        return [r for d in self.documents.values() for r in d.relations]

    def counts(self) -> dict[str, int]:
        return {
            "documents": len(self.documents),
            "sentences": len(self.sentences),
            "concepts": len(self.concepts),
            "relations": len(self.gold_relations),
        }

    def subset(self, doc_ids: Iterable[str]) -> "Corpus":
        keep = set(doc_ids)
        return Corpus(
            {k: d for k, d in self.documents.items() if k in keep}, dict(self.source)
        )


def tokenize_line(text: str) -> list[Token]:
    """Split a pre-tokenized sentence on whitespace.

    An empty list means the line holds no sentence; callers skip it but keep
    counting lines.
    """
    return [Token(w, i) for i, w in enumerate(text.split())]


# --- concept / relation line grammar ---------------------------------------

_SPAN_TAIL = re.compile(r'" (\d+):(\d+) (\d+):(\d+)')
_TYPE_FIELD = re.compile(r'\|\|t="([^"]*)"$')
_LABEL_FIELD = re.compile(r'\|\|r="([^"]*)"\|\|')


def _parse_span(line: str, pos: int) -> tuple[ConceptSpan, int]:
    """Parse ``c="text" L:S L:E`` starting at *pos*; returns the span and the
    offset just past it."""
    if not line.startswith('c="', pos):
        raise ParseError('expected c="', pos, line)
    start = pos + 3
    m = None
    for cand in _SPAN_TAIL.finditer(line, start):
        after = cand.end()
        if after == len(line) or line.startswith("||", after):
            m = cand
            break
    if m is None:
        raise ParseError("expected closing quote followed by L:S L:E", start, line)
    l1, s, l2, e = (int(g) for g in m.groups())
    if l1 != l2:
        raise ParseError(f"span crosses lines ({l1} vs {l2})", m.start(3), line)
    if l1 < 1:
        raise ParseError("line numbers start at 1", m.start(1), line)
    if s > e:
        raise SpanRangeError(f"span start {s} after end {e} on line {l1}")
    return ConceptSpan(line[start : m.start()], l1, s, e), m.end()


def parse_concept_line(line: str) -> ConceptSpan:
    line = line.rstrip("\r\n")
    span, pos = _parse_span(line, 0)
    m = _TYPE_FIELD.match(line, pos)
    if m is None:
        raise ParseError('expected ||t="<type>"', pos, line)
    ctype = m.group(1)
    if ctype not in CONCEPT_TYPES:
        raise ParseError(f"unknown concept type {ctype!r}", m.start(1), line)
    return ConceptSpan(span.text, span.line, span.tok_start, span.tok_end, ctype)


def parse_relation_line(line: str) -> tuple[ConceptSpan, ConceptSpan, RelationLabel]:
    """Parse ``c=".." L:S L:E||r="LABEL"||c=".." L:S L:E``.

    The spans come back in file order with ``ctype`` unset; role resolution
    happens against the concept file in :func:`load_corpus`.
    """
    line = line.rstrip("\r\n")
    first, pos = _parse_span(line, 0)
    m = _LABEL_FIELD.match(line, pos)
    if m is None:
        raise ParseError('expected ||r="<label>"||', pos, line)
    label = RelationLabel.parse(m.group(1))
    second, end = _parse_span(line, m.end())
    if end != len(line):
        raise ParseError("trailing characters", end, line)
    return first, second, label


def _span_field(span: ConceptSpan) -> str:
    return f'c="{span.text}" {span.line}:{span.tok_start} {span.line}:{span.tok_end}'


def serialize_concept(span: ConceptSpan) -> str:
    return f'{_span_field(span)}||t="{span.ctype}"'


def serialize_relation(first: ConceptSpan, second: ConceptSpan, label: RelationLabel) -> str:
    if label is RelationLabel.Null:
        raise LabelError("Null")
    return f'{_span_field(first)}||r="{label.value}"||{_span_field(second)}'


# --- loading ----------------------------------------------------------------


def _read_tags(path: Path) -> list[list[tuple[str, str, str]]]:
    blocks: list[list[tuple[str, str, str]]] = []
    cur: list[tuple[str, str, str]] = []
    with open(path, encoding="utf-8") as f:
        for n, raw in enumerate(f, 1):
            raw = raw.rstrip("\r\n")
            if not raw.strip():
                if cur:
                    blocks.append(cur)
                    cur = []
                continue
            parts = raw.split("\t")
            if len(parts) != 3:
                raise AnnotationError(f"{path}:{n}: expected token<TAB>POS<TAB>chunk")
            cur.append((parts[0], parts[1], parts[2]))
    if cur:
        blocks.append(cur)
    return blocks


def _read_sentences(doc_id: str, path: Path, tag_path: Path | None) -> dict[int, Sentence]:
    raw: list[tuple[int, list[Token]]] = []
    with open(path, encoding="utf-8") as f:
        for n, text in enumerate(f, 1):
            toks = tokenize_line(text)
            if toks:
                raw.append((n, toks))

    if tag_path is not None:
        blocks = _read_tags(tag_path)
        if len(blocks) != len(raw):
            raise AnnotationError(
                f"{tag_path}: {len(blocks)} tagged sentences for {len(raw)} text lines"
            )
    else:
        blocks = [[(t.text, PLACEHOLDER_POS, PLACEHOLDER_CHUNK) for t in toks] for _, toks in raw]

    sentences = {}
    for (n, toks), tags in zip(raw, blocks):
        if len(tags) != len(toks) or any(t.text != w for t, (w, _, _) in zip(toks, tags)):
            raise AnnotationError(f"{tag_path}: tags do not match tokens of {doc_id} line {n}")
        sentences[n] = Sentence(
            doc_id, n, tuple(Token(t.text, t.index, p, c) for t, (_, p, c) in zip(toks, tags))
        )
    return sentences


def _check_span(doc_id: str, span: ConceptSpan, sentences: dict[int, Sentence]) -> None:
    sent = sentences.get(span.line)
    if sent is None:
        raise SpanRangeError(f"{doc_id}: concept {span.text!r} on missing line {span.line}")
    if span.tok_end >= len(sent):
        raise SpanRangeError(
            f"{doc_id}:{span.line}: span {span.tok_start}:{span.tok_end} "
            f"beyond sentence of {len(sent)} tokens"
        )
    surface = " ".join(sent.words[span.tok_start : span.tok_end + 1])
    if surface.lower() != " ".join(span.text.split()).lower():
        raise AnnotationError(
            f"{doc_id}:{span.line}: concept text {span.text!r} does not match tokens {surface!r}"
        )


def _read_lines(path: Path) -> Iterator[tuple[int, str]]:
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            if line.strip():
                yield n, line.rstrip("\r\n")


def load_document(
    doc_id: str,
    txt: Path,
    con: Path | None = None,
    rel: Path | None = None,
    tags: Path | None = None,
) -> Document:
    doc = Document(doc_id, _read_sentences(doc_id, txt, tags))

    if con is None:
        log.warning("%s: no concept file, loading document without concepts", doc_id)
    else:
        for n, line in _read_lines(con):
            try:
                span = parse_concept_line(line)
            except AnnotationError as exc:
                raise AnnotationError(f"{con}:{n}: {exc}") from exc
            _check_span(doc_id, span, doc.sentences)
            doc.concepts.append(span)

    if rel is None:
        return doc
    by_loc = {c.location: c for c in doc.concepts}
    dangling = []
    seen: dict[frozenset, RelationLabel] = {}
    for n, line in _read_lines(rel):
        try:
            first, second, label = parse_relation_line(line)
        except LabelError as exc:
            if exc.label in OTHER_I2B2_LABELS:
                continue
            raise LabelError(exc.label) from exc
        except AnnotationError as exc:
            raise AnnotationError(f"{rel}:{n}: {exc}") from exc
        a, b = by_loc.get(first.location), by_loc.get(second.location)
        if a is None or b is None:
            dangling.append(n)
            continue
        if a.line != b.line:
            log.warning("%s:%d: relation spans two sentences, dropped", rel, n)
            continue
        roles = {a.ctype: a, b.ctype: b}
        if set(roles) != {"treatment", "problem"}:
            raise AnnotationError(
                f"{rel}:{n}: {label} must relate a treatment and a problem, "
                f"got {a.ctype} and {b.ctype}"
            )
        pair = frozenset((a.location, b.location))
        if pair in seen:
            log.warning(
                "%s:%d: pair already labelled %s, ignoring duplicate %s", rel, n, seen[pair], label
            )
            continue
        seen[pair] = label
        doc.relations.append(
            RelationInstance(doc.sentences[a.line], roles["treatment"], roles["problem"], label)
        )
    if dangling:
        raise DanglingAnnotationError(doc_id, dangling)
    return doc


def _sidecar(directory: Path | None, stem: str, suffix: str) -> Path | None:
    if directory is None:
        return None
    p = directory / f"{stem}{suffix}"
    return p if p.exists() else None


def load_corpus(
    txt_dir: str | Path,
    con_dir: str | Path | None = None,
    rel_dir: str | Path | None = None,
    tag_dir: str | Path | None = None,
) -> Corpus:
    """Load every ``<id>.txt`` under *txt_dir* with its sidecar files.

    Concept, relation and tag directories default to *txt_dir*.  Documents
    without a ``.tags`` file get placeholder tags (POS ``NN``, chunk ``NP``).
    """
    txt_dir = Path(txt_dir)
    if not txt_dir.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {txt_dir}")
    con_dir = Path(con_dir) if con_dir is not None else txt_dir
    rel_dir = Path(rel_dir) if rel_dir is not None else txt_dir
    tag_dir = Path(tag_dir) if tag_dir is not None else txt_dir

    corpus = Corpus(source={"txt": txt_dir, "con": con_dir, "rel": rel_dir, "tags": tag_dir})
    for txt in sorted(txt_dir.glob("*.txt")):
        stem = txt.stem
        corpus.documents[stem] = load_document(
            stem,
            txt,
            _sidecar(con_dir, stem, ".con"),
            _sidecar(rel_dir, stem, ".rel"),
            _sidecar(tag_dir, stem, ".tags"),
        )
    log.info("loaded corpus %s: %s", txt_dir, corpus.counts())
    return corpus


def load_corpus_dir(root: str | Path) -> Corpus:
    """Load a corpus from a single directory.

    Accepts either a flat directory or the i2b2 layout with ``txt/``,
    ``concept/`` (or ``con/``), ``rel/`` and ``tags/`` subdirectories.
    """
    root = Path(root)
    if not root.is_dir():
        raise FileNotFoundError(f"corpus directory not found: {root}")
    if (root / "txt").is_dir():
        con = next((root / d for d in ("concept", "con") if (root / d).is_dir()), root / "txt")
        rel = root / "rel" if (root / "rel").is_dir() else None
        tags = root / "tags" if (root / "tags").is_dir() else None
        return load_corpus(root / "txt", con, rel, tags)
    return load_corpus(root)


# --- candidates -------------------------------------------------------------


def generate_candidates(corpus: Corpus) -> list[RelationInstance]:
    """One instance per co-occurring (treatment, problem) pair.

    Gold labels are matched on the unordered pair of spans; everything else
    is Null.  Overlapping treatment/problem spans are not paired.
    """
    out = []
    for doc in corpus.documents.values():
        gold = {frozenset((r.treatment.location, r.problem.location)): r.label for r in doc.relations}
        by_line: dict[int, list[ConceptSpan]] = {}
        for c in doc.concepts:
            by_line.setdefault(c.line, []).append(c)
        for line, concepts in by_line.items():
            sent = doc.sentences[line]
            treatments = [c for c in concepts if c.ctype == "treatment"]
            problems = [c for c in concepts if c.ctype == "problem"]
            for t in treatments:
                for p in problems:
                    if t.overlaps(p):
                        continue
                    label = gold.get(frozenset((t.location, p.location)), RelationLabel.Null)
                    out.append(RelationInstance(sent, t, p, label))
    out.sort(
        key=lambda r: (
            r.sentence.doc_id,
            r.sentence.line,
            r.treatment.tok_start,
            r.problem.tok_start,
            r.treatment.tok_end,
            r.problem.tok_end,
        )
    )
    return out


def sample_negatives(
    instances: Sequence[RelationInstance], n: int, seed: int
) -> list[RelationInstance]:
    """Keep every positive and ``min(n, #Null)`` Null instances chosen
    uniformly without replacement.  Input order is preserved."""
    if n < 0:
        raise ValueError("number of negative samples must be >= 0")
    nulls = [i for i, r in enumerate(instances) if r.label is RelationLabel.Null]
    k = min(n, len(nulls))
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(len(nulls), size=k, replace=False).tolist()) if k else set()
    keep = {nulls[j] for j in chosen}
    return [
        r for i, r in enumerate(instances) if r.label is not RelationLabel.Null or i in keep
    ]


def split_documents(
    corpus: Corpus, test_fraction: float = 0.1, seed: int = 0
) -> tuple[Corpus, Corpus]:
    """Seeded document-level train/test split."""
    if not 0 <= test_fraction < 1:
        raise ValueError("test_fraction must be in [0, 1)")
    ids = sorted(corpus.documents)
    n_test = int(round(len(ids) * test_fraction))
    if test_fraction > 0 and len(ids) > 1:
        n_test = max(1, n_test)
    order = np.random.default_rng(seed).permutation(len(ids))
    test = {ids[i] for i in order[:n_test]}
    return corpus.subset(i for i in ids if i not in test), corpus.subset(test)


def write_relations(instances: Iterable[RelationInstance], out_dir: str | Path) -> list[Path]:
    """Write non-Null instances as ``<doc>.rel`` files, treatment first."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    per_doc: dict[str, list[str]] = {}
    for r in instances:
        if r.label is RelationLabel.Null:
            continue
        per_doc.setdefault(r.sentence.doc_id, []).append(
            serialize_relation(r.treatment, r.problem, r.label)
        )
    paths = []
    for doc_id, lines in sorted(per_doc.items()):
        p = out_dir / f"{doc_id}.rel"
        p.write_text("".join(line + "\n" for line in lines), encoding="utf-8")
        paths.append(p)
    return paths


def read_relation_keys(rel_dir: str | Path, corpus: Corpus) -> dict[tuple, RelationLabel]:
    """Read predicted ``.rel`` files back as ``{instance key: label}``,
    resolving roles against *corpus* concepts."""
    rel_dir = Path(rel_dir)
    out = {}
    for doc_id, doc in corpus.documents.items():
        path = rel_dir / f"{doc_id}.rel"
        if not path.exists():
            continue
        by_loc = {c.location: c for c in doc.concepts}
        dangling = []
        for n, line in _read_lines(path):
            first, second, label = parse_relation_line(line)
            a, b = by_loc.get(first.location), by_loc.get(second.location)
            if a is None or b is None:
                dangling.append(n)
                continue
            t, p = (a, b) if a.ctype == "treatment" else (b, a)
            out[(doc_id, t.line, (t.tok_start, t.tok_end), (p.tok_start, p.tok_end))] = label
        if dangling:
            raise DanglingAnnotationError(doc_id, dangling)
    return out


def write_corpus(corpus: Corpus, out_dir: str | Path, tags: bool = True) -> Path:
    """Write ``.txt``/``.con``/``.rel`` (and ``.tags``) files for every
    document into one flat directory."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for doc_id, doc in corpus.documents.items():
        n_lines = max(doc.sentences, default=0)
        text = [""] * n_lines
        for n, s in doc.sentences.items():
            text[n - 1] = " ".join(s.words)
        (out_dir / f"{doc_id}.txt").write_text("".join(t + "\n" for t in text), encoding="utf-8")
        (out_dir / f"{doc_id}.con").write_text(
            "".join(serialize_concept(c) + "\n" for c in doc.concepts), encoding="utf-8"
        )
        (out_dir / f"{doc_id}.rel").write_text(
            "".join(
                serialize_relation(r.treatment, r.problem, r.label) + "\n" for r in doc.relations
            ),
            encoding="utf-8",
        )
        if tags:
            blocks = [
                "".join(f"{t.text}\t{t.pos}\t{t.chunk}\n" for t in doc.sentences[n].tokens)
                for n in sorted(doc.sentences)
            ]
            (out_dir / f"{doc_id}.tags").write_text("\n".join(blocks), encoding="utf-8")
    return out_dir
