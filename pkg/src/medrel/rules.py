"""High-precision rule engine.

Two strategies, tried in order: phrase templates such as ``<problem> is
diagnosed with <treatment>``, then a verb lexicon looked up along the
dependency path between the two concepts (or, without a parse, along the
words between them).
"""

from __future__ import annotations

import re
from collections import deque
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .corpus import AnnotationError, Corpus, LabelError, RelationInstance, RelationLabel, Token

TREATMENT_SLOT = "<treatment>"
PROBLEM_SLOT = "<problem>"
_SLOT_SPLIT = re.compile(r"(<treatment>|<problem>)")

# a token listed under several labels resolves to the rarest class
VERB_PRIORITY = (
    RelationLabel.TrIP,
    RelationLabel.TrWP,
    RelationLabel.TrNAP,
    RelationLabel.TrCP,
    RelationLabel.TrAP,
)


class PatternError(ValueError):
    def __init__(self, message: str, lineno: int | None = None):
        self.lineno = lineno
        super().__init__(f"line {lineno}: {message}" if lineno is not None else message)


class ParseGraphError(ValueError):
    pass


@dataclass(frozen=True)
class RuleContext:
    before: tuple[Token, ...]
    first: tuple[Token, ...]
    middle: tuple[Token, ...]
    second: tuple[Token, ...]
    after: tuple[Token, ...]
    first_role: str
    second_role: str

    @classmethod
    def of(cls, instance: RelationInstance) -> "RuleContext":
        left, right = instance.ordered_spans()
        toks = instance.sentence.tokens
        first_role = "treatment" if left is instance.treatment else "problem"
        return cls(
            toks[: left.tok_start],
            toks[left.tok_start : left.tok_end + 1],
            toks[left.tok_end + 1 : right.tok_start],
            toks[right.tok_start : right.tok_end + 1],
            toks[right.tok_end + 1 :],
            first_role,
            "problem" if first_role == "treatment" else "treatment",
        )

    def tokens(self) -> tuple[Token, ...]:
        return self.before + self.first + self.middle + self.second + self.after


@dataclass(frozen=True)
class PhrasePattern:
    """A template split into the literal runs around two slots.

    ``before`` must end right where the first slot starts, ``after`` must
    start right after the second slot, and ``middle`` must occur as a
    contiguous run somewhere between the two slots.
    """

    label: RelationLabel
    first_role: str
    before: tuple[str, ...]
    middle: tuple[str, ...]
    after: tuple[str, ...]
    source: str = ""

    @property
    def n_literals(self) -> int:
        return len(self.before) + len(self.middle) + len(self.after)


def parse_pattern(text: str, label: RelationLabel | str) -> PhrasePattern:
    if isinstance(label, str):
        label = RelationLabel.parse(label)
    if label is RelationLabel.Null:
        raise PatternError("patterns need a positive label")
    parts = _SLOT_SPLIT.split(text)
    slots = parts[1::2]
    if slots.count(TREATMENT_SLOT) != 1 or slots.count(PROBLEM_SLOT) != 1:
        raise PatternError(f"pattern needs exactly one <treatment> and one <problem>: {text!r}")
    before, middle, after = (tuple(w.lower() for w in chunk.split()) for chunk in parts[::2])
    if not (before or middle or after):
        raise PatternError(f"pattern has no literal words: {text!r}")
    return PhrasePattern(label, slots[0][1:-1], before, middle, after, text)


def _words(tokens: Sequence[Token]) -> list[str]:
    return [t.text.lower() for t in tokens]


def _contains_run(haystack: list[str], needle: tuple[str, ...]) -> bool:
    n = len(needle)
    return any(tuple(haystack[i : i + n]) == needle for i in range(len(haystack) - n + 1))


def match_pattern(pattern: PhrasePattern, instance: RelationInstance) -> bool:
    ctx = RuleContext.of(instance)
    if ctx.first_role != pattern.first_role:
        return False
    before = _words(ctx.before)
    after = _words(ctx.after)
    if pattern.before and tuple(before[len(before) - len(pattern.before) :]) != pattern.before:
        return False
    if pattern.after and tuple(after[: len(pattern.after)]) != pattern.after:
        return False
    return not pattern.middle or _contains_run(_words(ctx.middle), pattern.middle)


def by_precedence(patterns: Iterable[PhrasePattern]) -> list[PhrasePattern]:
    """Longest template first; file order breaks ties."""
    return sorted(patterns, key=lambda p: -p.n_literals)


def _data_lines(path: Path) -> Iterable[tuple[int, list[str]]]:
    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        yield n, parts


def load_patterns(path: str | Path | None = None) -> list[PhrasePattern]:
    """Read ``LABEL<TAB>template`` lines.  ``None`` loads the bundled file."""
    path = resources.files("medrel") / "data" / "patterns.tsv" if path is None else Path(path)
    out = []
    for n, parts in _data_lines(path):
        if len(parts) != 2:
            raise PatternError("expected LABEL<TAB>template", n)
        try:
            out.append(parse_pattern(parts[1].strip(), parts[0].strip()))
        except (LabelError, PatternError) as exc:
            raise PatternError(str(exc), n) from exc
    return out


@dataclass(frozen=True)
class VerbLexicon:
    verbs: dict

    def __post_init__(self):
        for label, words in self.verbs.items():
            if label is RelationLabel.Null:
                raise ValueError("verb lexicon takes positive labels only")
            if not words:
                raise ValueError(f"empty verb set for {label}")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[RelationLabel, str]]) -> "VerbLexicon":
        verbs: dict[RelationLabel, set[str]] = {}
        for label, verb in pairs:
            verbs.setdefault(label, set()).add(verb.lower())
        return cls({k: frozenset(v) for k, v in verbs.items()})

    def without(self, label: RelationLabel) -> "VerbLexicon":
        return VerbLexicon({k: v for k, v in self.verbs.items() if k is not label})


def load_verb_lexicon(path: str | Path | None = None) -> VerbLexicon:
    path = resources.files("medrel") / "data" / "verbs.tsv" if path is None else Path(path)
    pairs = []
    for n, parts in _data_lines(path):
        if len(parts) != 2 or not parts[1].strip():
            raise PatternError("expected LABEL<TAB>verb", n)
        try:
            pairs.append((RelationLabel.parse(parts[0].strip()), parts[1].strip()))
        except LabelError as exc:
            raise PatternError(str(exc), n) from exc
    return VerbLexicon.from_pairs(pairs)


# --- dependency paths ---------------------------------------------------------


@dataclass(frozen=True)
class ParseGraph:
    heads: tuple[int, ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        n = len(self.heads)
        if len(self.labels) != n:
            raise ParseGraphError("one dependency label per token required")
        if sum(h == -1 for h in self.heads) != 1:
            raise ParseGraphError("parse must have exactly one root")
        if any(not -1 <= h < n or h == i for i, h in enumerate(self.heads)):
            raise ParseGraphError("head index out of range or self-attached")
        for i in range(n):
            seen = set()
            while i != -1:
                if i in seen:
                    raise ParseGraphError("dependency graph has a cycle")
                seen.add(i)
                i = self.heads[i]

    def __len__(self) -> int:
        return len(self.heads)

    def neighbours(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in self.heads]
        for i, h in enumerate(self.heads):
            if h >= 0:
                adj[i].append(h)
                adj[h].append(i)
        return adj


def read_parse_file(path: str | Path) -> list[ParseGraph]:
    """Read a ``.dep`` sidecar: ``index<TAB>head<TAB>label`` per token,
    sentences separated by blank lines.  Heads are 0-based, -1 for root."""
    graphs = []
    rows: list[tuple[int, str]] = []

    def flush():
        if rows:
            graphs.append(ParseGraph(tuple(h for h, _ in rows), tuple(l for _, l in rows)))
            rows.clear()

    for n, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            flush()
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise ParseGraphError(f"{path}:{n}: expected index<TAB>head<TAB>label")
        try:
            idx, head = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseGraphError(f"{path}:{n}: non-integer index or head") from None
        if idx != len(rows):
            raise ParseGraphError(f"{path}:{n}: token index {idx}, expected {len(rows)}")
        rows.append((head, parts[2]))
    flush()
    return graphs


def load_parses(parse_dir: str | Path, corpus: Corpus) -> dict[tuple[str, int], ParseGraph]:
    """Parses keyed by (doc_id, line), aligned to the corpus sentences."""
    parse_dir = Path(parse_dir)
    if not parse_dir.is_dir():
        raise FileNotFoundError(f"parse directory not found: {parse_dir}")
    out = {}
    for doc_id, doc in corpus.documents.items():
        path = parse_dir / f"{doc_id}.dep"
        if not path.exists():
            continue
        graphs = read_parse_file(path)
        lines = sorted(doc.sentences)
        if len(graphs) != len(lines):
            raise AnnotationError(f"{path}: {len(graphs)} parses for {len(lines)} sentences")
        for line, g in zip(lines, graphs):
            if len(g) != len(doc.sentences[line]):
                raise AnnotationError(f"{path}: parse of line {line} has wrong token count")
            out[(doc_id, line)] = g
    return out


def surface_path(instance: RelationInstance) -> list[Token]:
    return list(RuleContext.of(instance).middle)


def dep_shortest_path(parse: ParseGraph | None, instance: RelationInstance) -> list[Token]:
    """Tokens strictly inside the tree path joining the last tokens of the
    two spans, listed from the left concept to the right one.  Falls back to
    the surface path when *parse* is None."""
    if parse is None:
        return surface_path(instance)
    toks = instance.sentence.tokens
    if len(parse) != len(toks):
        raise ParseGraphError("parse does not cover the sentence")
    left, right = instance.ordered_spans()
    src, dst = left.tok_end, right.tok_end
    adj = parse.neighbours()
    prev = {src: -1}
    queue = deque([src])
    while queue and dst not in prev:
        u = queue.popleft()
        for v in adj[u]:
            if v not in prev:
                prev[v] = u
                queue.append(v)
    path = []
    u = prev[dst]
    while u != src:
        path.append(u)
        u = prev[u]
    path.reverse()
    return [toks[i] for i in path]


def verb_classify(path: Iterable[Token | str], lex: VerbLexicon) -> RelationLabel | None:
    for tok in path:
        w = (tok.text if isinstance(tok, Token) else tok).lower()
        for label in VERB_PRIORITY:
            if w in lex.verbs.get(label, ()):
                return label
    return None


def rule_predict(
    instance: RelationInstance,
    patterns: Sequence[PhrasePattern],
    lex: VerbLexicon,
    parse: ParseGraph | None = None,
) -> RelationLabel | None:
    """Pattern match (longest first), then verb lookup on the path."""
    for pat in by_precedence(patterns):
        if match_pattern(pat, instance):
            return pat.label
    return verb_classify(dep_shortest_path(parse, instance), lex)


def apply_rules(
    instances: Iterable[RelationInstance],
    patterns: Sequence[PhrasePattern],
    lex: VerbLexicon,
    parses: dict[tuple[str, int], ParseGraph] | None = None,
) -> dict[tuple, RelationLabel]:
    """Rule predictions keyed by instance key; silent instances are absent."""
    patterns = by_precedence(patterns)
    parses = parses or {}
    out = {}
    for inst in instances:
        parse = parses.get((inst.sentence.doc_id, inst.sentence.line))
        label = rule_predict(inst, patterns, lex, parse)
        if label is not None:
            out[inst.key] = label
    return out
