"""Generated corpora for exercising the pipeline without restricted data.

``marker_corpus`` makes a toy set whose label is fixed by one marker word.
``clinical_corpus`` imitates the class imbalance of clinical notes: a large
administered-for class with a handful of regular phrasings, four rare classes
each signalled by one cue verb out of a long list, and many unrelated pairs.
The rare-class cue lists are also returned as a verb lexicon, playing the
part of hand-curated rules that know more cues than the training data shows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .corpus import ConceptSpan, Corpus, Document, RelationInstance, RelationLabel, Sentence, Token
from .rules import VerbLexicon

TrAP, TrCP, TrIP, TrNAP, TrWP, Null = (
    RelationLabel.TrAP,
    RelationLabel.TrCP,
    RelationLabel.TrIP,
    RelationLabel.TrNAP,
    RelationLabel.TrWP,
    RelationLabel.Null,
)

DRUGS = (
    "aspirin heparin coumadin lasix metoprolol vancomycin ceftriaxone levaquin ceptaz "
    "plavix insulin prednisone morphine percocet zosyn flagyl lisinopril amiodarone "
    "digoxin tylenol ativan haldol dilaudid protonix keflex bactrim diltiazem "
    "potassium_chloride iv_fluids nitroglycerin"
).split()
PROBLEMS = (
    "fever pain pneumonia hypertension atrial_fibrillation chest_pain nausea infection "
    "bleeding anemia edema cellulitis sepsis hypokalemia delirium agitation uti dvt "
    "seizure rash cough dyspnea hypotension headache vomiting"
).split()

# cue verbs per rare class; disjoint across classes
CUES = {
    TrIP: (
        "improved resolved relieved controlled alleviated eased lessened stabilized "
        "reversed corrected cleared subsided diminished abated settled remitted "
        "normalized quieted soothed healed mitigated attenuated calmed tempered "
        "moderated dampened palliated lifted rectified cured restored repaired mended "
        "reduced suppressed contained curbed arrested relaxed softened cooled lowered "
        "decreased shrunk rescued revived refreshed recovered remedied salved assuaged "
        "allayed appeased mollified quelled quenched muted blunted dulled steadied"
    ).split(),
    TrWP: (
        "worsened exacerbated aggravated intensified heightened compounded escalated "
        "deepened magnified amplified prolonged accelerated potentiated unmasked "
        "inflamed spread flared complicated hastened augmented deteriorated "
        "compromised destabilized sharpened enlarged extended multiplied boosted "
        "fueled fed inflated swelled raised elevated increased thickened widened "
        "broadened lengthened doubled tripled exaggerated enhanced strengthened hardened "
        "stiffened tightened troubled burdened overloaded strained stressed taxed "
        "weakened impaired damaged injured harmed disrupted disturbed"
    ).split(),
    TrCP: (
        "caused induced triggered provoked precipitated produced generated elicited "
        "prompted initiated sparked evoked engendered spurred fostered incited "
        "occasioned yielded effected kindled resulted originated instigated "
        "stimulated introduced entailed rendered propagated seeded promoted formed "
        "spawned bred hatched founded established launched opened instituted installed "
        "implanted planted sowed grown developed built constructed manufactured "
        "fabricated forged shaped molded framed designed devised invented authored "
        "composed conceived minted"
    ).split(),
    TrNAP: (
        "held discontinued stopped withheld avoided deferred suspended omitted ceased "
        "halted cancelled postponed declined refused contraindicated paused skipped "
        "tapered barred excluded rejected forgone waived interrupted terminated "
        "abandoned dropped retracted vetoed prohibited blocked banned forbidden denied "
        "withdrawn removed eliminated deleted erased ended finished closed shut locked "
        "sealed frozen stalled delayed shelved tabled parked benched sidelined "
        "dismissed discarded scrapped ditched nixed annulled revoked"
    ).split(),
}

# same slots as the rare-class sentences, but no relation
NEUTRAL = "noted assessed documented reviewed mentioned charted recorded discussed".split()

_POS = {".": ".", ";": ":", "was": "VBD", "and": "CC", "the": "DT", "her": "PRP$", "his": "PRP$"}
_PREP = {"with", "for", "by", "on", "to", "of", "after", "due"}


def _tag(word: str, role: str | None) -> tuple[str, str]:
    if role is not None:
        return "NN", "NP"
    if word in _PREP:
        return "IN", "PP"
    if word in _POS:
        return _POS[word], "O"
    if word.endswith("ed") or word in {"held", "spread", "given", "begun"}:
        return "VBN", "VP"
    return "NN", "NP"


@dataclass
class _DocBuilder:
    doc_id: str
    doc: Document = field(init=False)

    def __post_init__(self):
        self.doc = Document(self.doc_id)

    def add(self, parts, relations=()) -> int:
        """Append one sentence.  *parts* mixes plain words with
        ``("treatment"|"problem", name)`` concepts; *relations* holds
        ``(treatment_no, problem_no, label)``, counting each role separately
        in surface order.
        Returns the number of candidate pairs the sentence adds."""
        line = len(self.doc.sentences) + 1
        toks: list[Token] = []
        spans: list[ConceptSpan] = []
        for part in parts:
            role, text = part if isinstance(part, tuple) else (None, part)
            words = text.split()
            start = len(toks)
            for w in words:
                pos, chunk = _tag(w, role)
                toks.append(Token(w, len(toks), pos, chunk))
            if role is not None:
                spans.append(ConceptSpan(text, line, start, len(toks) - 1, role))
        sent = Sentence(self.doc_id, line, tuple(toks))
        self.doc.sentences[line] = sent
        self.doc.concepts.extend(spans)
        treatments = [s for s in spans if s.ctype == "treatment"]
        problems = [s for s in spans if s.ctype == "problem"]
        for ti, pi, label in relations:
            self.doc.relations.append(RelationInstance(sent, treatments[ti], problems[pi], label))
        return len(treatments) * len(problems)


def _name(rng, pool) -> str:
    return pool[rng.integers(len(pool))].replace("_", " ")


MARKERS = {TrAP: "alpha", TrCP: "bravo", TrIP: "charlie", TrNAP: "delta", TrWP: "echo", Null: "foxtrot"}


def marker_corpus(n: int = 50, seed: int = 0, doc_size: int = 10) -> Corpus:
    """*n* single-pair sentences whose label is set by a marker word.

    Every label, Null included, gets its own marker; the rest of the sentence
    is random filler around the two concepts.
    """
    rng = np.random.default_rng(seed)
    fillers = "the patient was seen today and noted with some then also".split()
    labels = list(MARKERS)

    def fill():
        return " ".join(rng.choice(fillers, size=rng.integers(1, 4)))

    corpus = Corpus()
    builder = None
    for k in range(n):
        if k % doc_size == 0:
            builder = _DocBuilder(f"marker{k // doc_size:03d}")
            corpus.documents[builder.doc_id] = builder.doc
        label = labels[k % len(labels)] if k < len(labels) else labels[rng.integers(len(labels))]
        parts = [fill(), ("problem", _name(rng, PROBLEMS)), fill(), MARKERS[label], fill(),
                 ("treatment", _name(rng, DRUGS)), "."]
        rels = [] if label is Null else [(0, 0, label)]
        builder.add(parts, rels)
    return corpus


def _clinical_sentence(rng, kind: str):
    """One sentence of the requested kind as (parts, relations)."""
    t, t2 = (_name(rng, DRUGS) for _ in range(2))
    p, p2 = (_name(rng, PROBLEMS) for _ in range(2))
    T, T2 = ("treatment", t), ("treatment", t2)
    P, P2 = ("problem", p), ("problem", p2)
    if kind == "TrAP":
        form = rng.integers(5)
        if form == 0:
            return [P, "was treated with", T, "."], [(0, 0, TrAP)]
        if form == 1:
            return ["she received", T, "for", P, "."], [(0, 0, TrAP)]
        if form == 2:
            return [T, "was started for", P, "."], [(0, 0, TrAP)]
        if form == 3:
            return ["he was given", T, "for his", P, "."], [(0, 0, TrAP)]
        return [T, "was prescribed for", P, "."], [(0, 0, TrAP)]
    if kind in ("TrIP", "TrWP", "TrCP"):
        label = RelationLabel(kind)
        cue = CUES[label][rng.integers(len(CUES[label]))]
        return ["her", P, "was", cue, "by", T, "."], [(0, 0, label)]
    if kind == "TrNAP":
        cue = CUES[TrNAP][rng.integers(len(CUES[TrNAP]))]
        return [T, "was", cue, "due to", P, "."], [(0, 0, TrNAP)]
    if kind == "neutral":
        word = NEUTRAL[rng.integers(len(NEUTRAL))]
        if rng.integers(2):
            return ["her", P, "was", word, "by", T, "."], []
        return [T, "was", word, "due to", P, "."], []
    # unrelated pairs, two candidates each
    form = rng.integers(3)
    if form == 0:
        # (t, p) administered-for, (t2, p) unrelated; "treated" lies between p and t2
        return [P, "was treated with", T, "and", T2, "was continued ."], [(0, 0, TrAP)]
    if form == 1:
        return [T, "was given for", P, "; no", P2, "."], [(0, 0, TrAP)]
    return ["home", T, "resumed ;", P, "and", P2, "noted on admission ."], []


def clinical_corpus(n_instances: int = 2000, seed: int = 0, doc_size: int = 10) -> Corpus:
    """Exactly *n_instances* candidate pairs with clinical-style class skew.

    Sentence kinds are drawn with probabilities TrAP 0.30, the four rare
    classes 0.035 each, 0.14 for Null sentences phrased like the rare
    classes, and 0.42 for sentences holding two candidates of which at least
    one is Null.
    """
    rng = np.random.default_rng(seed)
    kinds = ["TrAP", "TrIP", "TrWP", "TrCP", "TrNAP", "neutral", "mixed"]
    probs = [0.30, 0.035, 0.035, 0.035, 0.035, 0.14, 0.42]
    corpus = Corpus()
    total = 0
    k = 0
    builder = None
    while total < n_instances:
        if k % doc_size == 0:
            builder = _DocBuilder(f"synth{k // doc_size:04d}")
            corpus.documents[builder.doc_id] = builder.doc
        kind = kinds[rng.choice(len(kinds), p=probs)]
        if kind == "mixed" and n_instances - total < 2:
            kind = "TrAP"
        parts, rels = _clinical_sentence(rng, kind)
        total += builder.add(parts, rels)
        k += 1
    return corpus


def clinical_verb_lexicon() -> VerbLexicon:
    """Rules for the generated corpus: every rare-class cue, plus ``treated``
    for TrAP (which also fires on unrelated pairs)."""
    pairs = [(label, cue) for label, cues in CUES.items() for cue in cues]
    pairs.append((TrAP, "treated"))
    return VerbLexicon.from_pairs(pairs)
