# %% [markdown]
# # Reading annotations and building candidate pairs
#
# A corpus directory holds one `.txt` per record (one sentence per line),
# a `.con` file of concept spans and a `.rel` file of gold relations.
# Every treatment/problem pair that shares a sentence becomes a candidate;
# pairs without a gold relation are labelled Null.

# %%
from collections import Counter
from pathlib import Path

from medrel.corpus import generate_candidates, load_corpus, sample_negatives

ROOT = Path(__file__).resolve().parents[1]
corpus = load_corpus(ROOT / "tests" / "fixtures" / "corpus")
print(corpus.counts())

# %% [markdown]
# Without a `.tags` sidecar every token gets a placeholder POS/chunk tag.

# %%
sent = corpus.documents["record-101"].sentences[1]
print([(t.text, t.pos, t.chunk) for t in sent.tokens][:4])

# %%
cands = generate_candidates(corpus)
for c in cands:
    print(f"{c.sentence.doc_id}:{c.sentence.line:<2} {c.treatment.text:>14} -> {c.problem.text:<30} {c.label.value}")

# %% [markdown]
# Training keeps every positive pair and a seeded, uniform sample of the
# Null pairs.  Asking for more negatives than exist keeps them all.

# %%
print(Counter(c.label.value for c in sample_negatives(cands, 1, seed=0)))
print(Counter(c.label.value for c in sample_negatives(cands, 100, seed=0)))
