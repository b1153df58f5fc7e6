# %% [markdown]
# # Word-level and sentence-level features
#
# Each token carries word, POS and chunk ids plus two signed distances, one
# to each concept.  On top of the recurrent encoder sits a 108-dim block:
# a one-hot over frequent between-concept POS sequences, a PMI score for the
# concept pair, and seven lexicon-position cues.

# %%
from pathlib import Path

import numpy as np

from medrel.corpus import ConceptSpan, generate_candidates, load_corpus
from medrel.features import (
    FeatureExtractor,
    between_pos,
    compute_pmi,
    cooccurrence_counts,
    position_vector,
)

# %% [markdown]
# Distances are negative left of the span, zero inside it, positive right.

# %%
for n, start, end in [(5, 1, 1), (5, 4, 4), (6, 2, 3)]:
    print(f"len {n}, span {start}..{end}:", position_vector(n, ConceptSpan("x", 1, start, end)).tolist())

# %% [markdown]
# POS sequences between the concepts, read in surface order.

# %%
ROOT = Path(__file__).resolve().parents[1]
corpus = load_corpus(ROOT / "tests" / "fixtures" / "corpus")
cands = generate_candidates(corpus)
print(between_pos(cands[0]))

# %% [markdown]
# PMI with add-one smoothing over sentence-level co-occurrence of concept
# texts.  Unseen terms get ln N, a side effect of the smoothing.

# %%
counts = cooccurrence_counts(corpus)
print("N =", counts.n_sentences)
print("ceptaz/fever", round(compute_pmi(counts, "ceptaz", "fever"), 4))
print("unseen pair ", round(compute_pmi(counts, "aspirin", "gout"), 4), "=", round(np.log(counts.n_sentences), 4))

# %% [markdown]
# The fitted extractor bundles vocabulary, POS list, counts and lexicons.

# %%
ext = FeatureExtractor.fit(corpus, cands)
enc = ext.encode(cands[0])
print("word ids     ", enc.word.tolist())
print("to treatment ", enc.pos_to_treatment.tolist())
print("to problem   ", enc.pos_to_problem.tolist())
print("block shape  ", enc.sentence_feats.shape, "nonzero at", np.flatnonzero(enc.sentence_feats).tolist())
