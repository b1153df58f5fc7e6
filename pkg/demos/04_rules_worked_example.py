# %% [markdown]
# # The rule engine on one sentence
#
# Rules try phrase templates first (longest first), then look for a known
# verb on the path between the two concepts.  The path is the dependency
# path when a parse is available and the words in between otherwise.

# %%
from pathlib import Path

from medrel.corpus import generate_candidates, load_corpus
from medrel.rules import (
    ParseGraph,
    dep_shortest_path,
    load_patterns,
    load_verb_lexicon,
    parse_pattern,
    rule_predict,
    surface_path,
)

ROOT = Path(__file__).resolve().parents[1]
corpus = load_corpus(ROOT / "tests" / "fixtures" / "corpus")
sentence = corpus.documents["record-101"].sentences[1]
print(" ".join(sentence.words))
pairs = [c for c in generate_candidates(corpus) if c.sentence is sentence]

# %% [markdown]
# Surface path: the words strictly between the concepts.

# %%
lex = load_verb_lexicon()
for c in pairs:
    print(c.treatment.text, [t.text for t in surface_path(c)], rule_predict(c, [], lex))

# %% [markdown]
# A hand-written parse: "treated" is the root, "Given" heads "fever",
# "with" heads "Ceptaz", and "Levaquin" is conjoined to "Ceptaz".

# %%
heads = (6, 2, 0, 4, 6, 6, -1, 6, 7, 8, 8, 6)
parse = ParseGraph(heads, ("dep",) * len(heads))
for c in pairs:
    path = dep_shortest_path(parse, c)
    print(c.treatment.text, [t.text for t in path], rule_predict(c, [], lex, parse))

# %% [markdown]
# Templates: a more specific template beats a shorter one it contains.

# %%
short = parse_pattern("<problem> resistant to <treatment>", "TrCP")
long = parse_pattern("<problem> intermittently resistant to <treatment>", "TrWP")
target = next(c for c in generate_candidates(corpus) if c.treatment.text == "vancomycin")
print(" ".join(target.sentence.words))
print("rule label:", rule_predict(target, [short, long], lex).value)
print("bundled templates:", [p.source for p in load_patterns()])
