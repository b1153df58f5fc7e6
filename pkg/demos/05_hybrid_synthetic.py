# %% [markdown]
# # Network, rules, and both together
#
# The generated corpus mimics clinical skew: one common class with a few
# regular phrasings, four rare classes each signalled by one of many cue
# verbs, and many unrelated pairs.  The network sees only a handful of each
# rare cue; the verb lexicon knows all of them but also fires "treated" on
# unrelated pairs.  Merging keeps the rule labels except the common class.
# Training takes about twenty seconds.

# %%
from medrel.corpus import generate_candidates, split_documents
from medrel.hybrid import merge_predictions
from medrel.metrics import evaluate
from medrel.network import TrainConfig
from medrel.pipeline import fit, gold_labels, network_predictions, rule_predictions
from medrel.synthetic import clinical_corpus, clinical_verb_lexicon

corpus = clinical_corpus(2000, seed=0)
train_c, test_c = split_documents(corpus, test_fraction=0.25, seed=0)
print("train", train_c.counts(), "\ntest ", test_c.counts())

# %%
system = fit(train_c, TrainConfig(neg_samples=10**6, seed=0))
print("epoch losses", [round(v, 3) for v in system.losses[::4]])

# %%
cands = generate_candidates(test_c)
gold = gold_labels(cands)
nn = network_predictions(system.model, system.extractor, cands)
rules = rule_predictions(cands, [], clinical_verb_lexicon())
hybrid = merge_predictions(nn, rules)

for name, pred in [("network", nn), ("rules", rules), ("hybrid", hybrid)]:
    print(f"\n== {name}")
    print(evaluate(gold, pred).to_table())
