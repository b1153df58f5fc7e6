# %% [markdown]
# # Checking the hand-written backward pass
#
# The network is plain numpy with backpropagation through time written out
# by hand, so we compare it against central finite differences on a tiny
# random model.

# %%
import numpy as np

from medrel.corpus import RelationLabel
from medrel.features import SENTENCE_DIM, EncodedInstance
from medrel.network import TrainConfig, backward, forward, init_model, loss

rng = np.random.default_rng(0)
cfg = TrainConfig(lstm_hidden=3, d_w=4, d_p=2, d_c=2, d_pos=2, p_max=4, init_scale=0.5)
model = init_model(cfg, (6, 3, 3), rng)

n = 5
feats = np.zeros(SENTENCE_DIM)
feats[[3, 100, 104]] = [1.0, 0.7, 0.4]
enc = EncodedInstance(
    word=rng.integers(0, 7, n),
    pos=rng.integers(0, 4, n),
    chunk=rng.integers(0, 4, n),
    pos_to_treatment=np.arange(n) - 1,
    pos_to_problem=np.arange(n) - 4,
    sentence_feats=feats,
    label=RelationLabel.TrIP,
)
print("probabilities", np.round(forward(enc, model), 4))

# %%
grads = backward(enc, enc.label, model)
eps = 1e-4
report = []
for name, arr in model.named_parameters():
    flat = arr.reshape(-1)
    num = np.zeros_like(flat)
    for k in range(flat.size):
        keep = flat[k]
        flat[k] = keep + eps
        up = loss(forward(enc, model), enc.label)
        flat[k] = keep - eps
        down = loss(forward(enc, model), enc.label)
        flat[k] = keep
        num[k] = (up - down) / (2 * eps)
    ana = grads[name].reshape(-1)
    rel = np.abs(ana - num) / np.maximum(np.maximum(np.abs(ana), np.abs(num)), 1e-6)
    report.append((name, flat.size, rel.max()))

for name, size, err in report:
    print(f"{name:<16}{size:>6}  max rel err {err:.1e}")

# %% [markdown]
# Rows of an embedding table that the sentence never looks up get an exact
# zero gradient.

# %%
unused = sorted(set(range(7)) - set(enc.word.tolist()))
print("unused word rows", unused, "->", np.abs(grads["emb.word"][unused]).max())
