"""Shared test utilities: tiny random models and a finite-difference oracle."""

import numpy as np

from medrel.corpus import LABELS
from medrel.features import SENTENCE_DIM, EncodedInstance
from medrel.network import TrainConfig, forward, init_model, loss

SMALL = dict(lstm_hidden=3, d_w=4, d_p=2, d_c=2, d_pos=2, p_max=4)


def random_encoding(rng, length, sizes=(6, 3, 3), label=None):
    n_w, n_p, n_c = sizes
    t, p = sorted(rng.integers(0, length, size=2))
    i = np.arange(length)
    pos_t = np.where(i < t, i - t, np.where(i > t, i - t, 0))
    pos_p = np.where(i < p, i - p, np.where(i > p, i - p, 0))
    feats = np.zeros(SENTENCE_DIM)
    feats[rng.integers(100)] = 1.0
    feats[100] = rng.normal()
    feats[101:] = rng.uniform(0, 1, 7) * (rng.uniform(size=7) < 0.5)
    return EncodedInstance(
        word=rng.integers(0, n_w + 1, length),
        pos=rng.integers(0, n_p + 1, length),
        chunk=rng.integers(0, n_c + 1, length),
        pos_to_treatment=pos_t,
        pos_to_problem=pos_p,
        sentence_feats=feats,
        label=LABELS[rng.integers(6)] if label is None else label,
    )


def random_model(rng, sizes=(6, 3, 3), scale=0.5, **overrides):
    cfg = TrainConfig(**(SMALL | {"init_scale": scale} | overrides))
    return init_model(cfg, sizes, rng)


def numeric_gradients(enc, label, model, eps=1e-4):
    """Central differences of the single-instance loss for every entry."""
    out = {}
    for name, arr in model.named_parameters():
        g = np.zeros_like(arr)
        flat, gflat = arr.reshape(-1), g.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + eps
            up = loss(forward(enc, model), label)
            flat[k] = orig - eps
            down = loss(forward(enc, model), label)
            flat[k] = orig
            gflat[k] = (up - down) / (2 * eps)
        out[name] = g
    return out


def relative_error(analytic, numeric, floor=1e-6):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0
