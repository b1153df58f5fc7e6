"""Bidirectional LSTM relation classifier in plain numpy.

Each token is embedded as ``[word | pos | chunk | dist-to-treatment |
dist-to-problem]``; the two distance channels share one position table.  The
final hidden states of a left-to-right and a right-to-left LSTM are
concatenated with the sentence-level feature block and fed to a linear layer
over the six labels.  Gradients are derived by hand (backpropagation through
time) and checked against finite differences in the test suite.
"""

from __future__ import annotations

import dataclasses
import io
import json
import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .corpus import LABELS, RelationLabel
from .features import SENTENCE_DIM, EncodedInstance, FeatureVocab

log = logging.getLogger(__name__)

N_LABELS = len(LABELS)
GATES = ("i", "f", "o", "c")
MAGIC = b"MDRX"
FORMAT_VERSION = 1
LOG_EPS = 1e-12


class DimensionError(ValueError):
    pass


class ModelFormatError(ValueError):
    pass


class TrainingError(FloatingPointError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 20
    lstm_hidden: int = 64
    d_w: int = 40
    d_p: int = 10
    d_c: int = 10
    d_pos: int = 5
    p_max: int = 60
    neg_samples: int = 20000
    learning_rate: float = 0.001
    batch_size: int = 32
    seed: int = 0
    class_weights: bool = True
    init_scale: float = 0.08

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in ("seed", "class_weights", "neg_samples"):
                continue
            if v <= 0:
                raise ValueError(f"{f.name} must be positive, got {v}")
        if self.neg_samples < 0:
            raise ValueError("neg_samples must be >= 0")

    @property
    def input_dim(self) -> int:
        return self.d_w + self.d_p + self.d_c + 2 * self.d_pos


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


@dataclass
class LstmParams:
    W_i: np.ndarray
    W_f: np.ndarray
    W_o: np.ndarray
    W_c: np.ndarray
    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray

    NAMES = tuple(f"{kind}_{g}" for kind in "WUb" for g in GATES)

    @classmethod
    def init(cls, input_dim: int, hidden: int, rng=None, scale: float = 0.0) -> "LstmParams":
        shapes = {"W": (hidden, input_dim), "U": (hidden, hidden), "b": (hidden,)}

        def make(kind):
            if rng is None:
                return np.zeros(shapes[kind])
            return rng.uniform(-scale, scale, size=shapes[kind])

        return cls(**{name: make(name[0]) for name in cls.NAMES})

    @property
    def hidden(self) -> int:
        return self.W_i.shape[0]

    @property
    def input_dim(self) -> int:
        return self.W_i.shape[1]

    def stacked(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Gate weights stacked in i, f, o, c order: (4H, D), (4H, H), (4H,)."""
        return (
            np.concatenate([self.W_i, self.W_f, self.W_o, self.W_c]),
            np.concatenate([self.U_i, self.U_f, self.U_o, self.U_c]),
            np.concatenate([self.b_i, self.b_f, self.b_o, self.b_c]),
        )


@dataclass
class EmbeddingTables:
    word: np.ndarray
    pos: np.ndarray
    chunk: np.ndarray
    position: np.ndarray


@dataclass
class BiLstmModel:
    tables: EmbeddingTables
    fwd: LstmParams
    bwd: LstmParams
    out_W: np.ndarray
    out_b: np.ndarray
    config: TrainConfig = field(default_factory=TrainConfig)

    def named_parameters(self) -> list[tuple[str, np.ndarray]]:
        """All trainable arrays in their fixed serialization order."""
        out = [(f"emb.{n}", getattr(self.tables, n)) for n in ("word", "pos", "chunk", "position")]
        for d in ("fwd", "bwd"):
            p = getattr(self, d)
            out += [(f"{d}.{n}", getattr(p, n)) for n in LstmParams.NAMES]
        out += [("out_W", self.out_W), ("out_b", self.out_b)]
        return out

    @property
    def vocab_sizes(self) -> tuple[int, int, int]:
        t = self.tables
        return t.word.shape[0] - 1, t.pos.shape[0] - 1, t.chunk.shape[0] - 1


def init_model(
    config: TrainConfig, vocab_sizes: tuple[int, int, int], rng=None
) -> BiLstmModel:
    """Uniform(-init_scale, init_scale) initialisation; all zeros when *rng*
    is None."""
    s = config.init_scale
    n_w, n_p, n_c = vocab_sizes

    def table(rows, cols):
        return np.zeros((rows, cols)) if rng is None else rng.uniform(-s, s, (rows, cols))

    tables = EmbeddingTables(
        table(n_w + 1, config.d_w),
        table(n_p + 1, config.d_p),
        table(n_c + 1, config.d_c),
        table(2 * config.p_max + 1, config.d_pos),
    )
    h = config.lstm_hidden
    fwd = LstmParams.init(config.input_dim, h, rng, s)
    bwd = LstmParams.init(config.input_dim, h, rng, s)
    out_W = table(N_LABELS, 2 * h + SENTENCE_DIM)
    out_b = np.zeros(N_LABELS) if rng is None else rng.uniform(-s, s, N_LABELS)
    return BiLstmModel(tables, fwd, bwd, out_W, out_b, config)


# --- single-step and single-instance forward --------------------------------


def lstm_cell(x, h_prev, c_prev, p: LstmParams) -> tuple[np.ndarray, np.ndarray]:
    x, h_prev, c_prev = np.asarray(x, float), np.asarray(h_prev, float), np.asarray(c_prev, float)
    if x.shape != (p.input_dim,) or h_prev.shape != (p.hidden,) or c_prev.shape != (p.hidden,):
        raise DimensionError(
            f"lstm_cell expects x {(p.input_dim,)}, h/c {(p.hidden,)}; "
            f"got {x.shape}, {h_prev.shape}, {c_prev.shape}"
        )
    i = _sigmoid(p.W_i @ x + p.U_i @ h_prev + p.b_i)
    f = _sigmoid(p.W_f @ x + p.U_f @ h_prev + p.b_f)
    o = _sigmoid(p.W_o @ x + p.U_o @ h_prev + p.b_o)
    g = np.tanh(p.W_c @ x + p.U_c @ h_prev + p.b_c)
    c = f * c_prev + i * g
    return o * np.tanh(c), c


def _position_rows(offsets: np.ndarray, p_max: int) -> np.ndarray:
    return np.clip(offsets, -p_max, p_max) + p_max


def embed(enc: EncodedInstance, tables: EmbeddingTables, p_max: int) -> np.ndarray:
    """Per-token input vectors, shape (len, d_w + d_p + d_c + 2 d_pos)."""
    return np.concatenate(
        [
            tables.word[enc.word],
            tables.pos[enc.pos],
            tables.chunk[enc.chunk],
            tables.position[_position_rows(enc.pos_to_treatment, p_max)],
            tables.position[_position_rows(enc.pos_to_problem, p_max)],
        ],
        axis=1,
    )


def bilstm_forward(inputs: np.ndarray, model: BiLstmModel) -> np.ndarray:
    """``[h_fwd_final | h_bwd_final]`` for one input sequence."""
    inputs = np.asarray(inputs, float)
    if inputs.ndim != 2 or inputs.shape[0] == 0:
        raise ValueError("bilstm_forward needs a non-empty (length, dim) sequence")
    X = inputs[None]
    M = np.ones((1, inputs.shape[0]))
    hf, _ = _lstm_run(X, M, model.fwd)
    hb, _ = _lstm_run(X[:, ::-1], M, model.bwd)
    return np.concatenate([hf[0], hb[0]])


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def forward(enc: EncodedInstance, model: BiLstmModel) -> np.ndarray:
    probs, _ = _forward_batch(make_batch([enc]), model)
    return probs[0]


def loss(probs: np.ndarray, label: RelationLabel | int) -> float:
    k = label.index if isinstance(label, RelationLabel) else int(label)
    return float(-np.log(max(probs[k], LOG_EPS)))


def backward(enc: EncodedInstance, label: RelationLabel, model: BiLstmModel) -> dict[str, np.ndarray]:
    """Gradient of ``loss(forward(enc), label)`` for every named parameter."""
    batch = make_batch([enc], labels=[label])
    _, grads = loss_and_grads(batch, model)
    return grads


def predict(model: BiLstmModel, enc: EncodedInstance) -> tuple[RelationLabel, np.ndarray]:
    probs = forward(enc, model)
    # argmax returns the first maximum: ties go to the lowest label index
    return LABELS[int(np.argmax(probs))], probs


def predict_batch(
    model: BiLstmModel, encs: Sequence[EncodedInstance], batch_size: int = 256
) -> tuple[list[RelationLabel], np.ndarray]:
    if not encs:
        return [], np.zeros((0, N_LABELS))
    probs = np.concatenate(
        [
            _forward_batch(make_batch(encs[s : s + batch_size]), model)[0]
            for s in range(0, len(encs), batch_size)
        ]
    )
    return [LABELS[k] for k in probs.argmax(axis=1)], probs


# --- batched machinery ------------------------------------------------------


@dataclass
class Batch:
    """Right-padded id matrices (B, T) plus lengths, features and labels."""

    word: np.ndarray
    pos: np.ndarray
    chunk: np.ndarray
    pos_t: np.ndarray
    pos_p: np.ndarray
    lengths: np.ndarray
    sentence_feats: np.ndarray
    labels: np.ndarray

    @property
    def mask(self) -> np.ndarray:
        T = self.word.shape[1]
        return (np.arange(T)[None, :] < self.lengths[:, None]).astype(float)

    @property
    def reverse_index(self) -> np.ndarray:
        """Per-row index reversing the valid prefix; padding maps to itself.
        The map is an involution, so it also undoes the reversal."""
        T = self.word.shape[1]
        t = np.arange(T)[None, :]
        L = self.lengths[:, None]
        return np.where(t < L, L - 1 - t, t)


def make_batch(encs: Sequence[EncodedInstance], labels=None) -> Batch:
    if not encs:
        raise ValueError("empty batch")
    lengths = np.array([len(e) for e in encs])
    if lengths.min() == 0:
        raise ValueError("empty sentence in batch")
    B, T = len(encs), int(lengths.max())

    def pad(attr):
        out = np.zeros((B, T), dtype=np.int64)
        for b, e in enumerate(encs):
            out[b, : lengths[b]] = getattr(e, attr)
        return out

    if labels is None:
        labels = [e.label for e in encs]
    return Batch(
        pad("word"),
        pad("pos"),
        pad("chunk"),
        pad("pos_to_treatment"),
        pad("pos_to_problem"),
        lengths,
        np.stack([e.sentence_feats for e in encs]),
        np.array([lab.index if isinstance(lab, RelationLabel) else int(lab) for lab in labels]),
    )


def _embed_batch(batch: Batch, model: BiLstmModel):
    t, pm = model.tables, model.config.p_max
    rows_t = _position_rows(batch.pos_t, pm)
    rows_p = _position_rows(batch.pos_p, pm)
    X = np.concatenate(
        [t.word[batch.word], t.pos[batch.pos], t.chunk[batch.chunk], t.position[rows_t], t.position[rows_p]],
        axis=2,
    )
    return X, (rows_t, rows_p)


def _lstm_run(X: np.ndarray, M: np.ndarray, p: LstmParams):
    """Masked recurrence over (B, T, D) inputs.  Past a row's length the state
    is carried unchanged, so the returned h is each row's final state."""
    B, T, _ = X.shape
    H = p.hidden
    W, U, b = p.stacked()
    h = np.zeros((B, H))
    c = np.zeros((B, H))
    steps = []
    for t in range(T):
        x = X[:, t]
        a = x @ W.T + h @ U.T + b
        i = _sigmoid(a[:, :H])
        f = _sigmoid(a[:, H : 2 * H])
        o = _sigmoid(a[:, 2 * H : 3 * H])
        g = np.tanh(a[:, 3 * H :])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        m = M[:, t, None]
        steps.append((x, h, c, i, f, o, g, tc, m))
        c = m * c_new + (1 - m) * c
        h = m * h_new + (1 - m) * h
    return h, (steps, W, U)


def _lstm_back(dh: np.ndarray, cache, p: LstmParams):
    """BPTT for :func:`_lstm_run`.  Returns parameter grads keyed like
    :class:`LstmParams` and the input gradient (B, T, D)."""
    steps, W, U = cache
    H = p.hidden
    dW = np.zeros_like(W)
    dU = np.zeros_like(U)
    db = np.zeros(4 * H)
    B = dh.shape[0]
    dX = np.zeros((B, len(steps), W.shape[1]))
    dc = np.zeros_like(dh)
    for t in range(len(steps) - 1, -1, -1):
        x, h_prev, c_prev, i, f, o, g, tc, m = steps[t]
        dh_new, dc_new = m * dh, m * dc
        do = dh_new * tc
        dct = dc_new + dh_new * o * (1 - tc**2)
        da = np.concatenate(
            [
                dct * g * i * (1 - i),
                dct * c_prev * f * (1 - f),
                do * o * (1 - o),
                dct * i * (1 - g**2),
            ],
            axis=1,
        )
        dW += da.T @ x
        dU += da.T @ h_prev
        db += da.sum(axis=0)
        dX[:, t] = da @ W
        dh = da @ U + (1 - m) * dh
        dc = dct * f + (1 - m) * dc
    grads = {}
    for k, g_ in enumerate(GATES):
        sl = slice(k * H, (k + 1) * H)
        grads[f"W_{g_}"] = dW[sl]
        grads[f"U_{g_}"] = dU[sl]
        grads[f"b_{g_}"] = db[sl]
    return grads, dX


def _forward_batch(batch: Batch, model: BiLstmModel):
    X, rows = _embed_batch(batch, model)
    M = batch.mask
    rev = batch.reverse_index
    Xr = np.take_along_axis(X, rev[:, :, None], axis=1)
    hf, cache_f = _lstm_run(X, M, model.fwd)
    hb, cache_b = _lstm_run(Xr, M, model.bwd)
    merged = np.concatenate([hf, hb, batch.sentence_feats], axis=1)
    probs = softmax(merged @ model.out_W.T + model.out_b)
    return probs, (X, rows, M, rev, cache_f, cache_b, merged)


def loss_and_grads(
    batch: Batch, model: BiLstmModel, class_weights: np.ndarray | None = None
) -> tuple[float, dict[str, np.ndarray]]:
    """Summed (optionally class-weighted) cross-entropy over the batch and
    its gradient with respect to every named parameter."""
    probs, (X, (rows_t, rows_p), M, rev, cache_f, cache_b, merged) = _forward_batch(batch, model)
    B = len(batch.labels)
    w = np.ones(B) if class_weights is None else class_weights[batch.labels]
    p_true = probs[np.arange(B), batch.labels]
    total = float(np.sum(-w * np.log(np.maximum(p_true, LOG_EPS))))

    dz = probs.copy()
    dz[np.arange(B), batch.labels] -= 1.0
    dz *= w[:, None]
    grads = {"out_W": dz.T @ merged, "out_b": dz.sum(axis=0)}
    dmerged = dz @ model.out_W
    H = model.fwd.hidden

    gf, dX = _lstm_back(dmerged[:, :H], cache_f, model.fwd)
    gb, dXr = _lstm_back(dmerged[:, H : 2 * H], cache_b, model.bwd)
    dX += np.take_along_axis(dXr, rev[:, :, None], axis=1)
    dX *= M[:, :, None]
    for k, v in gf.items():
        grads[f"fwd.{k}"] = v
    for k, v in gb.items():
        grads[f"bwd.{k}"] = v

    cfg = model.config
    t = model.tables
    edges = np.cumsum([0, cfg.d_w, cfg.d_p, cfg.d_c, cfg.d_pos, cfg.d_pos])
    parts = [dX[:, :, edges[k] : edges[k + 1]] for k in range(5)]
    for name, table, ids, part in (
        ("word", t.word, batch.word, parts[0]),
        ("pos", t.pos, batch.pos, parts[1]),
        ("chunk", t.chunk, batch.chunk, parts[2]),
    ):
        g = np.zeros_like(table)
        np.add.at(g, ids.ravel(), part.reshape(-1, part.shape[-1]))
        grads[f"emb.{name}"] = g
    g = np.zeros_like(t.position)
    np.add.at(g, rows_t.ravel(), parts[3].reshape(-1, cfg.d_pos))
    np.add.at(g, rows_p.ravel(), parts[4].reshape(-1, cfg.d_pos))
    grads["emb.position"] = g
    # padded cells looked up row 0 but carry zero gradient after masking
    return total, {name: grads[name] for name, _ in model.named_parameters()}


# --- training ---------------------------------------------------------------


def class_weight_vector(labels: Sequence[RelationLabel]) -> np.ndarray:
    """Inverse-frequency weights ``N / (K n_c)`` over the K labels present."""
    counts = np.bincount([lab.index for lab in labels], minlength=N_LABELS).astype(float)
    present = counts > 0
    w = np.ones(N_LABELS)
    w[present] = counts.sum() / (present.sum() * counts[present])
    return w


@dataclass
class TrainResult:
    model: BiLstmModel
    losses: list[float]


def dataset_loss(
    model: BiLstmModel,
    encs: Sequence[EncodedInstance],
    class_weights: np.ndarray | None = None,
    batch_size: int = 256,
) -> float:
    total = 0.0
    for s in range(0, len(encs), batch_size):
        batch = make_batch(encs[s : s + batch_size])
        probs, _ = _forward_batch(batch, model)
        B = len(batch.labels)
        w = np.ones(B) if class_weights is None else class_weights[batch.labels]
        total += float(np.sum(-w * np.log(np.maximum(probs[np.arange(B), batch.labels], LOG_EPS))))
    return total / len(encs)


def train(
    instances: Sequence[EncodedInstance],
    config: TrainConfig,
    vocab_sizes: tuple[int, int, int] | FeatureVocab,
    seed: int | None = None,
    model: BiLstmModel | None = None,
    beta1: float = 0.9,
    beta2: float = 0.999,
    adam_eps: float = 1e-8,
) -> TrainResult:
    """Mini-batch Adam on class-weighted cross-entropy.

    The loss trace holds the full-training-set loss measured after each
    epoch.  *model*, when given, is used as the starting point (e.g. after
    loading pretrained word vectors) and is updated in place.
    """
    if not instances:
        raise ValueError("cannot train on an empty instance list")
    if isinstance(vocab_sizes, FeatureVocab):
        vocab_sizes = vocab_sizes.sizes
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    if model is None:
        model = init_model(config, vocab_sizes, rng)
    else:
        model.config = config

    weights = class_weight_vector([e.label for e in instances]) if config.class_weights else None
    params = model.named_parameters()
    m1 = {n: np.zeros_like(p) for n, p in params}
    m2 = {n: np.zeros_like(p) for n, p in params}
    step = 0
    losses = []
    n = len(instances)
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        for s in range(0, n, config.batch_size):
            idx = order[s : s + config.batch_size]
            batch = make_batch([instances[i] for i in idx])
            batch_loss, grads = loss_and_grads(batch, model, weights)
            if not np.isfinite(batch_loss):
                raise TrainingError(
                    f"non-finite loss {batch_loss} at epoch {epoch + 1}, batch starting {s}"
                )
            step += 1
            scale = 1.0 / len(idx)
            c1 = 1 - beta1**step
            c2 = 1 - beta2**step
            for name, p in params:
                g = grads[name] * scale
                m1[name] *= beta1
                m1[name] += (1 - beta1) * g
                m2[name] *= beta2
                m2[name] += (1 - beta2) * g * g
                p -= config.learning_rate * (m1[name] / c1) / (np.sqrt(m2[name] / c2) + adam_eps)
        epoch_loss = dataset_loss(model, instances, weights)
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"non-finite loss {epoch_loss} after epoch {epoch + 1}")
        losses.append(epoch_loss)
        log.info("epoch %d/%d loss %.6f", epoch + 1, config.epochs, epoch_loss)
    return TrainResult(model, losses)


# --- persistence ------------------------------------------------------------


def _model_bytes(model: BiLstmModel) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    n_w, n_p, n_c = model.vocab_sizes
    header = dataclasses.asdict(model.config) | {"n_words": n_w, "n_pos": n_p, "n_chunk": n_c}
    blob = json.dumps(header, sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<I", len(blob)))
    buf.write(blob)
    for _, arr in model.named_parameters():
        buf.write(struct.pack("<I", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return buf.getvalue()


def save_model(model: BiLstmModel, path: str | Path) -> None:
    Path(path).write_bytes(_model_bytes(model))


def _read(buf: io.BytesIO, n: int) -> bytes:
    data = buf.read(n)
    if len(data) != n:
        raise ModelFormatError("truncated model file")
    return data


def load_model(path: str | Path) -> BiLstmModel:
    buf = io.BytesIO(Path(path).read_bytes())
    if _read(buf, 4) != MAGIC:
        raise ModelFormatError(f"{path}: not a model file (bad magic header)")
    (version,) = struct.unpack("<I", _read(buf, 4))
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"{path}: format version {version}, expected {FORMAT_VERSION}")
    (n,) = struct.unpack("<I", _read(buf, 4))
    try:
        header = json.loads(_read(buf, n).decode("utf-8"))
        sizes = (header.pop("n_words"), header.pop("n_pos"), header.pop("n_chunk"))
        config = TrainConfig(**header)
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelFormatError(f"{path}: bad config block: {exc}") from exc
    model = init_model(config, sizes)
    for name, arr in model.named_parameters():
        (ndim,) = struct.unpack("<I", _read(buf, 4))
        shape = struct.unpack(f"<{ndim}Q", _read(buf, 8 * ndim))
        if shape != arr.shape:
            raise ModelFormatError(f"{path}: {name} has shape {shape}, expected {arr.shape}")
        arr[...] = np.frombuffer(_read(buf, 8 * arr.size), dtype="<f8").reshape(shape)
    if buf.read(1):
        raise ModelFormatError(f"{path}: trailing bytes after last tensor")
    return model


def load_embeddings(path: str | Path, vocab: FeatureVocab, model: BiLstmModel) -> int:
    """Copy vectors from a ``word v1 .. vd`` text file into the word table.

    Words missing from the file keep their current (random) row.  Returns the
    number of rows replaced.
    """
    table = model.tables.word
    d = table.shape[1]
    hits = 0
    with open(path, encoding="utf-8") as f:
        for n, line in enumerate(f, 1):
            parts = line.rstrip().split(" ")
            if len(parts) < 2:
                continue
            if len(parts) != d + 1:
                raise DimensionError(f"{path}:{n}: expected {d} values, got {len(parts) - 1}")
            k = vocab.word(parts[0])
            if k:
                table[k] = np.array(parts[1:], dtype=float)
                hits += 1
    return hits
