import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from medrel.corpus import LABELS, RelationLabel
from medrel.features import SENTENCE_DIM
from medrel.network import (
    DimensionError,
    LstmParams,
    ModelFormatError,
    TrainConfig,
    TrainingError,
    backward,
    bilstm_forward,
    class_weight_vector,
    embed,
    forward,
    init_model,
    load_embeddings,
    load_model,
    loss,
    loss_and_grads,
    lstm_cell,
    make_batch,
    predict,
    predict_batch,
    save_model,
    softmax,
    train,
)

from helpers import SMALL, numeric_gradients, random_encoding, random_model, relative_error


def sigmoid(v):
    return 1.0 / (1.0 + math.exp(-v))


class TestLstmCell:
    def test_zero_params(self):
        p = LstmParams.init(4, 3)
        h, c = lstm_cell(np.ones(4), np.zeros(3), np.zeros(3), p)
        assert np.all(h == 0) and np.all(c == 0)

    def test_zero_params_carry(self):
        p = LstmParams.init(2, 3)
        v = np.array([1.0, -2.0, 0.3])
        h, c = lstm_cell(np.ones(2), np.ones(3), v, p)
        assert np.allclose(c, 0.5 * v)
        assert np.allclose(h, 0.5 * np.tanh(0.5 * v))

    def test_scalar_oracle(self):
        rng = np.random.default_rng(1)
        p = LstmParams.init(3, 2, rng, 1.0)
        x, hp, cp = rng.normal(size=3), rng.normal(size=2), rng.normal(size=2)
        h, c = lstm_cell(x, hp, cp, p)
        for j in range(2):
            def pre(W, U, b):
                return sum(W[j, k] * x[k] for k in range(3)) + sum(U[j, k] * hp[k] for k in range(2)) + b[j]

            i = sigmoid(pre(p.W_i, p.U_i, p.b_i))
            f = sigmoid(pre(p.W_f, p.U_f, p.b_f))
            o = sigmoid(pre(p.W_o, p.U_o, p.b_o))
            g = math.tanh(pre(p.W_c, p.U_c, p.b_c))
            cj = f * cp[j] + i * g
            assert c[j] == pytest.approx(cj, rel=1e-12)
            assert h[j] == pytest.approx(o * math.tanh(cj), rel=1e-12)

    def test_shape_error(self):
        with pytest.raises(DimensionError):
            lstm_cell(np.ones(5), np.zeros(3), np.zeros(3), LstmParams.init(4, 3))


class TestEmbed:
    def test_default_width(self):
        model = init_model(TrainConfig(), (5, 5, 5))
        enc = random_encoding(np.random.default_rng(0), 4, (5, 5, 5))
        assert embed(enc, model.tables, 60).shape == (4, 70)

    def test_oov_and_clip(self):
        rng = np.random.default_rng(0)
        model = random_model(rng)
        enc = random_encoding(rng, 3)
        enc = type(enc)(
            np.zeros(3, int), np.zeros(3, int), np.zeros(3, int),
            np.array([1000, 0, -1000]), np.array([0, 1, 2]), enc.sentence_feats,
        )
        X = embed(enc, model.tables, 4)
        t = model.tables
        assert np.array_equal(X[0, :4], t.word[0])
        assert np.array_equal(X[0, 8:10], t.position[8])  # +1000 -> +4 -> row 8
        assert np.array_equal(X[2, 8:10], t.position[0])  # -1000 -> -4 -> row 0


class TestBiLstm:
    def test_empty(self):
        with pytest.raises(ValueError):
            bilstm_forward(np.zeros((0, 12)), random_model(np.random.default_rng(0)))

    def test_zero_params(self):
        model = init_model(TrainConfig(**SMALL), (3, 3, 3))
        assert np.all(bilstm_forward(np.ones((4, 12)), model) == 0)

    def test_length_one(self):
        model = random_model(np.random.default_rng(2))
        x = np.random.default_rng(3).normal(size=(1, 12))
        out = bilstm_forward(x, model)
        hf, _ = lstm_cell(x[0], np.zeros(3), np.zeros(3), model.fwd)
        hb, _ = lstm_cell(x[0], np.zeros(3), np.zeros(3), model.bwd)
        assert np.allclose(out, np.concatenate([hf, hb]))

    def test_palindrome(self):
        rng = np.random.default_rng(4)
        model = random_model(rng)
        model.bwd = model.fwd
        half = rng.normal(size=(3, 12))
        x = np.concatenate([half, half[::-1]])
        out = bilstm_forward(x, model)
        assert np.allclose(out[:3], out[3:], atol=1e-14)

    def test_direction_symmetry(self):
        rng = np.random.default_rng(5)
        model = random_model(rng)
        x = rng.normal(size=(6, 12))
        a = bilstm_forward(x, model)
        model.fwd, model.bwd = model.bwd, model.fwd
        b = bilstm_forward(x[::-1], model)
        assert np.allclose(a, np.concatenate([b[3:], b[:3]]), atol=1e-14)

    def test_manual_unroll(self):
        rng = np.random.default_rng(6)
        model = random_model(rng)
        x = rng.normal(size=(5, 12))
        h, c = np.zeros(3), np.zeros(3)
        for row in x:
            h, c = lstm_cell(row, h, c, model.fwd)
        hb, cb = np.zeros(3), np.zeros(3)
        for row in x[::-1]:
            hb, cb = lstm_cell(row, hb, cb, model.bwd)
        assert np.allclose(bilstm_forward(x, model), np.concatenate([h, hb]), atol=1e-14)


class TestForwardLoss:
    def test_uniform(self):
        model = init_model(TrainConfig(**SMALL), (6, 3, 3))
        p = forward(random_encoding(np.random.default_rng(0), 4), model)
        assert np.allclose(p, 1 / 6)
        assert loss(p, RelationLabel.TrWP) == pytest.approx(math.log(6))
        assert predict(model, random_encoding(np.random.default_rng(0), 4))[0] is RelationLabel.TrAP

    def test_dominant_bias(self):
        model = init_model(TrainConfig(**SMALL), (6, 3, 3))
        model.out_b[:] = [10, 0, 0, 0, 0, 0]
        p = forward(random_encoding(np.random.default_rng(0), 4), model)
        assert p.argmax() == 0 and p[0] > 0.99

    def test_peaked_null(self):
        model = init_model(TrainConfig(**SMALL), (6, 3, 3))
        model.out_b[5] = 3.0
        assert predict(model, random_encoding(np.random.default_rng(0), 4))[0] is RelationLabel.Null

    def test_loss_values(self):
        assert loss(np.array([1.0, 0, 0, 0, 0, 0]), 0) == 0.0
        assert loss(np.array([0.25, 0.75, 0, 0, 0, 0]), RelationLabel.TrAP) == pytest.approx(math.log(4))
        assert loss(np.array([0.0, 1, 0, 0, 0, 0]), 0) == pytest.approx(-math.log(1e-12))

    def test_softmax_shift(self):
        z = np.array([1.0, 3.0, -2.0, 0.5, 0.0, 2.9])
        assert np.allclose(softmax(z), softmax(z + 123.4))

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10_000), st.integers(1, 12))
    def test_normalized(self, seed, length):
        rng = np.random.default_rng(seed)
        p = forward(random_encoding(rng, length), random_model(rng))
        assert abs(p.sum() - 1) < 1e-9 and np.all((p > 0) & (p < 1))


class TestGradients:
    def test_finite_differences(self):
        rng = np.random.default_rng(11)
        model = random_model(rng)
        enc = random_encoding(rng, 5)
        grads = backward(enc, enc.label, model)
        numeric = numeric_gradients(enc, enc.label, model)
        for name, _ in model.named_parameters():
            assert relative_error(grads[name], numeric[name]) < 1e-4, name

    def test_untouched_rows_zero(self):
        rng = np.random.default_rng(12)
        model = random_model(rng, sizes=(20, 3, 3))
        enc = random_encoding(rng, 4, sizes=(20, 3, 3))
        g = backward(enc, enc.label, model)["emb.word"]
        untouched = sorted(set(range(21)) - set(enc.word.tolist()))
        assert np.all(g[untouched] == 0)
        assert np.any(g[enc.word] != 0)

    def test_duplicate_doubles(self):
        rng = np.random.default_rng(13)
        model = random_model(rng)
        enc = random_encoding(rng, 6)
        one = backward(enc, enc.label, model)
        _, two = loss_and_grads(make_batch([enc, enc]), model)
        for k in one:
            assert np.allclose(two[k], 2 * one[k], rtol=1e-12, atol=1e-15)

    def test_padding_does_not_leak(self):
        rng = np.random.default_rng(14)
        model = random_model(rng)
        short, long = random_encoding(rng, 2), random_encoding(rng, 8)
        l1, g1 = loss_and_grads(make_batch([short]), model)
        l2, g2 = loss_and_grads(make_batch([long]), model)
        l12, g12 = loss_and_grads(make_batch([short, long]), model)
        assert l12 == pytest.approx(l1 + l2, rel=1e-12)
        for k in g1:
            assert np.allclose(g12[k], g1[k] + g2[k], rtol=1e-10, atol=1e-14)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(15)
        model = random_model(rng)
        encs = [random_encoding(rng, n) for n in (1, 3, 7, 2)]
        labels, probs = predict_batch(model, encs, batch_size=3)
        for e, lab, p in zip(encs, labels, probs):
            assert np.allclose(forward(e, model), p, atol=1e-14)
            assert predict(model, e)[0] is lab


def test_class_weights():
    labels = [RelationLabel.Null] * 6 + [RelationLabel.TrAP] * 2
    w = class_weight_vector(labels)
    assert w[5] == pytest.approx(8 / (2 * 6)) and w[0] == pytest.approx(8 / (2 * 2))
    assert w[1] == 1.0  # absent label


class TestTrain:
    def _data(self, n=24, seed=0):
        rng = np.random.default_rng(seed)
        encs = []
        for k in range(n):
            lab = LABELS[k % 3]
            e = random_encoding(rng, 4, label=lab)
            e.word[0] = 1 + k % 3  # marker word
            encs.append(e)
        return encs

    def test_deterministic(self):
        cfg = TrainConfig(**SMALL, epochs=3, batch_size=5)
        a = train(self._data(), cfg, (6, 3, 3), seed=3)
        b = train(self._data(), cfg, (6, 3, 3), seed=3)
        assert a.losses == b.losses
        for (_, x), (_, y) in zip(a.model.named_parameters(), b.model.named_parameters()):
            assert np.array_equal(x, y)

    def test_init_range(self):
        model = init_model(TrainConfig(**SMALL), (6, 3, 3), np.random.default_rng(0))
        for _, arr in model.named_parameters():
            assert np.all(np.abs(arr) <= 0.08)
        assert model.out_W.shape == (6, 2 * 3 + SENTENCE_DIM)

    def test_empty(self):
        with pytest.raises(ValueError):
            train([], TrainConfig(**SMALL), (6, 3, 3))

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite(self):
        encs = self._data(4)
        encs[0].sentence_feats[100] = np.inf
        with pytest.raises(TrainingError):
            train(encs, TrainConfig(**SMALL, epochs=1), (6, 3, 3))

    def test_bad_config(self):
        with pytest.raises(ValueError):
            TrainConfig(epochs=0)


class TestPersistence:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(0)
        model = random_model(rng)
        save_model(model, tmp_path / "a.bin")
        back = load_model(tmp_path / "a.bin")
        save_model(back, tmp_path / "b.bin")
        assert (tmp_path / "a.bin").read_bytes() == (tmp_path / "b.bin").read_bytes()
        assert back.config == model.config
        enc = random_encoding(rng, 5)
        assert np.array_equal(forward(enc, model), forward(enc, back))

    def test_header(self, tmp_path):
        save_model(random_model(np.random.default_rng(0)), tmp_path / "m")
        data = (tmp_path / "m").read_bytes()
        assert data[:4] == b"MDRX" and data[4:8] == b"\x01\x00\x00\x00"

    @pytest.mark.parametrize(
        "mutate,msg",
        [
            (lambda b: b"XXXX" + b[4:], "magic"),
            (lambda b: b[:4] + b"\x02\x00\x00\x00" + b[8:], "version"),
            (lambda b: b[:-3], "truncated"),
            (lambda b: b + b"\x00", "trailing"),
        ],
    )
    def test_corrupt(self, tmp_path, mutate, msg):
        save_model(random_model(np.random.default_rng(0)), tmp_path / "m")
        (tmp_path / "m").write_bytes(mutate((tmp_path / "m").read_bytes()))
        with pytest.raises(ModelFormatError, match=msg):
            load_model(tmp_path / "m")

    def test_embeddings(self, tmp_path):
        from medrel.features import FeatureVocab

        vocab = FeatureVocab({"a": 1, "b": 2})
        model = random_model(np.random.default_rng(0), sizes=(2, 3, 3))
        before = model.tables.word.copy()
        (tmp_path / "v.txt").write_text("a 1 2 3 4\nzzz 0 0 0 0\n")
        assert load_embeddings(tmp_path / "v.txt", vocab, model) == 1
        assert model.tables.word[1].tolist() == [1, 2, 3, 4]
        assert np.array_equal(model.tables.word[2], before[2])
        (tmp_path / "bad.txt").write_text("a 1 2\n")
        with pytest.raises(DimensionError):
            load_embeddings(tmp_path / "bad.txt", vocab, model)
