from __future__ import annotations

import dataclasses
import math

import numpy as np
import pytest

from helpers import TOLERANCE, check_tensors
from herman import crf
from herman.model import (
    Batch,
    ConfigError,
    Herman,
    HermanConfig,
    Vocab,
    batch_loss,
    combine,
    crf_nll,
    forward,
    init_params,
    train,
    verdict_bce,
)
from herman.nn.autograd import Tensor
from herman.synth import Tag, Verdict, build_dataset, split_dataset
from herman.toy import toy_corpus

O = int(Tag.O)
WORDS = [f"w{i}" for i in range(26)]
FULL_MODEL_STEP = 1e-4
TINY = dict(hidden=8, embed=6, vocab=30, batch_size=2, seed=3)


def tiny_vocab() -> Vocab:
    return Vocab(["<pad>", "<unk>"] + WORDS + ["£5", "7"])


def tiny_batch(vocab: Vocab, with_labels: bool = True) -> Batch:
    items = [
        (["w1", "w2", "£5", "w3", "7", "w4", "w5"], ["w2", "£5", "w6", "7"], [0, 1, 0, 1],
         [O, int(Tag.B_V), O, int(Tag.B_U)], 0.0),
        (["w7", "7", "w8", "w9"], ["7", "w7", "w10", "w11", "w12", "£5", "w2"], [1, 0, 0, 0, 0, 1, 0],
         [int(Tag.B_V), O, O, O, O, int(Tag.B_V), O], 1.0),
    ]
    if not with_labels:
        items = [(a, s, m, None, None) for a, s, m, _, _ in items]
    return Batch.build(vocab, items)


@pytest.fixture(scope="module")
def small_data():
    data = build_dataset(toy_corpus(40, seed=5), 0)
    return split_dataset(data, (0.6, 0.2, 0.2), seed=0)


class TestConfig:
    @pytest.mark.parametrize("alpha", [-0.1, 1.5])
    def test_alpha_range(self, alpha):
        with pytest.raises(ConfigError):
            HermanConfig(alpha=alpha).validate()

    @pytest.mark.parametrize("alpha", [0.0, 0.33, 0.5, 0.66, 1.0])
    def test_alpha_accepted(self, alpha):
        assert HermanConfig(alpha=alpha).validate().alpha == alpha

    @pytest.mark.parametrize("field,value", [("loss_mode", "hinge"), ("hidden", 0), ("patience", -1),
                                             ("z_pool", "max"), ("match_attention", "cosine")])
    def test_invalid_values(self, field, value):
        with pytest.raises(ConfigError):
            HermanConfig(**{field: value}).validate()

    def test_round_trip_and_unknown_keys(self):
        cfg = HermanConfig(alpha=0.5, hidden=4)
        assert HermanConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ConfigError):
            HermanConfig.from_dict({"alpah": 0.5})


class TestVocab:
    def test_build_order(self):
        v = Vocab.build([["b", "a", "b"], ["c"]], 10)
        assert v.words == ["<pad>", "<unk>", "b", "a", "c"]

    def test_max_size_and_unknown(self):
        v = Vocab.build([["b", "a", "b"], ["c"]], 3)
        assert len(v) == 3 and v.ids(["b", "zzz"]) == [2, 1]

    def test_reserved_tokens_required(self):
        with pytest.raises(ValueError):
            Vocab(["a", "<pad>", "<unk>"])


class TestForward:
    def test_shapes_and_ranges(self):
        cfg = HermanConfig(**TINY)
        vocab = tiny_vocab()
        store = init_params(cfg, len(vocab))
        emissions, z = forward(store, cfg, tiny_batch(vocab))
        assert emissions.shape == (2, 7, 5) and z.shape == (2,)
        assert np.all((z.data > 0) & (z.data < 1))

    def test_length_one_attends_fully(self):
        from herman.nn.layers import additive_attention

        cfg = HermanConfig(**TINY)
        vocab = tiny_vocab()
        store = init_params(cfg, len(vocab))
        batch = Batch.build(vocab, [(["w1"], ["w1"], [0], None, None)])
        emissions, z = forward(store, cfg, batch)
        assert emissions.shape == (1, 1, 5) and z.shape == (1,)
        keys = Tensor(np.random.default_rng(0).normal(size=(1, 1, 16)))
        _, weights = additive_attention(keys, keys, store["attn.query.W"], store["attn.key.W"],
                                        store["attn.v"], store["attn.key.b"])
        np.testing.assert_array_equal(weights.data, [[[1.0]]])

    def test_padding_does_not_leak(self):
        cfg = HermanConfig(**TINY)
        vocab = tiny_vocab()
        store = init_params(cfg, len(vocab))
        full = tiny_batch(vocab)
        alone = Batch.build(vocab, [(["w1", "w2", "£5", "w3", "7", "w4", "w5"], ["w2", "£5", "w6", "7"],
                                     [0, 1, 0, 1], None, None)])
        e_full, z_full = forward(store, cfg, full)
        e_alone, z_alone = forward(store, cfg, alone)
        np.testing.assert_allclose(e_full.data[0, :4], e_alone.data[0], atol=1e-12)
        assert z_full.data[0] == pytest.approx(z_alone.data[0], abs=1e-12)

    def test_deterministic_init(self):
        cfg = HermanConfig(**TINY)
        a, b = init_params(cfg, 30), init_params(cfg, 30)
        for (na, ta), (nb, tb) in zip(a, b):
            assert na == nb and np.array_equal(ta.data, tb.data)


class TestLoss:
    @pytest.mark.parametrize("mode", ["sequence", "token-marginal"])
    def test_full_loss_gradient(self, mode):
        cfg = HermanConfig(**TINY, loss_mode=mode, alpha=0.66)
        vocab = tiny_vocab()
        store = init_params(cfg, len(vocab))
        # perturb the zero-initialised CRF so its gradients are not trivially symmetric
        rng = np.random.default_rng(1)
        for name in ("crf.transitions", "crf.start", "crf.end"):
            store[name].data += rng.normal(scale=0.5, size=store[name].shape)
        batch = tiny_batch(vocab)
        # the loss is O(10) while some gradients are O(1e-8); h = 1e-4 keeps the
        # difference quotient clear of round-off at that scale
        errors = check_tensors(lambda: batch_loss(store, cfg, batch), dict(store), h=FULL_MODEL_STEP)
        worst = max(errors, key=errors.get)
        assert errors[worst] <= TOLERANCE, (worst, errors[worst])

    def test_alpha_one_is_tag_loss(self):
        cfg = HermanConfig(**TINY, alpha=1.0)
        vocab = tiny_vocab()
        store = init_params(cfg, len(vocab))
        batch = tiny_batch(vocab)
        emissions, _ = forward(store, cfg, batch)
        params = crf.CrfParams(store["crf.transitions"].data, store["crf.start"].data, store["crf.end"].data)
        expected = np.mean([crf.nll(emissions.data[b, :n], batch.y[b, :n], params)
                            for b, n in enumerate(batch.lengths)])
        assert batch_loss(store, cfg, batch).item() == pytest.approx(expected, abs=1e-10)

    def test_alpha_zero_at_half_is_ln2(self):
        z_prob = Tensor(np.array([0.5, 0.5]))
        loss = combine(Tensor(np.array([7.0, 9.0])), verdict_bce(z_prob, np.array([1.0, 0.0])), 0.0)
        np.testing.assert_allclose(loss.data, math.log(2), atol=1e-15)

    def test_mixture(self):
        tag = Tensor(np.array([2.0]))
        z_loss = verdict_bce(Tensor(np.array([0.8])), np.array([1.0]))
        expected = 0.66 * 2.0 + 0.34 * -math.log(0.8)
        assert combine(tag, z_loss, 0.66).item() == pytest.approx(expected, abs=1e-14)

    def test_bce_clamped(self):
        loss = verdict_bce(Tensor(np.array([0.0, 1.0])), np.array([1.0, 0.0]))
        assert np.all(np.isfinite(loss.data))
        np.testing.assert_allclose(loss.data, -math.log(1e-12), rtol=1e-6)

    def test_combine_rejects_alpha(self):
        with pytest.raises(ConfigError):
            combine(Tensor(np.zeros(1)), Tensor(np.zeros(1)), 1.2)

    def test_crf_nll_per_sequence(self):
        cfg = HermanConfig(**TINY)
        vocab = tiny_vocab()
        store = init_params(cfg, len(vocab))
        batch = tiny_batch(vocab)
        emissions, _ = forward(store, cfg, batch)
        assert crf_nll(emissions, store, batch).shape == (2,)


class TestTraining:
    def test_loss_decreases_and_logs(self, small_data):
        tr, va, _ = small_data
        cfg = HermanConfig(hidden=8, embed=8, batch_size=4, lr=0.01, max_epochs=2, seed=1)
        result = train(tr, va, cfg)
        assert [r["epoch"] for r in result.log] == [1, 2]
        assert set(result.log[0]) == {"epoch", "train_loss", "val_loss", "seed", "timestamp"}
        assert result.log[1]["train_loss"] < result.log[0]["train_loss"]

    def test_same_seed_same_log(self, small_data):
        tr, va, _ = small_data
        cfg = HermanConfig(hidden=6, embed=6, batch_size=8, lr=0.01, max_epochs=2, seed=4)
        strip = lambda log: [{k: v for k, v in r.items() if k != "timestamp"} for r in log]
        a, b = train(tr, va, cfg), train(tr, va, dataclasses.replace(cfg))
        assert strip(a.log) == strip(b.log)

    def test_patience_zero_stops_after_first_bad_epoch(self, small_data):
        tr, va, _ = small_data
        # a huge learning rate makes validation loss rise quickly
        cfg = HermanConfig(hidden=6, embed=6, batch_size=8, lr=0.5, max_epochs=10, patience=0, seed=2)
        result = train(tr, va, cfg)
        vals = [r["val_loss"] for r in result.log]
        first_bad = next(i for i in range(1, len(vals)) if vals[i] >= min(vals[:i]))
        assert len(vals) == first_bad + 1 and result.stopped_early
        assert result.best_epoch == int(np.argmin(vals)) + 1

    def test_best_parameters_restored(self, small_data):
        tr, va, _ = small_data
        cfg = HermanConfig(hidden=6, embed=6, batch_size=8, lr=0.5, max_epochs=4, patience=5, seed=2)
        result = train(tr, va, cfg)
        best = result.log[result.best_epoch - 1]["val_loss"]
        assert result.model.loss(va) == pytest.approx(best, rel=1e-12)

    def test_empty_sets_rejected(self, small_data):
        with pytest.raises(ValueError):
            train([], small_data[1], HermanConfig(**TINY))


class TestInference:
    @pytest.fixture(scope="class")
    @staticmethod
    def model():
        return Herman(HermanConfig(**TINY), tiny_vocab())

    def test_no_quantities_all_o(self, model):
        out = model.verify("w1 w2 w3", "w4 w5")
        assert out.tag_sequence == [O, O] and out.m == [0, 0]
        np.testing.assert_allclose(out.tag_marginals[:, O], 1.0)

    def test_entity_tokens_never_o(self, model):
        out = model.verify("He paid £5 for 7 apples", "He paid £5 for 7 apples")
        for tag, mj in zip(out.tag_sequence, out.m):
            assert (tag == O) == (mj == 0)
        assert out.verdict in (Verdict.VERIFIED, Verdict.UNVERIFIED)

    def test_truncation_flag(self):
        cfg = HermanConfig(**TINY, max_summary=3, max_article=4)
        model = Herman(cfg, tiny_vocab())
        out = model.verify("w1 w2 w3 w4 w5", "w1 w2 w3 w4")
        assert out.truncated and len(out.tag_sequence) == 3
        assert not model.verify("w1", "w2").truncated

    def test_empty_input(self, model):
        with pytest.raises(ValueError):
            model.verify("", "w1")


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        model = Herman(HermanConfig(**TINY), tiny_vocab())
        path = tmp_path / "m.hrmn"
        model.save(path, {"seed": 3})
        loaded = Herman.load(path)
        assert loaded.header == {"seed": 3} and loaded.cfg == model.cfg
        assert loaded.vocab.words == model.vocab.words
        for (n1, t1), (n2, t2) in zip(model.store, loaded.store):
            assert n1 == n2 and t1.data.tobytes() == t2.data.tobytes()
        a = model.verify("w1 £5 w2", "w1 £5")
        b = loaded.verify("w1 £5 w2", "w1 £5")
        assert a.tag_marginals.tobytes() == b.tag_marginals.tobytes() and a.z_prob == b.z_prob

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.hrmn"
        path.write_bytes(b"NOPE" + bytes(20))
        with pytest.raises(ValueError, match="magic"):
            Herman.load(path)

    def test_truncated_file(self, tmp_path):
        model = Herman(HermanConfig(**TINY), tiny_vocab())
        path = tmp_path / "m.hrmn"
        model.save(path)
        path.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(ValueError, match="truncated"):
            Herman.load(path)
