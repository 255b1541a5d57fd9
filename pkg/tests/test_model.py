import numpy as np
import numpy.testing as npt
import pytest

from rnne.exceptions import CorruptionError, TrainingError, ValidationError
from rnne.model import (
    Hyperparams,
    ModelParams,
    decode,
    encode,
    first_order_loss,
    gradients,
    load_checkpoint,
    reconstruction_loss,
    reconstruction_weights,
    sample_batch,
    save_checkpoint,
    sgd_step,
    stability_loss,
    total_loss,
)

from conftest import build_window


class TestModelParams:
    def test_initialize_shapes(self):
        p = ModelParams.initialize([12, 7, 4], seed=0)
        assert p.layer_sizes == (12, 7, 4)
        assert [w.shape for w in p.enc_w] == [(12, 7), (7, 4)]
        assert [w.shape for w in p.dec_w] == [(4, 7), (7, 12)]
        assert p.input_dim == 12 and p.embedding_dim == 4 and p.n_slots == 8

    def test_biases_start_zero(self):
        p = ModelParams.initialize([10, 3], seed=1)
        for b in p.enc_b + p.dec_b:
            npt.assert_array_equal(b, 0.0)

    def test_glorot_bound(self):
        p = ModelParams.initialize([40, 5], seed=2)
        bound = np.sqrt(6.0 / 45.0)
        assert np.abs(p.enc_w[0]).max() <= bound

    def test_deterministic_by_seed(self):
        a = ModelParams.initialize([10, 3], seed=9)
        b = ModelParams.initialize([10, 3], seed=9)
        for (_, x), (_, y) in zip(a.arrays(), b.arrays()):
            npt.assert_array_equal(x, y)

    def test_embedding_must_shrink(self):
        with pytest.raises(ValidationError):
            ModelParams.initialize([4, 4], seed=0)

    def test_too_few_sizes(self):
        with pytest.raises(ValidationError):
            ModelParams.initialize([5], seed=0)

    def test_wrong_shape_rejected(self):
        p = ModelParams.initialize([10, 3], seed=0)
        with pytest.raises(ValidationError):
            ModelParams(p.layer_sizes, [np.zeros((9, 3))], p.enc_b, p.dec_w, p.dec_b)

    def test_nonfinite_rejected(self):
        p = ModelParams.initialize([10, 3], seed=0)
        p.enc_w[0][0, 0] = np.nan
        with pytest.raises(CorruptionError):
            p.validate()

    def test_copy_is_deep(self):
        p = ModelParams.initialize([10, 3], seed=0)
        q = p.copy()
        q.enc_w[0][0, 0] += 1.0
        assert p.enc_w[0][0, 0] != q.enc_w[0][0, 0]


class TestHyperparams:
    def test_defaults_valid(self):
        Hyperparams()

    @pytest.mark.parametrize(
        "kw",
        [
            {"loss_alpha": -0.1},
            {"beta": 0.5},
            {"gamma": -1.0},
            {"eta": 0.0},
            {"batch_size": 0},
            {"embedding_dim": 0},
            {"max_iters": 0},
            {"lr_decay": 0.0},
            {"lr_decay": 1.5},
        ],
    )
    def test_rejects(self, kw):
        with pytest.raises(ValidationError):
            Hyperparams(**kw)


class TestEncodeDecode:
    def test_round_shapes(self):
        p = ModelParams.initialize([10, 3], seed=0)
        rng = np.random.default_rng(0)
        y = encode(rng.random((4, 3)), rng.random((4, 7)), p)
        assert y.shape == (4, 3)
        assert decode(y, p).shape == (4, 10)

    def test_single_row_squeeze(self):
        p = ModelParams.initialize([10, 3], seed=0)
        y = encode(np.zeros(3), np.zeros(7), p)
        assert y.shape == (3,)
        assert decode(y, p).shape == (10,)

    def test_deterministic(self):
        p = ModelParams.initialize([10, 3], seed=0)
        h = np.full(3, 0.2)
        x = np.full(7, 0.6)
        npt.assert_array_equal(encode(h, x, p), encode(h, x, p))

    def test_dimension_errors(self):
        p = ModelParams.initialize([10, 3], seed=0)
        with pytest.raises(ValidationError):
            encode(np.zeros(4), np.zeros(7), p)
        with pytest.raises(ValidationError):
            encode(np.zeros(3), np.zeros(8), p)
        with pytest.raises(ValidationError):
            decode(np.zeros(4), p)

    def test_output_in_open_unit_interval(self):
        p = ModelParams.initialize([10, 3], seed=3)
        y = encode(np.zeros(3), np.ones(7) * 30, p)
        assert np.all(y > 0.0) and np.all(y < 1.0)


class TestLossTerms:
    def test_weights_place_beta_on_nonzero_entries(self):
        w = reconstruction_weights([0.0, 2.0, 0.0, 1.0], d=2, beta=5.0)
        npt.assert_array_equal(w, [1, 1, 1, 5, 1, 5])

    def test_weights_beta_below_one_rejected(self):
        with pytest.raises(ValidationError):
            reconstruction_weights([1.0], d=1, beta=0.5)

    def test_reconstruction_perfect_is_zero(self):
        h = np.array([0.3, 0.4])
        x = np.array([0.0, 1.0, 0.0])
        x_hat = np.concatenate([h, x])
        assert reconstruction_loss(x_hat, h, x, [0.0, 1.0, 0.0], 5.0) == 0.0

    def test_reconstruction_zero_row_is_plain_error(self):
        h = np.zeros(2)
        x = np.array([0.2, 0.8])
        x_hat = np.array([0.1, 0.1, 0.5, 0.5])
        want = float(np.sum((x_hat - np.concatenate([h, x])) ** 2))
        npt.assert_allclose(reconstruction_loss(x_hat, h, x, [0.0, 0.0], 5.0), want)

    def test_reconstruction_beta_one_matches_unweighted(self):
        rng = np.random.default_rng(0)
        h, x = rng.random(3), rng.random(5)
        x_hat = rng.random(8)
        row = (rng.random(5) < 0.5).astype(float)
        want = float(np.sum((x_hat - np.concatenate([h, x])) ** 2))
        npt.assert_allclose(reconstruction_loss(x_hat, h, x, row, 1.0), want, rtol=1e-15)

    def test_reconstruction_hand_value(self):
        # one hidden coord, two feature coords, edge on the first of them:
        # diff = (0.5, 0.1, -0.2), weights (1, 5, 1)
        # loss = 0.25 + 25*0.01 + 0.04 = 0.54
        loss = reconstruction_loss(
            [0.5, 0.6, 0.0], [0.0], [0.5, 0.2], [3.0, 0.0], 5.0
        )
        npt.assert_allclose(loss, 0.54, rtol=1e-12)

    def test_first_order_hand_value(self):
        # ordered pair (0,1) with weight 2 and squared distance 0.25
        y = np.array([[0.0, 0.0], [0.5, 0.0], [4.0, 4.0]])
        m = np.zeros((3, 3))
        m[0, 1] = 2.0
        npt.assert_allclose(first_order_loss(y, m), 0.5, rtol=1e-15)
        m[1, 0] = 2.0
        npt.assert_allclose(first_order_loss(y, m), 1.0, rtol=1e-15)

    def test_first_order_no_edges_zero(self):
        y = np.random.default_rng(0).random((4, 3))
        assert first_order_loss(y, np.zeros((4, 4))) == 0.0

    def test_first_order_shape_check(self):
        with pytest.raises(ValidationError):
            first_order_loss(np.zeros((3, 2)), np.zeros((2, 2)))

    def test_stability_hand_value(self):
        assert stability_loss(np.array([[0.0], [2.0]])) == 2.0

    def test_stability_single_step_zero(self):
        assert stability_loss(np.array([[0.7, 0.1]])) == 0.0

    def test_stability_is_n_times_variance(self):
        rng = np.random.default_rng(4)
        y = rng.random((6, 3))
        want = 6.0 * y.var(axis=0).sum()
        npt.assert_allclose(stability_loss(y), want, rtol=1e-12)

    def test_stability_requires_2d(self):
        with pytest.raises(ValidationError):
            stability_loss(np.zeros(4))


class TestTotalLoss:
    def test_alpha_gamma_zero_reduces_to_l2(self, toy_window):
        p = ModelParams.initialize([11, 3], seed=0)
        hyper = Hyperparams(loss_alpha=0.0, gamma=0.0, beta=5.0, embedding_dim=3)
        batch = np.arange(toy_window.n_slots)
        total, terms = total_loss(toy_window, batch, p, hyper)
        npt.assert_allclose(total, terms["l2"].sum(), rtol=1e-15)

    def test_term_breakdown_sums(self, toy_window):
        p = ModelParams.initialize([11, 3], seed=1)
        hyper = Hyperparams(loss_alpha=0.3, gamma=2.0, beta=5.0, embedding_dim=3)
        batch = np.arange(toy_window.n_slots)
        total, terms = total_loss(toy_window, batch, p, hyper)
        want = 0.3 * terms["l1"].sum() + terms["l2"].sum() + 2.0 * terms["l_time"]
        npt.assert_allclose(total, want, rtol=1e-15)

    def test_matches_per_node_loss_functions(self, toy_window):
        # the window kernel must agree with the standalone per-term functions
        p = ModelParams.initialize([11, 3], seed=2)
        hyper = Hyperparams(loss_alpha=0.2, gamma=1.3, beta=4.0, embedding_dim=3)
        batch = np.arange(toy_window.n_slots)
        total, _ = total_loss(toy_window, batch, p, hyper)

        h = toy_window.carry_hidden[batch]
        acc = 0.0
        ys = []
        for entry in toy_window.entries:
            x = entry.features[batch]
            y = encode(h, x, p)
            x_hat = decode(y, p)
            adj = entry.base.adjacency
            for i, slot in enumerate(batch):
                acc += reconstruction_loss(
                    x_hat[i], h[i], x[i], adj[slot], hyper.beta
                )
            pair = adj[np.ix_(batch, batch)]
            acc += hyper.loss_alpha * first_order_loss(y, pair)
            ys.append(y)
            h = y
        ys = np.stack(ys)
        for i in range(len(batch)):
            acc += hyper.gamma * stability_loss(ys[:, i, :])
        npt.assert_allclose(total, acc, rtol=1e-10)

    def test_non_normal_slot_rejected(self, toy_window):
        toy_window.entries[1].states[2] = 2
        p = ModelParams.initialize([11, 3], seed=0)
        hyper = Hyperparams(embedding_dim=3)
        with pytest.raises(ValidationError, match="not normal"):
            total_loss(toy_window, [0, 2, 4], p, hyper)

    def test_empty_batch_rejected(self, toy_window):
        p = ModelParams.initialize([11, 3], seed=0)
        with pytest.raises(ValidationError):
            total_loss(toy_window, [], p, Hyperparams(embedding_dim=3))


class TestSgdStep:
    def test_updates_in_place(self):
        p = ModelParams.initialize([6, 2], seed=0)
        grads = (
            [np.ones_like(w) for w in p.enc_w],
            [np.ones_like(b) for b in p.enc_b],
            [np.zeros_like(w) for w in p.dec_w],
            [np.zeros_like(b) for b in p.dec_b],
        )
        before = p.enc_w[0].copy()
        out = sgd_step(p, grads, 0.1)
        assert out is p
        npt.assert_allclose(p.enc_w[0], before - 0.1)
        npt.assert_array_equal(p.enc_b[0], -0.1)

    def test_step_decreases_loss(self, toy_window):
        p = ModelParams.initialize([11, 3], seed=5)
        hyper = Hyperparams(embedding_dim=3, beta=2.0)
        batch = np.arange(toy_window.n_slots)
        initial, _ = total_loss(toy_window, batch, p, hyper)
        before = initial
        eta = 0.1
        for _ in range(12):
            g = gradients(toy_window, batch, p, hyper)
            trial = p.copy()
            sgd_step(trial, g, eta)
            after, _ = total_loss(toy_window, batch, trial, hyper)
            if after < before:
                p, before = trial, after
            else:
                eta *= 0.5
        assert before < initial

    def test_nonfinite_update_raises(self):
        p = ModelParams.initialize([6, 2], seed=0)
        grads = (
            [np.full_like(w, np.inf) for w in p.enc_w],
            [np.zeros_like(b) for b in p.enc_b],
            [np.zeros_like(w) for w in p.dec_w],
            [np.zeros_like(b) for b in p.dec_b],
        )
        with pytest.raises(CorruptionError):
            sgd_step(p, grads, 1.0)


class TestSampleBatch:
    def test_samples_only_eligible(self, toy_window):
        toy_window.entries[0].states[3] = 2
        toy_window.entries[2].states[5] = 1
        batch = sample_batch(toy_window, 4, np.random.default_rng(0))
        assert 3 not in batch and 5 not in batch
        assert len(batch) == 4

    def test_shrinks_when_short(self, toy_window, caplog):
        for e in toy_window.entries:
            e.states[2:] = 2
        with caplog.at_level("WARNING"):
            batch = sample_batch(toy_window, 6, np.random.default_rng(0))
        assert sorted(batch) == [0, 1]

    def test_no_eligible_raises(self, toy_window):
        for e in toy_window.entries:
            e.states[:] = 2
        with pytest.raises(TrainingError):
            sample_batch(toy_window, 4, np.random.default_rng(0))

    def test_deterministic_for_seed(self, toy_window):
        a = sample_batch(toy_window, 5, np.random.default_rng(42))
        b = sample_batch(toy_window, 5, np.random.default_rng(42))
        npt.assert_array_equal(a, b)

    def test_no_replacement(self, toy_window):
        batch = sample_batch(toy_window, toy_window.n_slots, np.random.default_rng(1))
        assert len(set(batch.tolist())) == toy_window.n_slots


class TestCheckpoint:
    def test_round_trip(self, tmp_path):
        p = ModelParams.initialize([12, 6, 3], seed=7)
        hyper = Hyperparams(embedding_dim=3, beta=2.5, max_iters=50)
        path = tmp_path / "ck.npz"
        save_checkpoint(path, p, hyper, seed=11, extra={"note": "x"})
        q, h2, seed, extra = load_checkpoint(path)
        assert q.layer_sizes == p.layer_sizes
        for (_, a), (_, b) in zip(p.arrays(), q.arrays()):
            npt.assert_array_equal(a, b)
        assert h2 == hyper
        assert seed == 11
        assert extra == {"note": "x"}

    def test_format_guard(self, tmp_path):
        import json

        p = ModelParams.initialize([8, 2], seed=0)
        path = tmp_path / "ck.npz"
        save_checkpoint(path, p, Hyperparams(embedding_dim=2), seed=0)
        with np.load(path) as data:
            arrays = {k: data[k] for k in data.files}
        meta = json.loads(bytes(arrays["__meta__"]))
        meta["format"] = 99
        arrays["__meta__"] = np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)
        np.savez(path, **arrays)
        with pytest.raises(ValidationError, match="format"):
            load_checkpoint(path)
