"""Kernel ops: forward contracts, gradient checks, Adam, dropout statistics."""

import math

import numpy as np
import pytest

from qapairgen.diffkernel import (
    Adam,
    LSTMCell,
    ParamSet,
    Tensor,
    adam_step,
    clip_global_norm,
    concat,
    dropout,
    grad_check,
    load_pretrained_embeddings,
    lstm_step,
    matmul,
    nll_loss,
    precision,
    reduce_sum,
    rows,
    softmax,
    standard_checks,
    tanh,
    zeros,
)


class TestSoftmax:
    def test_symmetry(self):
        out = softmax(Tensor(np.zeros((1, 3))), axis=1)
        np.testing.assert_allclose(out.data, [[1 / 3, 1 / 3, 1 / 3]])

    def test_exp_ratio(self):
        out = softmax(Tensor(np.array([[0.0, math.log(3.0)]])), axis=1)
        np.testing.assert_allclose(out.data, [[0.25, 0.75]], atol=1e-12)

    def test_shift_invariance(self):
        x = np.random.default_rng(0).normal(size=(2, 5))
        a = softmax(Tensor(x), axis=1).data
        b = softmax(Tensor(x + 7.0), axis=1).data
        np.testing.assert_allclose(a, b, atol=1e-6)

    def test_rows_sum_to_one(self):
        x = np.random.default_rng(1).normal(size=(4, 6)) * 30
        out = softmax(Tensor(x), axis=1).data
        np.testing.assert_allclose(out.sum(axis=1), 1.0, atol=1e-6)
        assert np.isfinite(out).all()

    def test_empty_axis_rejected(self):
        with pytest.raises(ValueError):
            softmax(Tensor(np.zeros((2, 0))), axis=1)


class TestLSTMStep:
    def test_zero_params_halve_cell_state(self):
        h = 4
        cell = LSTMCell(zeros((3, 4 * h)), zeros((h, 4 * h)), zeros((4 * h,)))
        c0 = Tensor(np.linspace(-1, 1, h).reshape(1, h))
        h1, c1 = lstm_step(Tensor(np.ones((1, 3))), zeros((1, h)), c0, cell)
        np.testing.assert_allclose(c1.data, 0.5 * c0.data, atol=1e-7)
        np.testing.assert_allclose(h1.data, 0.5 * np.tanh(0.5 * c0.data), atol=1e-7)

    def test_all_zero_everything(self):
        h = 2
        cell = LSTMCell(zeros((2, 4 * h)), zeros((h, 4 * h)), zeros((4 * h,)))
        h1, c1 = lstm_step(zeros((1, 2)), zeros((1, h)), zeros((1, h)), cell)
        np.testing.assert_array_equal(h1.data, 0.0)
        np.testing.assert_array_equal(c1.data, 0.0)

    def test_shape_mismatch_names_parameter(self):
        h = 2
        cell = LSTMCell(zeros((3, 4 * h)), zeros((h, 4 * h)), zeros((4 * h,)))
        with pytest.raises(ValueError, match="wx"):
            lstm_step(zeros((1, 5)), zeros((1, h)), zeros((1, h)), cell)

    def test_gradient_matches_finite_difference(self):
        def fn(x, h, c, wx, wh, b):
            h2, c2 = lstm_step(x, h, c, LSTMCell(wx, wh, b))
            return reduce_sum(tanh(concat([h2, c2], axis=1)))

        err = grad_check(fn, [(1, 3), (1, 4), (1, 4), (3, 16), (4, 16), (16,)], seed=7)
        assert err < 1e-4


class TestAdam:
    def test_zero_gradient_leaves_parameters(self):
        value = np.array([1.0, -2.0])
        m = np.zeros(2)
        v = np.zeros(2)
        adam_step(value, np.zeros(2), m, v, t=1, lr=0.1)
        np.testing.assert_array_equal(value, [1.0, -2.0])

    def test_first_step_is_signed_lr(self):
        # bias correction makes the first update -lr * g / (|g| + eps) = -lr*sign(g)
        value = np.array([0.0, 0.0])
        g = np.array([10.0, -3.0])
        adam_step(value, g, np.zeros(2), np.zeros(2), t=1, lr=0.05)
        np.testing.assert_allclose(value, [-0.05, 0.05], rtol=1e-6)

    def test_two_steps_match_hand_recursion(self):
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        g1, g2 = 0.7, -0.2
        # hand-rolled scalar recursion (64-bit)
        x = 1.0
        m = b1 * 0.0 + (1 - b1) * g1
        v = b2 * 0.0 + (1 - b2) * g1 * g1
        x -= lr * (m / (1 - b1)) / (math.sqrt(v / (1 - b2)) + eps)
        m = b1 * m + (1 - b1) * g2
        v = b2 * v + (1 - b2) * g2 * g2
        x -= lr * (m / (1 - b1**2)) / (math.sqrt(v / (1 - b2**2)) + eps)

        value = np.array([1.0], dtype=np.float64)
        mm = np.zeros(1)
        vv = np.zeros(1)
        adam_step(value, np.array([g1]), mm, vv, t=1, lr=lr)
        adam_step(value, np.array([g2]), mm, vv, t=2, lr=lr)
        assert abs(value[0] - x) < 1e-12

    def test_optimizer_over_paramset(self):
        rng = np.random.default_rng(3)
        params = ParamSet()
        p = params.create("w", (2, 2), rng)
        before = p.data.copy()
        opt = Adam(params, lr=0.1)
        p.grad = np.ones_like(p.data)
        opt.step()
        assert not np.allclose(p.data, before)
        assert opt.t == 1

    def test_clip_global_norm(self):
        params = ParamSet()
        params.add("a", Tensor(np.zeros(3)))
        params["a"].grad = np.array([3.0, 0.0, 4.0])
        norm = clip_global_norm(params, max_norm=1.0)
        assert norm == pytest.approx(5.0)
        np.testing.assert_allclose(np.linalg.norm(params["a"].grad), 1.0)


class TestDropout:
    def test_eval_mode_is_identity(self):
        x = Tensor(np.ones((4, 4)))
        assert dropout(x, 0.5, train=False) is x

    def test_train_mode_preserves_expectation(self):
        rng = np.random.default_rng(11)
        x = Tensor(np.ones((100_000,)))
        out = dropout(x, 0.3, rng, train=True)
        assert abs(out.data.mean() - 1.0) < 0.02

    def test_rate_validation(self):
        with pytest.raises(ValueError):
            dropout(Tensor(np.ones(3)), 1.0, np.random.default_rng(0), train=True)


class TestNLLLoss:
    def test_pad_rows_contribute_nothing(self):
        rng = np.random.default_rng(5)
        logits_data = rng.normal(size=(4, 6))
        targets = [2, 0, 3, 0]  # rows 1 and 3 are padding

        logits = Tensor(logits_data.copy(), requires_grad=True)
        loss = nll_loss(logits, targets, pad_id=0)
        loss.backward()
        np.testing.assert_array_equal(logits.grad[1], 0.0)
        np.testing.assert_array_equal(logits.grad[3], 0.0)

        # loss equals the mean over non-pad rows only
        trimmed = Tensor(logits_data[[0, 2]])
        expected = nll_loss(trimmed, [2, 3])
        assert loss.item() == pytest.approx(expected.item(), rel=1e-6)

    def test_perfect_prediction_loss_near_zero(self):
        logits = Tensor(np.array([[100.0, 0.0], [0.0, 100.0]]))
        assert nll_loss(logits, [0, 1]).item() < 1e-6


class TestEmbeddingRows:
    def test_duplicate_indices_accumulate(self):
        e = Tensor(np.zeros((4, 2)), requires_grad=True)
        out = rows(e, [1, 1, 3])
        reduce_sum(out).backward()
        np.testing.assert_array_equal(e.grad, [[0, 0], [2, 2], [0, 0], [1, 1]])


class TestGradCheckSuite:
    def test_all_registered_ops_pass(self):
        for name, fn, shapes in standard_checks():
            worst = max(grad_check(fn, shapes, seed=s) for s in range(3))
            assert worst < 1e-4, f"{name}: rel err {worst}"

    def test_tanh_at_zero(self):
        err = grad_check(lambda x: reduce_sum(tanh(x)), inputs=[np.zeros((1, 1))])
        assert err < 1e-6

    def test_matmul_case(self):
        err = grad_check(lambda a, b: reduce_sum(tanh(matmul(a, b))), [(3, 4), (4, 2)], seed=1)
        assert err < 1e-4


class TestPrecisionModes:
    def test_default_is_float32(self):
        assert zeros((2,)).data.dtype == np.float32

    def test_precision_context(self):
        with precision("float64"):
            assert zeros((2,)).data.dtype == np.float64
        assert zeros((2,)).data.dtype == np.float32


class TestParamSet:
    def test_duplicate_name_rejected(self):
        params = ParamSet()
        params.create("w", (2,), np.random.default_rng(0))
        with pytest.raises(ValueError, match="registered twice"):
            params.create("w", (2,), np.random.default_rng(0))

    def test_init_range(self):
        params = ParamSet()
        p = params.create("w", (1000,), np.random.default_rng(0))
        assert p.data.min() >= -0.1
        assert p.data.max() <= 0.1

    def test_value_round_trip(self):
        rng = np.random.default_rng(9)
        params = ParamSet()
        params.create("a", (2, 3), rng)
        params.create("b", (4,), rng)
        snapshot = params.copy_values()
        params["a"].data += 1.0
        params.load_values(snapshot)
        np.testing.assert_array_equal(params["a"].data, snapshot["a"])


class TestPretrainedEmbeddings:
    def test_known_words_loaded_missing_random(self, tmp_path):
        from qapairgen.corpus import build_vocab

        vocab = build_vocab([["known", "missing"]])
        path = tmp_path / "vectors.txt"
        path.write_text("known 1.0 2.0 3.0\nother 9.0 9.0 9.0\n", encoding="utf-8")
        matrix = load_pretrained_embeddings(path, vocab, 3, np.random.default_rng(0))
        np.testing.assert_allclose(matrix[vocab.id("known")], [1.0, 2.0, 3.0])
        assert np.abs(matrix[vocab.id("missing")]).max() <= 0.1

    def test_bad_arity_reports_line(self, tmp_path):
        from qapairgen.corpus import build_vocab

        path = tmp_path / "vectors.txt"
        path.write_text("tok 1.0 2.0\n", encoding="utf-8")
        with pytest.raises(ValueError, match=":1:"):
            load_pretrained_embeddings(path, build_vocab([["tok"]]), 3, np.random.default_rng(0))
