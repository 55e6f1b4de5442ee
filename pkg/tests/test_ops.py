"""Layer forward/backward rules: worked examples, errors, purity."""

import numpy as np
import pytest

from fnwl.errors import ShapeError
from fnwl.nn.gradcheck import finite_diff_gradcheck
from fnwl.nn.ops import (
    ConvParams,
    LinearParams,
    conv1d_backward,
    conv1d_forward,
    linear_backward,
    linear_forward,
    maxpool1d,
    maxpool1d_backward,
    relu,
    relu_backward,
    softmax_cross_entropy,
)


class TestConvForward:
    def test_zero_input_leaves_bias(self):
        x = np.zeros((1, 1, 4))
        p = ConvParams(np.ones((1, 1, 3)), np.array([0.7]), padding=1)
        assert np.array_equal(conv1d_forward(x, p), np.full((1, 1, 4), 0.7))

    def test_identity_kernel(self):
        x = np.array([[[1.0, 2.0, 3.0]]])
        p = ConvParams(np.array([[[1.0]]]), np.array([0.0]), padding=0)
        assert np.array_equal(conv1d_forward(x, p), x)

    def test_edge_detector_with_padding(self):
        # direct summation of the padded cross-correlation, worked by hand:
        # xp = [0,1,2,3,4,0], kernel (1,0,-1) -> [-2,-2,-2,3]
        x = np.array([[[1.0, 2.0, 3.0, 4.0]]])
        p = ConvParams(np.array([[[1.0, 0.0, -1.0]]]), np.array([0.0]), padding=1)
        assert np.allclose(conv1d_forward(x, p), [[[-2.0, -2.0, -2.0, 3.0]]])

    def test_direct_summation_oracle(self, rng):
        x = rng.uniform(-1, 1, (2, 3, 8))
        p = ConvParams(rng.uniform(-1, 1, (4, 3, 3)), rng.uniform(-1, 1, 4), padding=1)
        got = conv1d_forward(x, p)
        xp = np.zeros((2, 3, 10))
        xp[:, :, 1:9] = x
        expected = np.zeros((2, 4, 8))
        for b in range(2):
            for o in range(4):
                for i in range(8):
                    acc = p.bias[o]
                    for c in range(3):
                        for j in range(3):
                            acc += xp[b, c, i + j] * p.weights[o, c, j]
                    expected[b, o, i] = acc
        assert np.allclose(got, expected, atol=1e-12)

    def test_same_padding_preserves_length(self, rng):
        for length in (4, 37, 150):
            x = rng.uniform(-1, 1, (2, 8, length))
            p = ConvParams(rng.uniform(-1, 1, (16, 8, 3)), np.zeros(16), padding=1)
            assert conv1d_forward(x, p).shape == (2, 16, length)

    def test_channel_mismatch_names_both_shapes(self):
        p = ConvParams(np.zeros((4, 3, 3)), np.zeros(4), padding=1)
        with pytest.raises(ShapeError, match=r"\(2, 5, 8\).*expects 3"):
            conv1d_forward(np.zeros((2, 5, 8)), p)

    def test_kernel_longer_than_padded_input(self):
        p = ConvParams(np.zeros((1, 1, 5)), np.zeros(1), padding=0)
        with pytest.raises(ShapeError, match="kernel width 5"):
            conv1d_forward(np.zeros((1, 1, 3)), p)


class TestConvBackward:
    def test_zero_upstream_gives_zero_gradients(self, rng):
        x = rng.uniform(-1, 1, (2, 3, 8))
        p = ConvParams(rng.uniform(-1, 1, (4, 3, 3)), rng.uniform(-1, 1, 4), padding=1)
        bundle = conv1d_backward(x, p, np.zeros((2, 4, 8)))
        assert not bundle.params["W"].any()
        assert not bundle.params["b"].any()
        assert not bundle.inputs["x"].any()

    def test_ones_upstream_bias_gradient_is_bs_times_len(self, rng):
        x = rng.uniform(-1, 1, (2, 3, 8))
        p = ConvParams(rng.uniform(-1, 1, (4, 3, 3)), np.zeros(4), padding=1)
        bundle = conv1d_backward(x, p, np.ones((2, 4, 8)))
        assert np.allclose(bundle.params["b"], 2 * 8)

    def test_matches_finite_differences(self):
        rng = np.random.default_rng(42)
        x = rng.uniform(-1, 1, (2, 3, 8))
        w = rng.uniform(-1, 1, (4, 3, 3))
        b = rng.uniform(-1, 1, 4)
        proj = rng.uniform(-1, 1, (2, 4, 8))

        def loss(params):
            p = ConvParams(params["W"], params["b"], padding=1)
            return float((conv1d_forward(params["x"], p) * proj).sum())

        bundle = conv1d_backward(x, ConvParams(w, b, padding=1), proj)
        report = finite_diff_gradcheck(
            loss,
            {"W": w, "b": b, "x": x},
            {"W": bundle.params["W"], "b": bundle.params["b"], "x": bundle.inputs["x"]},
            h=1e-5,
        )
        assert report.max_rel_err <= 1e-6

    def test_shape_mismatch_rejected(self, rng):
        x = rng.uniform(-1, 1, (2, 3, 8))
        p = ConvParams(rng.uniform(-1, 1, (4, 3, 3)), np.zeros(4), padding=1)
        with pytest.raises(ShapeError):
            conv1d_backward(x, p, np.zeros((2, 4, 7)))


class TestRelu:
    def test_definition(self):
        assert np.array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0.0, 0.0, 2.0])

    def test_identity_on_nonnegative(self, rng):
        x = rng.uniform(0, 5, (3, 4))
        assert np.array_equal(relu(x), x)

    def test_gradient_at_zero_is_zero(self):
        assert np.array_equal(
            relu_backward(np.array([0.0, -1.0, 1.0]), np.ones(3)), [0.0, 0.0, 1.0]
        )

    def test_gradcheck_away_from_kink(self):
        rng = np.random.default_rng(3)
        x = rng.uniform(-1, 1, (4, 5))
        x[np.abs(x) < 1e-3] = 0.5
        proj = rng.uniform(-1, 1, (4, 5))

        def loss(params):
            return float((relu(params["x"]) * proj).sum())

        report = finite_diff_gradcheck(
            loss, {"x": x}, {"x": relu_backward(x, proj)}, h=1e-5
        )
        assert report.max_rel_err <= 1e-6


class TestMaxPool:
    def test_definition(self):
        y, _ = maxpool1d(np.array([[[1.0, 3.0, 2.0, 0.0]]]), 2)
        assert np.array_equal(y, [[[3.0, 2.0]]])

    def test_constant_input(self):
        y, _ = maxpool1d(np.full((1, 2, 7), 4.2), 2)
        assert np.array_equal(y, np.full((1, 2, 3), 4.2))

    def test_trailing_partial_window_dropped(self):
        y, _ = maxpool1d(np.array([[[5.0, 1.0, 4.0]]]), 2)
        assert np.array_equal(y, [[[5.0]]])

    def test_pool_longer_than_input_is_error(self):
        with pytest.raises(ShapeError, match="empty"):
            maxpool1d(np.zeros((1, 1, 3)), 4)

    def test_backward_routes_to_argmax_only(self):
        x = np.array([[[1.0, 3.0, 2.0, 0.0]]])
        _, idx = maxpool1d(x, 2)
        dx = maxpool1d_backward(idx, np.array([[[10.0, 20.0]]]), 4, 2)
        assert np.array_equal(dx, [[[0.0, 10.0, 20.0, 0.0]]])

    def test_tie_routes_to_lowest_index(self):
        x = np.array([[[7.0, 7.0]]])
        _, idx = maxpool1d(x, 2)
        dx = maxpool1d_backward(idx, np.array([[[1.0]]]), 2, 2)
        assert np.array_equal(dx, [[[1.0, 0.0]]])

    def test_length_composition_matches_table(self):
        # 150 -> 75 -> 37 under two non-overlapping p=2 stages
        x = np.zeros((1, 1, 150))
        y1, _ = maxpool1d(x, 2)
        y2, _ = maxpool1d(y1, 2)
        assert y1.shape[2] == 75 and y2.shape[2] == 37


class TestLinear:
    def test_identity_weights(self):
        x = np.arange(6.0).reshape(2, 3)
        p = LinearParams(np.eye(3), np.zeros(3))
        assert np.array_equal(linear_forward(x, p), x)

    def test_zero_input_broadcasts_bias(self):
        p = LinearParams(np.ones((3, 4)), np.array([1.0, 2.0, 3.0]))
        y = linear_forward(np.zeros((2, 4)), p)
        assert np.array_equal(y, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])

    def test_gradcheck_seed7(self):
        rng = np.random.default_rng(7)
        x = rng.uniform(-1, 1, (4, 5))
        w = rng.uniform(-1, 1, (3, 5))
        b = rng.uniform(-1, 1, 3)
        proj = rng.uniform(-1, 1, (4, 3))

        def loss(params):
            return float(
                (linear_forward(params["x"], LinearParams(params["W"], params["b"]))
                 * proj).sum()
            )

        bundle = linear_backward(x, LinearParams(w, b), proj)
        report = finite_diff_gradcheck(
            loss,
            {"W": w, "b": b, "x": x},
            {"W": bundle.params["W"], "b": bundle.params["b"], "x": bundle.inputs["x"]},
            h=1e-5,
        )
        assert report.max_rel_err <= 1e-6

    def test_dimension_error(self):
        p = LinearParams(np.zeros((3, 5)), np.zeros(3))
        with pytest.raises(ShapeError, match=r"\(2, 4\)"):
            linear_forward(np.zeros((2, 4)), p)


class TestSoftmaxCrossEntropy:
    def test_uniform_logits_give_log_k(self):
        loss, _ = softmax_cross_entropy(np.zeros((1, 4)), np.array([2]))
        assert loss == pytest.approx(np.log(4.0), abs=1e-12)

    def test_confident_correct_logit(self):
        loss, _ = softmax_cross_entropy(
            np.array([[10.0, 0.0, 0.0, 0.0]]), np.array([0])
        )
        assert loss == pytest.approx(np.log(1.0 + 3.0 * np.exp(-10.0)), rel=1e-12)
        assert loss == pytest.approx(1.362e-4, rel=1e-3)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(5)
        logits = rng.uniform(-1, 1, (3, 4))
        labels = np.array([0, 3, 1])

        def loss(params):
            value, _ = softmax_cross_entropy(params["logits"], labels)
            return value

        _, dlogits = softmax_cross_entropy(logits, labels)
        report = finite_diff_gradcheck(loss, {"logits": logits}, {"logits": dlogits},
                                       h=1e-5)
        assert report.max_rel_err <= 1e-6

    def test_loss_nonnegative_and_log_k_iff_constant_rows(self, rng):
        for _ in range(50):
            logits = rng.uniform(-3, 3, (4, 5))
            labels = rng.integers(0, 5, 4)
            loss, _ = softmax_cross_entropy(logits, labels)
            assert loss >= 0.0
        constant = np.full((4, 5), 1.7)
        loss, _ = softmax_cross_entropy(constant, np.array([0, 1, 2, 3]))
        assert loss == pytest.approx(np.log(5.0), abs=1e-12)

    def test_out_of_range_label(self):
        with pytest.raises(ValueError, match="label 4"):
            softmax_cross_entropy(np.zeros((1, 4)), np.array([4]))

    def test_stability_with_huge_logits(self):
        loss, dlogits = softmax_cross_entropy(
            np.array([[1000.0, 0.0], [-1000.0, 0.0]]), np.array([0, 0])
        )
        assert np.isfinite(loss) and np.isfinite(dlogits).all()


class TestPurity:
    def test_ops_are_bit_deterministic(self, rng):
        x = rng.uniform(-1, 1, (2, 3, 16))
        p = ConvParams(rng.uniform(-1, 1, (4, 3, 3)), rng.uniform(-1, 1, 4), padding=1)
        first = conv1d_forward(x, p)
        again = conv1d_forward(x, p)
        assert np.array_equal(first, again)
        y1, i1 = maxpool1d(first, 2)
        y2, i2 = maxpool1d(first, 2)
        assert np.array_equal(y1, y2) and np.array_equal(i1, i2)

    def test_ops_do_not_mutate_inputs(self, rng):
        x = rng.uniform(-1, 1, (2, 3, 8))
        x_copy = x.copy()
        p = ConvParams(rng.uniform(-1, 1, (4, 3, 3)), rng.uniform(-1, 1, 4), padding=1)
        conv1d_forward(x, p)
        conv1d_backward(x, p, np.ones((2, 4, 8)))
        relu(x)
        maxpool1d(x, 2)
        assert np.array_equal(x, x_copy)
