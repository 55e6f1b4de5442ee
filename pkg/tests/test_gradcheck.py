"""The finite-difference harness itself: self-test, detector sanity."""

import numpy as np
import pytest

from fnwl.errors import NumericError
from fnwl.gradsuite import check_full_model, run_suite
from fnwl.nn.gradcheck import (
    directional_gradcheck,
    finite_diff_gradcheck,
    relative_error,
)
from fnwl.nn.ops import LinearParams, linear_backward, linear_forward


def _linear_setup(seed=0):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, (4, 5))
    w = rng.uniform(-1, 1, (3, 5))
    b = rng.uniform(-1, 1, 3)
    proj = rng.uniform(-1, 1, (4, 3))

    def loss(params):
        return float(
            (linear_forward(x, LinearParams(params["W"], params["b"])) * proj).sum()
        )

    bundle = linear_backward(x, LinearParams(w, b), proj)
    return loss, {"W": w, "b": b}, {"W": bundle.params["W"], "b": bundle.params["b"]}


class TestHarness:
    def test_linear_layer_passes(self):
        loss, params, analytic = _linear_setup()
        report = finite_diff_gradcheck(loss, params, analytic, h=1e-5)
        assert report.passed(1e-6)
        assert {c.name for c in report.checks} == {"W", "b"}

    def test_corrupted_bias_gradient_detected(self):
        loss, params, analytic = _linear_setup()
        analytic = dict(analytic)
        analytic["b"] = analytic["b"] + 0.1
        report = finite_diff_gradcheck(loss, params, analytic, h=1e-5)
        assert not report.passed(1e-6)
        assert [c.name for c in report.failures(1e-6)] == ["b"]

    def test_non_finite_forward_is_reported(self):
        def loss(params):
            return float("nan")

        with pytest.raises(NumericError, match="non-finite"):
            finite_diff_gradcheck(
                loss, {"w": np.ones(2)}, {"w": np.zeros(2)}, h=1e-5
            )

    def test_relative_error_definition(self):
        # |ga - gn| / max(1e-8, |ga| + |gn|)
        assert relative_error(np.array(1.0), np.array(1.0)) == 0.0
        assert relative_error(np.array(2.0), np.array(1.0)) == pytest.approx(1.0 / 3.0)
        assert relative_error(np.array(0.0), np.array(1e-9)) == pytest.approx(0.1)

    def test_invalid_step(self):
        loss, params, analytic = _linear_setup()
        with pytest.raises(ValueError, match="step"):
            finite_diff_gradcheck(loss, params, analytic, h=0.0)

    def test_entry_sampling_limits_work(self):
        loss, params, analytic = _linear_setup()
        report = finite_diff_gradcheck(
            loss, params, analytic, h=1e-5, max_entries_per_param=4
        )
        by_name = {c.name: c for c in report.checks}
        assert by_name["W"].n_checked == 4
        assert by_name["b"].n_checked == 3  # small tensors stay exhaustive

    def test_directional_mode_detects_corruption(self):
        loss, params, analytic = _linear_setup()
        good = directional_gradcheck(loss, params, analytic, h=1e-5)
        assert good.passed(1e-6)
        analytic = dict(analytic)
        analytic["W"] = analytic["W"] + 0.05
        bad = directional_gradcheck(loss, params, analytic, h=1e-5)
        assert not bad.passed(1e-6)


class TestStandardSuite:
    @pytest.mark.parametrize("seed", [1, 42, 1337])
    def test_all_layers_and_models_pass(self, seed):
        entries = run_suite(seed)
        failures = [e.name for e in entries if not e.passed]
        assert failures == []

    def test_full_model_at_tiny_config(self):
        report = check_full_model(42, "cnn_lstm", directional=True)
        assert report.passed(1e-4)

    def test_cnn_only_model_entrywise(self):
        report = check_full_model(42, "cnn_only")
        assert report.passed(1e-6)
