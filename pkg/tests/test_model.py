"""Model assembly: shapes, parameter counts, persistence, ablation."""

import numpy as np
import pytest

from fnwl.errors import FormatError, ShapeError
from fnwl.model import (
    ModelConfig,
    build_model,
    expected_tensor_shapes,
    forward,
    forward_train,
    load_weights,
    predict_labels,
    save_weights,
    sidecar_path,
)

# Expected per-stage output shapes for L=150 (lengths 150 -> 75 -> 37)
def table_shapes(bs: int) -> list[tuple[str, tuple]]:
    return [
        ("conv1", (bs, 16, 150)),
        ("relu1", (bs, 16, 150)),
        ("pool1", (bs, 16, 75)),
        ("conv2", (bs, 32, 75)),
        ("relu2", (bs, 32, 75)),
        ("pool2", (bs, 32, 37)),
        ("flatten", (bs, 1184)),
        ("lstm1", (bs, 64)),
        ("lstm2", (bs, 64)),
        ("fc1", (bs, 128)),
        ("relu_fc", (bs, 128)),
        ("fc2", (bs, 4)),
    ]


def layer_param_formula(cfg: ModelConfig) -> int:
    """Independent closed-form parameter count (sum of per-layer formulas)."""
    conv1 = cfg.conv1_out * cfg.input_channels * cfg.kernel + cfg.conv1_out
    conv2 = cfg.conv2_out * cfg.conv1_out * cfg.kernel + cfg.conv2_out
    h = cfg.lstm_hidden
    def lstm(din):
        peep = 3 * h if cfg.peephole else 0
        return 4 * h * din + 4 * h * h + peep + 4 * h
    fc1 = cfg.fc_hidden * cfg.fc1_input_dim + cfg.fc_hidden
    fc2 = cfg.classes * cfg.fc_hidden + cfg.classes
    total = conv1 + conv2 + fc1 + fc2
    if cfg.variant == "cnn_lstm":
        total += lstm(cfg.lstm1_input_dim) + lstm(h)
    return total


class TestBuild:
    def test_default_lstm_input_dimension(self):
        cfg = ModelConfig()
        assert cfg.lstm1_input_dim == 32 * (150 // 4) == 1184

    def test_parameter_count_matches_published_sum(self):
        weights = build_model(ModelConfig(), seed=0)
        # conv1 + conv2 + lstm1 + lstm2 + fc1 + fc2, peepholes included
        assert weights.param_count() == 400 + 1568 + 319936 + 33216 + 8320 + 516
        assert weights.param_count() == 363956

    def test_parameter_count_matches_formula_oracle(self):
        for cfg in (
            ModelConfig(),
            ModelConfig(variant="cnn_only"),
            ModelConfig(peephole=False),
            ModelConfig(lstm_input_mode="sequence_T_by_32"),
            ModelConfig(input_length=64, classes=3),
        ):
            assert build_model(cfg, 0).param_count() == layer_param_formula(cfg)

    def test_same_seed_is_bit_identical(self):
        a = build_model(ModelConfig(), seed=9)
        b = build_model(ModelConfig(), seed=9)
        for (name_a, t_a), (name_b, t_b) in zip(a.named_tensors(), b.named_tensors()):
            assert name_a == name_b
            assert np.array_equal(t_a, t_b)

    def test_different_seed_differs(self):
        a = build_model(ModelConfig(), seed=1)
        b = build_model(ModelConfig(), seed=2)
        assert not np.array_equal(a.conv1.weights, b.conv1.weights)

    def test_forget_bias_starts_at_one(self):
        w = build_model(ModelConfig(), seed=0)
        assert np.array_equal(w.lstm1.b_f, np.ones(64))
        assert not w.lstm1.b_i.any()

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError):
            ModelConfig(input_length=3).validate()
        with pytest.raises(ValueError):
            ModelConfig(classes=1).validate()
        with pytest.raises(ValueError):
            ModelConfig(kernel=4).validate()
        with pytest.raises(ValueError):
            ModelConfig(lstm_input_mode="nope").validate()


class TestForward:
    @pytest.mark.parametrize("bs", [1, 2, 7, 64])
    def test_shape_trace_matches_table(self, bs, rng):
        cfg = ModelConfig()
        weights = build_model(cfg, seed=0)
        x = rng.uniform(-1, 1, (bs, 8, 150))
        logits, cache = forward_train(weights, cfg, x)
        assert logits.shape == (bs, 4)
        assert cache.shape_trace == table_shapes(bs)

    @pytest.mark.parametrize("bs", [1, 7])
    def test_cnn_only_trace_drops_lstm_rows(self, bs, rng):
        cfg = ModelConfig(variant="cnn_only")
        weights = build_model(cfg, seed=0)
        _, cache = forward_train(weights, cfg, rng.uniform(-1, 1, (bs, 8, 150)))
        expected = [row for row in table_shapes(bs) if not row[0].startswith("lstm")]
        assert cache.shape_trace == expected

    def test_cnn_only_fc1_shape(self):
        w = build_model(ModelConfig(variant="cnn_only"), seed=0)
        assert w.fc1.W.shape == (128, 1184)

    def test_sequence_mode_shapes(self, rng):
        cfg = ModelConfig(lstm_input_mode="sequence_T_by_32")
        weights = build_model(cfg, seed=0)
        logits, cache = forward_train(weights, cfg, rng.uniform(-1, 1, (3, 8, 150)))
        assert logits.shape == (3, 4)
        assert cache.lstm1_seq.shape == (3, 37, 32)

    def test_zero_weights_give_zero_logits(self):
        cfg = ModelConfig()
        weights = build_model(cfg, seed=0)
        for _, t in weights.named_tensors():
            t[...] = 0.0
        logits = forward(weights, cfg, np.random.default_rng(0).uniform(-1, 1, (2, 8, 150)))
        assert not logits.any()

    def test_deterministic_and_pure(self, rng):
        cfg = ModelConfig()
        weights = build_model(cfg, seed=3)
        x = rng.uniform(-1, 1, (4, 8, 150))
        assert np.array_equal(forward(weights, cfg, x), forward(weights, cfg, x))

    def test_batch_permutation_equivariance(self, rng):
        cfg = ModelConfig()
        weights = build_model(cfg, seed=3)
        x = rng.uniform(-1, 1, (6, 8, 150))
        perm = np.array([4, 0, 5, 2, 1, 3])
        assert np.allclose(forward(weights, cfg, x)[perm],
                           forward(weights, cfg, x[perm]), atol=1e-12)

    def test_conv_stage_shared_between_variants(self, rng):
        full_cfg = ModelConfig()
        ablation_cfg = ModelConfig(variant="cnn_only")
        full = build_model(full_cfg, seed=5)
        ablation = build_model(ablation_cfg, seed=5)
        ablation.conv1 = full.conv1
        ablation.conv2 = full.conv2
        x = rng.uniform(-1, 1, (2, 8, 150))
        _, cache_full = forward_train(full, full_cfg, x)
        _, cache_abl = forward_train(ablation, ablation_cfg, x)
        assert np.array_equal(cache_full.flat, cache_abl.flat)

    def test_input_shape_error(self):
        cfg = ModelConfig()
        weights = build_model(cfg, seed=0)
        with pytest.raises(ShapeError, match=r"\(2, 8, 149\)"):
            forward(weights, cfg, np.zeros((2, 8, 149)))


class TestPredict:
    def test_argmax(self):
        cfg = ModelConfig(input_length=8)
        weights = build_model(cfg, seed=0)
        # wire fc2 so logits equal a fixed vector regardless of input
        for _, t in weights.named_tensors():
            t[...] = 0.0
        weights.fc2.b[...] = np.array([0.1, 0.9, 0.2, 0.2])
        x = np.random.default_rng(0).uniform(-1, 1, (3, 8, 8))
        assert np.array_equal(predict_labels(weights, cfg, x), [1, 1, 1])

    def test_tie_goes_to_lowest_index(self):
        cfg = ModelConfig(input_length=8)
        weights = build_model(cfg, seed=0)
        for _, t in weights.named_tensors():
            t[...] = 0.0
        x = np.zeros((2, 8, 8))
        assert np.array_equal(predict_labels(weights, cfg, x), [0, 0])

    def test_agrees_with_bruteforce_argmax(self, rng):
        logits = rng.uniform(-1, 1, (1000, 4))
        fast = logits.argmax(axis=1)
        slow = np.array([int(max(range(4), key=lambda c: (row[c], -c))) for row in logits])
        assert np.array_equal(fast, slow)


class TestPersistence:
    def test_round_trip_bytes_identical(self, tmp_path):
        cfg = ModelConfig(input_length=16)
        weights = build_model(cfg, seed=4)
        p1 = tmp_path / "a.fnwt"
        p2 = tmp_path / "b.fnwt"
        save_weights(weights, cfg, p1)
        loaded, loaded_cfg, _ = load_weights(p1)
        save_weights(loaded, loaded_cfg, p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_quantisation_bound(self, tmp_path):
        cfg = ModelConfig(input_length=16)
        weights = build_model(cfg, seed=4)
        path = tmp_path / "w.fnwt"
        save_weights(weights, cfg, path)
        loaded, _, _ = load_weights(path)
        for (name, orig), (_, back) in zip(
            weights.named_tensors(), loaded.named_tensors()
        ):
            err = np.abs(orig - back)
            bound = np.maximum(np.abs(orig), 1e-30) * 2.0**-20
            assert (err <= bound).all(), name

    def test_corrupted_magic_rejected(self, tmp_path):
        cfg = ModelConfig(input_length=16)
        save_weights(build_model(cfg, seed=0), cfg, tmp_path / "w.fnwt")
        blob = bytearray((tmp_path / "w.fnwt").read_bytes())
        blob[0] ^= 0xFF
        (tmp_path / "w.fnwt").write_bytes(bytes(blob))
        with pytest.raises(FormatError, match="CRC|magic"):
            load_weights(tmp_path / "w.fnwt")

    def test_truncation_rejected_with_offset(self, tmp_path):
        cfg = ModelConfig(input_length=16)
        save_weights(build_model(cfg, seed=0), cfg, tmp_path / "w.fnwt")
        blob = (tmp_path / "w.fnwt").read_bytes()
        (tmp_path / "w.fnwt").write_bytes(blob[: len(blob) // 2])
        with pytest.raises(FormatError):
            load_weights(tmp_path / "w.fnwt")

    def test_shape_mismatch_against_sidecar(self, tmp_path):
        cfg = ModelConfig(input_length=16)
        save_weights(build_model(cfg, seed=0), cfg, tmp_path / "w.fnwt")
        # rewrite the sidecar claiming a different geometry
        other = ModelConfig(input_length=32)
        import json

        meta = json.loads(sidecar_path(tmp_path / "w.fnwt").read_text())
        meta["config"]["input_length"] = 32
        sidecar_path(tmp_path / "w.fnwt").write_text(json.dumps(meta))
        with pytest.raises(FormatError, match="shape"):
            load_weights(tmp_path / "w.fnwt")
        assert other.lstm1_input_dim != cfg.lstm1_input_dim

    def test_missing_sidecar(self, tmp_path):
        cfg = ModelConfig(input_length=16)
        save_weights(build_model(cfg, seed=0), cfg, tmp_path / "w.fnwt")
        sidecar_path(tmp_path / "w.fnwt").unlink()
        with pytest.raises(FormatError, match="sidecar"):
            load_weights(tmp_path / "w.fnwt")

    def test_expected_shapes_cover_all_tensors(self):
        for cfg in (ModelConfig(), ModelConfig(variant="cnn_only"),
                    ModelConfig(peephole=False)):
            weights = build_model(cfg, seed=0)
            expected = expected_tensor_shapes(cfg)
            actual = {name: t.shape for name, t in weights.named_tensors()}
            assert expected == actual
