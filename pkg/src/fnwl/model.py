"""The CNN-LSTM stack, its CNN-only ablation, and weight persistence.

Layer order (lengths shown for the default 150-sample window):

    conv1 8->16 (same pad) -> relu -> pool/2     (BS, 16, 75)
    conv2 16->32 (same pad) -> relu -> pool/2    (BS, 32, 37)
    flatten                                       (BS, 1184)
    lstm1 -> (BS, 64) -> lstm2 -> (BS, 64)
    fc1 -> relu -> (BS, 128) -> fc2 -> (BS, 4)

Two readings of the flatten-to-LSTM handoff are supported:
``flat_single_step`` feeds the whole flattened vector as one time step;
``sequence_T_by_32`` feeds the pooled map as floor(L/4) steps of conv2_out
features. The CNN-only variant deletes both LSTM layers and wires the
flatten output straight into fc1.

Weight files use magic ``FNWT``: little-endian, a u32 tensor count, then
per tensor a u16 name length, UTF-8 name, u8 rank, u32 dims and f32 data
(row-major), closed by a CRC32 of all preceding bytes. A JSON sidecar at
``<path>.json`` stores the model configuration (plus optional
standardisation stats); loading validates magic, version, CRC and every
shape against that configuration.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import FormatError, ShapeError
from .nn.init import init_conv, init_linear, init_lstm
from .nn.lstm import (
    LstmParams,
    lstm_layer_backward,
    lstm_layer_forward,
)
from .nn.ops import (
    ConvParams,
    LinearParams,
    as_tensor,
    conv1d_backward,
    conv1d_forward,
    linear_backward,
    linear_forward,
    maxpool1d,
    maxpool1d_backward,
    relu,
    relu_backward,
)

WEIGHTS_MAGIC = b"FNWT"
WEIGHTS_VERSION = 1

LSTM_MODES = ("flat_single_step", "sequence_T_by_32")
VARIANTS = ("cnn_lstm", "cnn_only")


@dataclass
class ModelConfig:
    input_channels: int = 8
    input_length: int = 150
    conv1_out: int = 16
    conv2_out: int = 32
    kernel: int = 3
    pool: int = 2
    lstm_hidden: int = 64
    lstm_layers: int = 2
    fc_hidden: int = 128
    classes: int = 4
    lstm_input_mode: str = "flat_single_step"
    variant: str = "cnn_lstm"
    peephole: bool = True

    def validate(self) -> "ModelConfig":
        if self.input_length < 2 * self.pool * self.pool:
            raise ValueError(
                f"input length {self.input_length} leaves an empty map after "
                f"two pool-{self.pool} stages"
            )
        if self.classes < 2:
            raise ValueError(f"need at least 2 classes, got {self.classes}")
        if self.kernel < 1 or self.kernel % 2 == 0:
            raise ValueError(
                f"kernel must be odd for length-preserving padding, got {self.kernel}"
            )
        if self.lstm_layers != 2:
            raise ValueError("only the two-layer LSTM stack is supported")
        if self.lstm_input_mode not in LSTM_MODES:
            raise ValueError(
                f"lstm_input_mode must be one of {LSTM_MODES}, got "
                f"{self.lstm_input_mode!r}"
            )
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if min(self.input_channels, self.conv1_out, self.conv2_out,
               self.lstm_hidden, self.fc_hidden, self.pool) < 1:
            raise ValueError("all width parameters must be positive")
        return self

    @property
    def padding(self) -> int:
        return (self.kernel - 1) // 2

    @property
    def pooled_length(self) -> int:
        return self.input_length // self.pool // self.pool

    @property
    def flatten_dim(self) -> int:
        return self.conv2_out * self.pooled_length

    @property
    def lstm1_input_dim(self) -> int:
        if self.lstm_input_mode == "flat_single_step":
            return self.flatten_dim
        return self.conv2_out

    @property
    def fc1_input_dim(self) -> int:
        return self.flatten_dim if self.variant == "cnn_only" else self.lstm_hidden


def expected_tensor_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Canonical parameter names and shapes implied by a configuration."""
    cfg.validate()
    shapes: dict[str, tuple[int, ...]] = {
        "conv1.W": (cfg.conv1_out, cfg.input_channels, cfg.kernel),
        "conv1.b": (cfg.conv1_out,),
        "conv2.W": (cfg.conv2_out, cfg.conv1_out, cfg.kernel),
        "conv2.b": (cfg.conv2_out,),
    }
    if cfg.variant == "cnn_lstm":
        for layer, din in (("lstm1", cfg.lstm1_input_dim), ("lstm2", cfg.lstm_hidden)):
            h = cfg.lstm_hidden
            for g in ("i", "f", "o", "c"):
                shapes[f"{layer}.U_{g}"] = (h, din)
            for g in ("i", "f", "o", "c"):
                shapes[f"{layer}.V_{g}"] = (h, h)
            if cfg.peephole:
                for g in ("i", "f", "o"):
                    shapes[f"{layer}.Z_{g}"] = (h,)
            for g in ("i", "f", "o", "c"):
                shapes[f"{layer}.b_{g}"] = (h,)
    shapes["fc1.W"] = (cfg.fc_hidden, cfg.fc1_input_dim)
    shapes["fc1.b"] = (cfg.fc_hidden,)
    shapes["fc2.W"] = (cfg.classes, cfg.fc_hidden)
    shapes["fc2.b"] = (cfg.classes,)
    return shapes


@dataclass
class ModelWeights:
    conv1: ConvParams
    conv2: ConvParams
    fc1: LinearParams
    fc2: LinearParams
    lstm1: LstmParams | None = None
    lstm2: LstmParams | None = None

    def named_tensors(self) -> list[tuple[str, np.ndarray]]:
        """Parameters in the canonical (persistence and update) order."""
        out = [
            ("conv1.W", self.conv1.weights),
            ("conv1.b", self.conv1.bias),
            ("conv2.W", self.conv2.weights),
            ("conv2.b", self.conv2.bias),
        ]
        for name, lstm in (("lstm1", self.lstm1), ("lstm2", self.lstm2)):
            if lstm is not None:
                out.extend(
                    (f"{name}.{t}", getattr(lstm, t)) for t in lstm.tensor_names()
                )
        out.extend(
            [
                ("fc1.W", self.fc1.W),
                ("fc1.b", self.fc1.b),
                ("fc2.W", self.fc2.W),
                ("fc2.b", self.fc2.b),
            ]
        )
        return out

    def param_count(self) -> int:
        return sum(t.size for _, t in self.named_tensors())


def build_model(cfg: ModelConfig, seed: int) -> ModelWeights:
    """Initialise weights from a seed, per the documented scheme."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    conv1 = init_conv(rng, cfg.conv1_out, cfg.input_channels, cfg.kernel, cfg.padding)
    conv2 = init_conv(rng, cfg.conv2_out, cfg.conv1_out, cfg.kernel, cfg.padding)
    lstm1 = lstm2 = None
    if cfg.variant == "cnn_lstm":
        lstm1 = init_lstm(rng, cfg.lstm_hidden, cfg.lstm1_input_dim, cfg.peephole)
        lstm2 = init_lstm(rng, cfg.lstm_hidden, cfg.lstm_hidden, cfg.peephole)
    fc1 = init_linear(rng, cfg.fc_hidden, cfg.fc1_input_dim)
    fc2 = init_linear(rng, cfg.classes, cfg.fc_hidden)
    return ModelWeights(conv1=conv1, conv2=conv2, fc1=fc1, fc2=fc2,
                        lstm1=lstm1, lstm2=lstm2)


@dataclass
class ModelCache:
    """Intermediates saved by a training-mode forward pass."""

    x: np.ndarray
    conv1_out: np.ndarray
    pool1_idx: np.ndarray
    pool1_out: np.ndarray
    conv2_out: np.ndarray
    pool2_idx: np.ndarray
    pool2_out: np.ndarray
    flat: np.ndarray
    fc1_in: np.ndarray
    fc1_out: np.ndarray
    lstm1_cache: object = None
    lstm2_cache: object = None
    lstm1_seq: np.ndarray | None = None
    lstm2_seq: np.ndarray | None = None
    shape_trace: list[tuple[str, tuple[int, ...]]] = field(default_factory=list)


def _check_input(cfg: ModelConfig, x: np.ndarray) -> np.ndarray:
    x = as_tensor(x)
    if x.ndim != 3 or x.shape[1:] != (cfg.input_channels, cfg.input_length):
        raise ShapeError(
            f"input shape {x.shape} does not match expected "
            f"(batch, {cfg.input_channels}, {cfg.input_length})"
        )
    return x


def forward_train(
    weights: ModelWeights, cfg: ModelConfig, x: np.ndarray
) -> tuple[np.ndarray, ModelCache]:
    """Forward pass that caches every intermediate for ``backward``."""
    x = _check_input(cfg, x)
    trace: list[tuple[str, tuple[int, ...]]] = []

    c1 = conv1d_forward(x, weights.conv1)
    trace.append(("conv1", c1.shape))
    r1 = relu(c1)
    trace.append(("relu1", r1.shape))
    p1, idx1 = maxpool1d(r1, cfg.pool)
    trace.append(("pool1", p1.shape))
    c2 = conv1d_forward(p1, weights.conv2)
    trace.append(("conv2", c2.shape))
    r2 = relu(c2)
    trace.append(("relu2", r2.shape))
    p2, idx2 = maxpool1d(r2, cfg.pool)
    trace.append(("pool2", p2.shape))
    flat = p2.reshape(x.shape[0], -1)
    trace.append(("flatten", flat.shape))

    cache = ModelCache(
        x=x, conv1_out=c1, pool1_idx=idx1, pool1_out=p1, conv2_out=c2,
        pool2_idx=idx2, pool2_out=p2, flat=flat, fc1_in=flat,
        fc1_out=np.empty(0), shape_trace=trace,
    )

    if cfg.variant == "cnn_lstm":
        if cfg.lstm_input_mode == "flat_single_step":
            seq1 = flat[:, None, :]
        else:
            # pooled map as floor(L/4) steps of conv2_out features
            seq1 = np.ascontiguousarray(p2.transpose(0, 2, 1))
        h1, cache.lstm1_cache = lstm_layer_forward(seq1, weights.lstm1)
        cache.lstm1_seq = seq1
        trace.append(("lstm1", h1.shape))
        seq2 = h1[:, None, :]
        h2, cache.lstm2_cache = lstm_layer_forward(seq2, weights.lstm2)
        cache.lstm2_seq = seq2
        trace.append(("lstm2", h2.shape))
        cache.fc1_in = h2

    f1 = linear_forward(cache.fc1_in, weights.fc1)
    trace.append(("fc1", f1.shape))
    cache.fc1_out = f1
    rf = relu(f1)
    trace.append(("relu_fc", rf.shape))
    logits = linear_forward(rf, weights.fc2)
    trace.append(("fc2", logits.shape))
    return logits, cache


def forward(weights: ModelWeights, cfg: ModelConfig, x: np.ndarray) -> np.ndarray:
    """Inference forward pass; pure and safe to fan out over batches."""
    logits, _ = forward_train(weights, cfg, x)
    return logits


def backward(
    weights: ModelWeights, cfg: ModelConfig, cache: ModelCache, dlogits: np.ndarray
) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every named parameter."""
    grads: dict[str, np.ndarray] = {}
    rf = relu(cache.fc1_out)
    g2 = linear_backward(rf, weights.fc2, as_tensor(dlogits))
    grads["fc2.W"] = g2.params["W"]
    grads["fc2.b"] = g2.params["b"]
    df1 = relu_backward(cache.fc1_out, g2.inputs["x"])
    g1 = linear_backward(cache.fc1_in, weights.fc1, df1)
    grads["fc1.W"] = g1.params["W"]
    grads["fc1.b"] = g1.params["b"]
    dfc1_in = g1.inputs["x"]

    if cfg.variant == "cnn_lstm":
        b2 = lstm_layer_backward(cache.lstm2_cache, dfc1_in, weights.lstm2)
        for name, g in b2.params.items():
            grads[f"lstm2.{name}"] = g
        dh1 = b2.inputs["x_seq"][:, 0, :]
        b1 = lstm_layer_backward(cache.lstm1_cache, dh1, weights.lstm1)
        for name, g in b1.params.items():
            grads[f"lstm1.{name}"] = g
        dseq1 = b1.inputs["x_seq"]
        if cfg.lstm_input_mode == "flat_single_step":
            dflat = dseq1[:, 0, :]
        else:
            dflat = np.ascontiguousarray(dseq1.transpose(0, 2, 1)).reshape(
                cache.flat.shape
            )
    else:
        dflat = dfc1_in

    dp2 = dflat.reshape(cache.pool2_out.shape)
    dr2 = maxpool1d_backward(cache.pool2_idx, dp2, cache.conv2_out.shape[2], cfg.pool)
    dc2 = relu_backward(cache.conv2_out, dr2)
    gb2 = conv1d_backward(cache.pool1_out, weights.conv2, dc2)
    grads["conv2.W"] = gb2.params["W"]
    grads["conv2.b"] = gb2.params["b"]
    dp1 = gb2.inputs["x"]
    dr1 = maxpool1d_backward(cache.pool1_idx, dp1, cache.conv1_out.shape[2], cfg.pool)
    dc1 = relu_backward(cache.conv1_out, dr1)
    gb1 = conv1d_backward(cache.x, weights.conv1, dc1)
    grads["conv1.W"] = gb1.params["W"]
    grads["conv1.b"] = gb1.params["b"]
    return grads


def predict_labels(weights: ModelWeights, cfg: ModelConfig, x: np.ndarray) -> np.ndarray:
    """Argmax over logits; ties resolve to the lowest class index."""
    return forward(weights, cfg, x).argmax(axis=1)


def predict_in_batches(
    weights: ModelWeights, cfg: ModelConfig, x: np.ndarray, batch_size: int = 256
) -> np.ndarray:
    """Logits for a large input, computed in memory-bounded slices."""
    parts = [
        forward(weights, cfg, x[i : i + batch_size])
        for i in range(0, x.shape[0], batch_size)
    ]
    return np.concatenate(parts) if parts else np.zeros((0, cfg.classes))


# --- persistence -----------------------------------------------------------

def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def save_weights(
    weights: ModelWeights, cfg: ModelConfig, path, extra_metadata: dict | None = None
) -> None:
    """Write the binary weight file and its JSON config sidecar."""
    blob = bytearray()
    blob += WEIGHTS_MAGIC
    blob += struct.pack("<B", WEIGHTS_VERSION)
    tensors = weights.named_tensors()
    blob += struct.pack("<I", len(tensors))
    for name, arr in tensors:
        encoded = name.encode("utf-8")
        blob += struct.pack("<H", len(encoded))
        blob += encoded
        blob += struct.pack("<B", arr.ndim)
        blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
        blob += np.ascontiguousarray(arr, dtype="<f4").tobytes()
    blob += struct.pack("<I", zlib.crc32(bytes(blob)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(blob))
    meta = {"config": asdict(cfg), "tool_version": __version__}
    if extra_metadata:
        meta.update(extra_metadata)
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


class _Reader:
    def __init__(self, blob: bytes, what: str):
        self.blob = blob
        self.pos = 0
        self.what = what

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise FormatError(
                f"{self.what}: truncated at offset {self.pos} "
                f"(needed {n} more bytes of {len(self.blob)})"
            )
        out = self.blob[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str):
        return struct.unpack("<" + fmt, self.take(struct.calcsize("<" + fmt)))


def load_weights(path) -> tuple[ModelWeights, ModelConfig, dict]:
    """Read a weight file; returns (weights, config, sidecar metadata)."""
    scpath = sidecar_path(path)
    if not scpath.exists():
        raise FormatError(f"missing config sidecar {scpath}")
    try:
        meta = json.loads(scpath.read_text())
        cfg = ModelConfig(**meta["config"]).validate()
    except (json.JSONDecodeError, TypeError, KeyError, ValueError) as exc:
        raise FormatError(f"invalid config sidecar {scpath}: {exc}") from exc

    blob = Path(path).read_bytes()
    if len(blob) < len(WEIGHTS_MAGIC) + 1 + 4 + 4:
        raise FormatError(f"weight file too small ({len(blob)} bytes)")
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    actual_crc = zlib.crc32(blob[:-4]) & 0xFFFFFFFF
    if stored_crc != actual_crc:
        raise FormatError(
            f"CRC mismatch at offset {len(blob) - 4}: stored {stored_crc:#010x}, "
            f"computed {actual_crc:#010x}"
        )
    r = _Reader(blob[:-4], "weight file")
    magic = r.take(4)
    if magic != WEIGHTS_MAGIC:
        raise FormatError(f"bad magic {magic!r} at offset 0, expected {WEIGHTS_MAGIC!r}")
    (version,) = r.unpack("B")
    if version != WEIGHTS_VERSION:
        raise FormatError(f"unsupported version {version} at offset 4")
    (count,) = r.unpack("I")
    expected = expected_tensor_shapes(cfg)
    if count != len(expected):
        raise FormatError(
            f"tensor count {count} does not match the {len(expected)} tensors "
            f"implied by the sidecar config"
        )
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("H")
        name_off = r.pos
        name = r.take(name_len).decode("utf-8")
        (rank,) = r.unpack("B")
        dims = r.unpack(f"{rank}I") if rank else ()
        n_values = int(np.prod(dims, dtype=np.int64)) if rank else 1
        data = np.frombuffer(r.take(4 * n_values), dtype="<f4")
        if name in tensors:
            raise FormatError(f"duplicate tensor {name!r} at offset {name_off}")
        if name not in expected:
            raise FormatError(f"unexpected tensor {name!r} at offset {name_off}")
        if tuple(dims) != expected[name]:
            raise FormatError(
                f"tensor {name!r} at offset {name_off} has shape {tuple(dims)}, "
                f"config implies {expected[name]}"
            )
        tensors[name] = data.astype(np.float64).reshape(dims)
    if r.pos != len(r.blob):
        raise FormatError(f"{len(r.blob) - r.pos} trailing bytes at offset {r.pos}")
    missing = set(expected) - set(tensors)
    if missing:
        raise FormatError(f"missing tensors: {sorted(missing)}")

    conv1 = ConvParams(tensors["conv1.W"], tensors["conv1.b"], cfg.padding)
    conv2 = ConvParams(tensors["conv2.W"], tensors["conv2.b"], cfg.padding)
    lstm1 = lstm2 = None
    if cfg.variant == "cnn_lstm":
        def build_lstm(prefix: str) -> LstmParams:
            kw = {
                t: tensors[f"{prefix}.{t}"]
                for t in ("U_i", "U_f", "U_o", "U_c", "V_i", "V_f", "V_o", "V_c",
                          "b_i", "b_f", "b_o", "b_c")
            }
            if cfg.peephole:
                kw.update({t: tensors[f"{prefix}.{t}"] for t in ("Z_i", "Z_f", "Z_o")})
            return LstmParams(peephole_enabled=cfg.peephole, **kw)

        lstm1 = build_lstm("lstm1")
        lstm2 = build_lstm("lstm2")
    fc1 = LinearParams(tensors["fc1.W"], tensors["fc1.b"])
    fc2 = LinearParams(tensors["fc2.W"], tensors["fc2.b"])
    weights = ModelWeights(conv1=conv1, conv2=conv2, fc1=fc1, fc2=fc2,
                           lstm1=lstm1, lstm2=lstm2)
    return weights, cfg, meta
