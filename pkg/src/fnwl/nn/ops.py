"""Forward and backward rules for the feed-forward layers.

All tensors are float64 numpy arrays, row-major. Every function here is
pure: inputs are never mutated and identical inputs produce bit-identical
outputs. Each backward rule returns gradients that match central finite
differences of its forward map (see ``fnwl.nn.gradcheck``).

Shape conventions: 1-D feature maps are ``(batch, channels, length)``,
dense activations are ``(batch, features)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def as_tensor(x) -> np.ndarray:
    """Coerce to a C-contiguous float64 array."""
    return np.ascontiguousarray(x, dtype=np.float64)


@dataclass
class ConvParams:
    """1-D convolution parameters.

    ``weights`` has shape ``(out_channels, in_channels, k)``; ``bias`` has
    shape ``(out_channels,)``. ``padding`` zeros are prepended and appended
    along the length axis; ``padding = (k - 1) // 2`` with odd ``k``
    preserves the input length.
    """

    weights: np.ndarray
    bias: np.ndarray
    padding: int = 0

    def __post_init__(self):
        self.weights = as_tensor(self.weights)
        self.bias = as_tensor(self.bias)
        if self.weights.ndim != 3:
            raise ShapeError(
                f"conv weights must be rank 3 (out, in, k), got shape {self.weights.shape}"
            )
        if self.bias.shape != (self.weights.shape[0],):
            raise ShapeError(
                f"conv bias shape {self.bias.shape} does not match "
                f"expected ({self.weights.shape[0]},)"
            )
        if self.k < 1:
            raise ValueError(f"kernel width must be >= 1, got {self.k}")
        if self.padding < 0:
            raise ValueError(f"padding must be >= 0, got {self.padding}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def k(self) -> int:
        return self.weights.shape[2]


@dataclass
class LinearParams:
    """Dense layer parameters: ``W`` is ``(out, in)``, ``b`` is ``(out,)``."""

    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        self.W = as_tensor(self.W)
        self.b = as_tensor(self.b)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise ShapeError(
                f"linear params inconsistent: W {self.W.shape}, b {self.b.shape}"
            )


@dataclass
class GradBundle:
    """Gradients of one layer: per-parameter entries plus input gradients.

    ``params`` maps parameter names to gradient arrays of identical shape;
    ``inputs`` maps input names (``x``, ``h_prev``, ...) to their gradients.
    """

    params: dict[str, np.ndarray] = field(default_factory=dict)
    inputs: dict[str, np.ndarray] = field(default_factory=dict)


def _conv_windows(x: np.ndarray, p: ConvParams) -> tuple[np.ndarray, int]:
    """Zero-pad and expose the sliding kernel windows as a matmul operand."""
    batch, _, length = x.shape
    if p.padding:
        xp = np.zeros((batch, p.in_channels, length + 2 * p.padding))
        xp[:, :, p.padding : p.padding + length] = x
    else:
        xp = x
    out_len = xp.shape[2] - p.k + 1
    win = sliding_window_view(xp, p.k, axis=2)  # (B, Cin, L', k), zero-copy
    cols = np.ascontiguousarray(win.transpose(0, 2, 1, 3)).reshape(
        batch * out_len, p.in_channels * p.k
    )
    return cols, out_len


def _check_conv_input(x: np.ndarray, p: ConvParams) -> np.ndarray:
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"conv input must be (batch, channels, length), got {x.shape}")
    if x.shape[1] != p.in_channels:
        raise ShapeError(
            f"conv input shape {x.shape} has {x.shape[1]} channels but the "
            f"kernel of shape {p.weights.shape} expects {p.in_channels}"
        )
    if x.shape[2] + 2 * p.padding < p.k:
        raise ShapeError(
            f"padded length {x.shape[2] + 2 * p.padding} is shorter than "
            f"kernel width {p.k}"
        )
    return x


def conv1d_forward(x: np.ndarray, p: ConvParams) -> np.ndarray:
    """Cross-correlate ``x`` with the kernels and add the bias.

    ``y[b, o, i] = sum_c sum_j x_padded[b, c, i + j] * W[o, c, j] + bias[o]``
    with output length ``L + 2 * padding - k + 1``.
    """
    x = _check_conv_input(x, p)
    batch = x.shape[0]
    cols, out_len = _conv_windows(x, p)
    w2 = p.weights.reshape(p.out_channels, -1)
    y = cols @ w2.T + p.bias
    return np.ascontiguousarray(
        y.reshape(batch, out_len, p.out_channels).transpose(0, 2, 1)
    )


def conv1d_backward(x: np.ndarray, p: ConvParams, dy: np.ndarray) -> GradBundle:
    """Gradients of ``conv1d_forward`` w.r.t. weights, bias and input."""
    x = _check_conv_input(x, p)
    dy = as_tensor(dy)
    batch, _, length = x.shape
    out_len = length + 2 * p.padding - p.k + 1
    if dy.shape != (batch, p.out_channels, out_len):
        raise ShapeError(
            f"upstream gradient shape {dy.shape} does not match conv output "
            f"shape {(batch, p.out_channels, out_len)}"
        )
    cols, _ = _conv_windows(x, p)
    dy_mat = np.ascontiguousarray(dy.transpose(0, 2, 1)).reshape(
        batch * out_len, p.out_channels
    )
    dw = (dy_mat.T @ cols).reshape(p.weights.shape)
    db = dy.sum(axis=(0, 2))
    # input gradient: scatter each kernel tap back onto the padded axis
    dcols = (dy_mat @ p.weights.reshape(p.out_channels, -1)).reshape(
        batch, out_len, p.in_channels, p.k
    )
    dxp = np.zeros((batch, p.in_channels, length + 2 * p.padding))
    for j in range(p.k):
        dxp[:, :, j : j + out_len] += dcols[:, :, :, j].transpose(0, 2, 1)
    dx = np.ascontiguousarray(dxp[:, :, p.padding : p.padding + length])
    return GradBundle(params={"W": dw, "b": db}, inputs={"x": dx})


def relu(x: np.ndarray) -> np.ndarray:
    """Elementwise ``max(0, x)``."""
    return np.maximum(as_tensor(x), 0.0)


def relu_backward(x: np.ndarray, dy: np.ndarray) -> np.ndarray:
    """Pass ``dy`` where ``x > 0``, zero elsewhere (subgradient 0 at x = 0)."""
    x = as_tensor(x)
    dy = as_tensor(dy)
    if x.shape != dy.shape:
        raise ShapeError(f"relu gradient shape {dy.shape} does not match input {x.shape}")
    return np.where(x > 0.0, dy, 0.0)


def maxpool1d(x: np.ndarray, pool: int) -> tuple[np.ndarray, np.ndarray]:
    """Non-overlapping max pooling along the length axis.

    Output length is ``floor(L / pool)``; a trailing partial window is
    dropped. Returns the pooled tensor and the in-window argmax indices
    (ties resolve to the lowest index) used by the backward pass.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError(f"pool input must be (batch, channels, length), got {x.shape}")
    if pool < 1:
        raise ValueError(f"pool size must be >= 1, got {pool}")
    length = x.shape[2]
    out_len = length // pool
    if out_len == 0:
        raise ShapeError(
            f"pool size {pool} exceeds input length {length}: output would be empty"
        )
    xr = x[:, :, : out_len * pool].reshape(x.shape[0], x.shape[1], out_len, pool)
    idx = xr.argmax(axis=3)
    y = np.take_along_axis(xr, idx[..., None], axis=3)[..., 0]
    return np.ascontiguousarray(y), idx


def maxpool1d_backward(
    idx: np.ndarray, dy: np.ndarray, input_length: int, pool: int
) -> np.ndarray:
    """Route ``dy`` back to the recorded argmax positions only."""
    dy = as_tensor(dy)
    batch, channels, out_len = dy.shape
    if idx.shape != dy.shape:
        raise ShapeError(f"argmax shape {idx.shape} does not match gradient {dy.shape}")
    dx = np.zeros((batch, channels, input_length))
    dxr = dx[:, :, : out_len * pool].reshape(batch, channels, out_len, pool)
    np.put_along_axis(dxr, idx[..., None], dy[..., None], axis=3)
    return dx


def linear_forward(x: np.ndarray, p: LinearParams) -> np.ndarray:
    """``y = x @ W.T + b`` for ``x`` of shape ``(batch, in)``."""
    x = as_tensor(x)
    if x.ndim != 2 or x.shape[1] != p.W.shape[1]:
        raise ShapeError(
            f"linear input shape {x.shape} does not match weight shape {p.W.shape}"
        )
    return x @ p.W.T + p.b


def linear_backward(x: np.ndarray, p: LinearParams, dy: np.ndarray) -> GradBundle:
    """Gradients of ``linear_forward``."""
    x = as_tensor(x)
    dy = as_tensor(dy)
    if dy.shape != (x.shape[0], p.W.shape[0]):
        raise ShapeError(
            f"upstream gradient shape {dy.shape} does not match linear output "
            f"shape {(x.shape[0], p.W.shape[0])}"
        )
    return GradBundle(
        params={"W": dy.T @ x, "b": dy.sum(axis=0)},
        inputs={"x": dy @ p.W},
    )


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch, with the gradient w.r.t. logits.

    Computed as ``logsumexp(logits) - logits[label]`` per row using
    max-subtraction for stability. The returned gradient is
    ``(softmax - onehot) / batch``.
    """
    logits = as_tensor(logits)
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (batch, classes), got {logits.shape}")
    batch, n_classes = logits.shape
    labels = np.asarray(labels)
    if labels.shape != (batch,):
        raise ShapeError(f"labels shape {labels.shape} does not match batch {batch}")
    labels = labels.astype(np.int64)
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= n_classes:
        bad = labels[(labels < 0) | (labels >= n_classes)][0]
        raise ValueError(f"label {bad} outside the valid range [0, {n_classes})")
    z = logits - logits.max(axis=1, keepdims=True)
    ez = np.exp(z)
    sez = ez.sum(axis=1)
    rows = np.arange(batch)
    loss = float(np.mean(np.log(sez) - z[rows, labels]))
    dlogits = ez / sez[:, None]
    dlogits[rows, labels] -= 1.0
    dlogits /= batch
    return loss, dlogits
