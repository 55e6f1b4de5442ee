"""Peephole LSTM cell and layer, forward and backward.

The cell computes, per batch row (``@`` is a matrix product against the
transposed weight, ``*`` elementwise):

    i = sigmoid(x @ U_i.T + h_prev @ V_i.T + Z_i * c_prev + b_i)
    f = sigmoid(x @ U_f.T + h_prev @ V_f.T + Z_f * c_prev + b_f)
    o = sigmoid(x @ U_o.T + h_prev @ V_o.T + Z_o * c_prev + b_o)
    g = tanh(x @ U_c.T + h_prev @ V_c.T + b_c)
    c = f * c_prev + i * g
    h = o * tanh(c)

Note the output gate observes the *previous* cell state, like the other
gates; the peephole terms are per-unit diagonal weights applied via the
Hadamard product, and drop out entirely when ``peephole_enabled`` is off.
Gate activations are always strictly inside (0, 1) and the candidate ``g``
strictly inside (-1, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from .ops import GradBundle, as_tensor

GATES = ("i", "f", "o", "c")


@dataclass
class LstmParams:
    """Weights of one LSTM layer.

    ``U_*`` are ``(hidden, input)`` input maps, ``V_*`` are ``(hidden,
    hidden)`` recurrent maps, ``Z_*`` are ``(hidden,)`` peephole vectors for
    the three gates (present iff ``peephole_enabled``), ``b_*`` are biases.
    """

    U_i: np.ndarray
    U_f: np.ndarray
    U_o: np.ndarray
    U_c: np.ndarray
    V_i: np.ndarray
    V_f: np.ndarray
    V_o: np.ndarray
    V_c: np.ndarray
    b_i: np.ndarray
    b_f: np.ndarray
    b_o: np.ndarray
    b_c: np.ndarray
    Z_i: np.ndarray | None = None
    Z_f: np.ndarray | None = None
    Z_o: np.ndarray | None = None
    peephole_enabled: bool = True

    def __post_init__(self):
        peeps = (self.Z_i, self.Z_f, self.Z_o)
        if self.peephole_enabled and any(z is None for z in peeps):
            raise ValueError("peephole_enabled but a Z vector is missing")
        if not self.peephole_enabled and any(z is not None for z in peeps):
            raise ValueError("peephole vectors supplied while peephole_enabled is off")
        for name in self.tensor_names():
            setattr(self, name, as_tensor(getattr(self, name)))
        hidden, input_size = self.U_i.shape
        for g in GATES:
            u = getattr(self, f"U_{g}")
            v = getattr(self, f"V_{g}")
            b = getattr(self, f"b_{g}")
            if u.shape != (hidden, input_size):
                raise ShapeError(f"U_{g} shape {u.shape} != U_i shape {(hidden, input_size)}")
            if v.shape != (hidden, hidden):
                raise ShapeError(f"V_{g} shape {v.shape} != expected {(hidden, hidden)}")
            if b.shape != (hidden,):
                raise ShapeError(f"b_{g} shape {b.shape} != expected {(hidden,)}")
        if self.peephole_enabled:
            for g in ("i", "f", "o"):
                z = getattr(self, f"Z_{g}")
                if z.shape != (hidden,):
                    raise ShapeError(f"Z_{g} shape {z.shape} != expected {(hidden,)}")

    @property
    def hidden_size(self) -> int:
        return self.U_i.shape[0]

    @property
    def input_size(self) -> int:
        return self.U_i.shape[1]

    def tensor_names(self) -> list[str]:
        names = [f"U_{g}" for g in GATES] + [f"V_{g}" for g in GATES]
        if self.peephole_enabled:
            names += ["Z_i", "Z_f", "Z_o"]
        return names + [f"b_{g}" for g in GATES]


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # split on sign so exp never overflows
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


@dataclass
class LstmCellCache:
    """Activations saved by a cell forward pass for its backward pass."""

    x: np.ndarray
    h_prev: np.ndarray
    c_prev: np.ndarray
    i: np.ndarray
    f: np.ndarray
    o: np.ndarray
    g: np.ndarray
    c: np.ndarray
    tanh_c: np.ndarray
    input_size: int
    hidden_size: int
    peephole_enabled: bool


def _check_cell_shapes(x, h_prev, c_prev, p: LstmParams):
    if x.ndim != 2 or x.shape[1] != p.input_size:
        raise ShapeError(
            f"cell input shape {x.shape} does not match expected "
            f"(batch, {p.input_size})"
        )
    expected = (x.shape[0], p.hidden_size)
    if h_prev.shape != expected:
        raise ShapeError(f"h_prev shape {h_prev.shape} does not match expected {expected}")
    if c_prev.shape != expected:
        raise ShapeError(f"c_prev shape {c_prev.shape} does not match expected {expected}")


def lstm_cell_forward(
    x: np.ndarray, h_prev: np.ndarray, c_prev: np.ndarray, p: LstmParams
) -> tuple[np.ndarray, np.ndarray, LstmCellCache]:
    """One step of the cell; returns (h, c, cache)."""
    x = as_tensor(x)
    h_prev = as_tensor(h_prev)
    c_prev = as_tensor(c_prev)
    _check_cell_shapes(x, h_prev, c_prev, p)

    a_i = x @ p.U_i.T + h_prev @ p.V_i.T + p.b_i
    a_f = x @ p.U_f.T + h_prev @ p.V_f.T + p.b_f
    a_o = x @ p.U_o.T + h_prev @ p.V_o.T + p.b_o
    if p.peephole_enabled:
        a_i = a_i + p.Z_i * c_prev
        a_f = a_f + p.Z_f * c_prev
        a_o = a_o + p.Z_o * c_prev
    i = _sigmoid(a_i)
    f = _sigmoid(a_f)
    o = _sigmoid(a_o)
    g = np.tanh(x @ p.U_c.T + h_prev @ p.V_c.T + p.b_c)
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    cache = LstmCellCache(
        x=x, h_prev=h_prev, c_prev=c_prev, i=i, f=f, o=o, g=g, c=c, tanh_c=tanh_c,
        input_size=p.input_size, hidden_size=p.hidden_size,
        peephole_enabled=p.peephole_enabled,
    )
    return h, c, cache


def lstm_cell_backward(
    cache: LstmCellCache, dh: np.ndarray, dc: np.ndarray, p: LstmParams
) -> GradBundle:
    """Reverse rule of ``lstm_cell_forward`` given dLoss/dh and dLoss/dc."""
    if (
        cache.input_size != p.input_size
        or cache.hidden_size != p.hidden_size
        or cache.peephole_enabled != p.peephole_enabled
    ):
        raise ValueError(
            "cache does not match the supplied parameters: cached "
            f"(input={cache.input_size}, hidden={cache.hidden_size}, "
            f"peephole={cache.peephole_enabled}) vs params "
            f"(input={p.input_size}, hidden={p.hidden_size}, "
            f"peephole={p.peephole_enabled})"
        )
    dh = as_tensor(dh)
    dc = as_tensor(dc)
    expected = cache.h_prev.shape
    if dh.shape != expected or dc.shape != expected:
        raise ShapeError(
            f"gradient shapes {dh.shape}/{dc.shape} do not match state shape {expected}"
        )

    do = dh * cache.tanh_c
    da_o = do * cache.o * (1.0 - cache.o)
    dct = dc + dh * cache.o * (1.0 - cache.tanh_c**2)
    df = dct * cache.c_prev
    da_f = df * cache.f * (1.0 - cache.f)
    di = dct * cache.g
    da_i = di * cache.i * (1.0 - cache.i)
    dg = dct * cache.i
    da_c = dg * (1.0 - cache.g**2)

    da = {"i": da_i, "f": da_f, "o": da_o, "c": da_c}
    params: dict[str, np.ndarray] = {}
    for g in GATES:
        params[f"U_{g}"] = da[g].T @ cache.x
        params[f"V_{g}"] = da[g].T @ cache.h_prev
        params[f"b_{g}"] = da[g].sum(axis=0)
    dc_prev = dct * cache.f
    if p.peephole_enabled:
        for g in ("i", "f", "o"):
            params[f"Z_{g}"] = (da[g] * cache.c_prev).sum(axis=0)
            dc_prev = dc_prev + da[g] * getattr(p, f"Z_{g}")
    dx = da_i @ p.U_i + da_f @ p.U_f + da_o @ p.U_o + da_c @ p.U_c
    dh_prev = da_i @ p.V_i + da_f @ p.V_f + da_o @ p.V_o + da_c @ p.V_c
    return GradBundle(
        params=params,
        inputs={"x": dx, "h_prev": dh_prev, "c_prev": dc_prev},
    )


@dataclass
class LstmLayerCache:
    steps: list[LstmCellCache]


def lstm_layer_forward(
    x_seq: np.ndarray,
    p: LstmParams,
    h0: np.ndarray | None = None,
    c0: np.ndarray | None = None,
) -> tuple[np.ndarray, LstmLayerCache]:
    """Iterate the cell over ``x_seq`` of shape (batch, T, input).

    Returns the final hidden state ``(batch, hidden)`` plus the per-step
    caches needed for backpropagation through time.
    """
    x_seq = as_tensor(x_seq)
    if x_seq.ndim != 3:
        raise ShapeError(f"sequence input must be (batch, T, input), got {x_seq.shape}")
    batch, n_steps, _ = x_seq.shape
    if n_steps == 0:
        raise ValueError("empty sequence: the layer needs at least one time step")
    h = np.zeros((batch, p.hidden_size)) if h0 is None else as_tensor(h0)
    c = np.zeros((batch, p.hidden_size)) if c0 is None else as_tensor(c0)
    steps = []
    for t in range(n_steps):
        h, c, cache = lstm_cell_forward(x_seq[:, t, :], h, c, p)
        steps.append(cache)
    return h, LstmLayerCache(steps=steps)


def lstm_layer_backward(
    cache: LstmLayerCache, dh_final: np.ndarray, p: LstmParams
) -> GradBundle:
    """Backpropagation through time off the final hidden state gradient."""
    if not cache.steps:
        raise ValueError("empty layer cache")
    n_steps = len(cache.steps)
    batch = cache.steps[0].x.shape[0]
    dx_seq = np.zeros((batch, n_steps, p.input_size))
    params: dict[str, np.ndarray] = {}
    dh = as_tensor(dh_final)
    dc = np.zeros_like(dh)
    for t in range(n_steps - 1, -1, -1):
        bundle = lstm_cell_backward(cache.steps[t], dh, dc, p)
        dx_seq[:, t, :] = bundle.inputs["x"]
        dh = bundle.inputs["h_prev"]
        dc = bundle.inputs["c_prev"]
        for name, grad in bundle.params.items():
            params[name] = params.get(name, 0.0) + grad
    return GradBundle(params=params, inputs={"x_seq": dx_seq, "h0": dh, "c0": dc})
