"""Seeded parameter initialisation.

The scheme, applied in the canonical parameter order of the model:

- convolution and dense weights, and LSTM input maps ``U_*``: uniform in
  ``+-sqrt(6 / (fan_in + fan_out))``
- LSTM recurrent maps ``V_*`` and peephole vectors ``Z_*``: uniform in
  ``+-sqrt(1 / hidden)``
- biases zero, except the LSTM forget bias ``b_f`` which starts at 1

Each initialiser consumes exactly one ``rng.uniform`` draw per weight
tensor, in the declaration order below, so a seed pins every parameter.
"""

from __future__ import annotations

import numpy as np

from .lstm import LstmParams
from .ops import ConvParams, LinearParams


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def recurrent_uniform(rng: np.random.Generator, shape, hidden: int) -> np.ndarray:
    limit = np.sqrt(1.0 / hidden)
    return rng.uniform(-limit, limit, size=shape)


def init_conv(
    rng: np.random.Generator, out_channels: int, in_channels: int, k: int, padding: int
) -> ConvParams:
    weights = glorot_uniform(
        rng, (out_channels, in_channels, k), in_channels * k, out_channels * k
    )
    return ConvParams(weights=weights, bias=np.zeros(out_channels), padding=padding)


def init_linear(rng: np.random.Generator, out_features: int, in_features: int) -> LinearParams:
    w = glorot_uniform(rng, (out_features, in_features), in_features, out_features)
    return LinearParams(W=w, b=np.zeros(out_features))


def init_lstm(
    rng: np.random.Generator, hidden: int, input_size: int, peephole: bool = True
) -> LstmParams:
    u = {
        g: glorot_uniform(rng, (hidden, input_size), input_size, hidden)
        for g in ("i", "f", "o", "c")
    }
    v = {g: recurrent_uniform(rng, (hidden, hidden), hidden) for g in ("i", "f", "o", "c")}
    z = {
        g: recurrent_uniform(rng, (hidden,), hidden) if peephole else None
        for g in ("i", "f", "o")
    }
    return LstmParams(
        U_i=u["i"], U_f=u["f"], U_o=u["o"], U_c=u["c"],
        V_i=v["i"], V_f=v["f"], V_o=v["o"], V_c=v["c"],
        b_i=np.zeros(hidden), b_f=np.ones(hidden), b_o=np.zeros(hidden),
        b_c=np.zeros(hidden),
        Z_i=z["i"], Z_f=z["f"], Z_o=z["o"],
        peephole_enabled=peephole,
    )
