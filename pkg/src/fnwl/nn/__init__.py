from .ops import (
    ConvParams,
    GradBundle,
    LinearParams,
    conv1d_forward,
    conv1d_backward,
    linear_forward,
    linear_backward,
    maxpool1d,
    maxpool1d_backward,
    relu,
    relu_backward,
    softmax_cross_entropy,
)
from .lstm import (
    LstmParams,
    lstm_cell_forward,
    lstm_cell_backward,
    lstm_layer_forward,
    lstm_layer_backward,
)
from .init import init_conv, init_linear, init_lstm
from .gradcheck import GradCheckReport, finite_diff_gradcheck, relative_error

__all__ = [
    "ConvParams",
    "GradBundle",
    "LinearParams",
    "LstmParams",
    "GradCheckReport",
    "conv1d_forward",
    "conv1d_backward",
    "linear_forward",
    "linear_backward",
    "maxpool1d",
    "maxpool1d_backward",
    "relu",
    "relu_backward",
    "softmax_cross_entropy",
    "lstm_cell_forward",
    "lstm_cell_backward",
    "lstm_layer_forward",
    "lstm_layer_backward",
    "init_conv",
    "init_linear",
    "init_lstm",
    "finite_diff_gradcheck",
    "relative_error",
]
