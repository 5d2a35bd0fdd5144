"""Minimal float64 neural engine with hand-derived backward passes."""

from .functional import (
    LayerGrad,
    bilstm_backward,
    bilstm_forward,
    conv1d_backward,
    conv1d_forward,
    dense_backward,
    dense_forward,
    dropout_backward,
    dropout_forward,
    lstm_backward,
    lstm_forward,
    maxpool1d_backward,
    maxpool1d_forward,
    mse,
    mse_grad,
)
from .gradcheck import gradient_check, numeric_gradient, relative_error
from .layers import LSTM, BiLSTM, Conv1D, Dense, Dropout, Flatten, MaxPool1D
from .network import ENGINE_TAG, Network
from .optim import Adam, adam_step, init_adam_state

__all__ = [
    "Adam", "BiLSTM", "Conv1D", "Dense", "Dropout", "ENGINE_TAG", "Flatten", "LSTM", "LayerGrad",
    "MaxPool1D", "Network", "adam_step", "bilstm_backward", "bilstm_forward", "conv1d_backward",
    "conv1d_forward", "dense_backward", "dense_forward", "dropout_backward", "dropout_forward",
    "gradient_check", "init_adam_state", "lstm_backward", "lstm_forward", "maxpool1d_backward",
    "maxpool1d_forward", "mse", "mse_grad", "numeric_gradient", "relative_error",
]
