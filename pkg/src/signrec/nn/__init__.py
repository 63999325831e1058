"""Differentiable-computation kernel: autograd ops, LSTM, Adam, checks, checkpoints."""

from . import autograd
from .adam import AdamState, adam_step
from .autograd import Tensor
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import finite_diff_gradcheck
from .lstm import LstmParams, LstmState, init_lstm_params, lstm_cell_forward, lstm_forward

__all__ = [
    "autograd",
    "Tensor",
    "AdamState",
    "adam_step",
    "LstmParams",
    "LstmState",
    "init_lstm_params",
    "lstm_cell_forward",
    "lstm_forward",
    "finite_diff_gradcheck",
    "save_checkpoint",
    "load_checkpoint",
]
