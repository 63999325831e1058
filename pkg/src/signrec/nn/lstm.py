"""LSTM cell and stacked-layer forward passes.

One cell step, for input x_t and previous (h, c):

    f = sigmoid(W_f @ [h; x] + b_f)        forget gate
    i = sigmoid(W_i @ [h; x] + b_i)        input gate
    g = tanh  (W_g @ [h; x] + b_g)         candidate memory
    c' = f * c + i * g
    o = sigmoid(W_o @ [h; x] + b_o)        output gate
    h' = o * tanh(c')

Weight matrices are (S, S+D): state size rows, concatenated previous-state
and input columns.  Forget-gate biases start at 1.0 (the usual trainability
fix), the other biases at zero, weights Glorot-uniform.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import autograd as ag
from .autograd import Tensor

GATE_NAMES = ("w_f", "w_i", "w_g", "w_o", "b_f", "b_i", "b_g", "b_o")


@dataclass
class LstmParams:
    """Learnable parameters of one LSTM layer (input dim D, state size S)."""

    w_f: Tensor
    w_i: Tensor
    w_g: Tensor
    w_o: Tensor
    b_f: Tensor
    b_i: Tensor
    b_g: Tensor
    b_o: Tensor

    @property
    def state_size(self) -> int:
        return self.w_f.data.shape[0]

    @property
    def input_size(self) -> int:
        return self.w_f.data.shape[1] - self.w_f.data.shape[0]


@dataclass
class LstmState:
    """Hidden vector and cell memory after a step; h entries lie in (-1, 1)."""

    h: np.ndarray
    c: np.ndarray


def init_lstm_params(
    state_size: int, input_size: int, rng: np.random.Generator, prefix: str = ""
) -> LstmParams:
    cols = state_size + input_size
    limit = np.sqrt(6.0 / (state_size + cols))

    def w(name):
        return ag.parameter(rng.uniform(-limit, limit, (state_size, cols)), prefix + name)

    fields = {name: w(name) for name in ("w_f", "w_i", "w_g", "w_o")}
    fields["b_f"] = ag.parameter(np.ones(state_size), prefix + "b_f")
    for name in ("b_i", "b_g", "b_o"):
        fields[name] = ag.parameter(np.zeros(state_size), prefix + name)
    return LstmParams(**fields)


def lstm_step(x: Tensor, h: Tensor, c: Tensor, p: LstmParams):
    """One batched cell step: x (B, D), h/c (B, S) -> (h', c') Tensors."""
    z = ag.concat([h, x], axis=1)
    f = ag.sigmoid(ag.dense(z, p.w_f, p.b_f))
    i = ag.sigmoid(ag.dense(z, p.w_i, p.b_i))
    g = ag.tanh(ag.dense(z, p.w_g, p.b_g))
    c2 = ag.add(ag.mul(f, c), ag.mul(i, g))
    o = ag.sigmoid(ag.dense(z, p.w_o, p.b_o))
    h2 = ag.mul(o, ag.tanh(c2))
    return h2, c2


def lstm_cell_forward(x: np.ndarray, prev: LstmState, p: LstmParams) -> LstmState:
    """Single-vector cell application on plain arrays (no tape)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.size != p.input_size:
        raise ValueError(f"expected input of length {p.input_size}, got shape {x.shape}")
    if prev.h.shape != (p.state_size,) or prev.c.shape != (p.state_size,):
        raise ValueError("state size mismatch")
    z = np.concatenate([prev.h, x])
    f = ag._sigmoid(p.w_f.data @ z + p.b_f.data)
    i = ag._sigmoid(p.w_i.data @ z + p.b_i.data)
    g = np.tanh(p.w_g.data @ z + p.b_g.data)
    c = f * prev.c + i * g
    o = ag._sigmoid(p.w_o.data @ z + p.b_o.data)
    h = o * np.tanh(c)
    return LstmState(h=h, c=c)


def zero_state(state_size: int, batch: int = 1) -> LstmState:
    return LstmState(h=np.zeros((batch, state_size)), c=np.zeros((batch, state_size)))


def lstm_forward(
    seq: np.ndarray,
    layers: list,
    dropout_keep: float = 1.0,
    training: bool = False,
    rng: Optional[np.random.Generator] = None,
) -> Tensor:
    """Run a stacked LSTM over a batched sequence, returning the final h.

    ``seq`` is (B, T, D); layer l > 0 consumes layer l-1's hidden sequence.
    Dropout (when training) applies to each layer's output sequence as it is
    handed to the next layer, never inside the recurrent connections; the
    returned final hidden state is undropped (callers drop dense-layer
    inputs themselves).  Initial states are zero.  The whole unrolled graph
    stays on the tape, so a later backward() performs full, untruncated
    backpropagation through time.

    The four gate matmuls are fused into one (B, S+D) @ (S+D, 4S) product
    per step; results match lstm_step / lstm_cell_forward to rounding.
    """
    if not layers:
        raise ValueError("need at least one LSTM layer")
    seq = np.asarray(seq, dtype=np.float64)
    if seq.ndim != 3:
        raise ValueError(f"expected (B, T, D) input, got shape {seq.shape}")
    batch, steps, dim = seq.shape
    if dim != layers[0].input_size:
        raise ValueError(f"layer 0 expects input dim {layers[0].input_size}, got {dim}")
    outputs = [Tensor(seq[:, t, :]) for t in range(steps)]
    final_h = None
    for li, layer in enumerate(layers):
        s = layer.state_size
        wt = ag.transpose(ag.concat([layer.w_f, layer.w_i, layer.w_g, layer.w_o], axis=0))
        b = ag.concat([layer.b_f, layer.b_i, layer.b_g, layer.b_o], axis=0)
        h = Tensor(np.zeros((batch, s)))
        c = Tensor(np.zeros((batch, s)))
        hidden = []
        for x_t in outputs:
            z = ag.concat([h, x_t], axis=1)
            acts = ag.add(ag.matmul(z, wt), b)
            f = ag.sigmoid(ag.narrow(acts, 1, 0, s))
            i = ag.sigmoid(ag.narrow(acts, 1, s, s))
            g = ag.tanh(ag.narrow(acts, 1, 2 * s, s))
            o = ag.sigmoid(ag.narrow(acts, 1, 3 * s, s))
            c = ag.add(ag.mul(f, c), ag.mul(i, g))
            h = ag.mul(o, ag.tanh(c))
            hidden.append(h)
        final_h = hidden[-1]
        if li < len(layers) - 1 and training and dropout_keep < 1.0:
            hidden = [ag.dropout(h_t, dropout_keep, True, rng) for h_t in hidden]
        outputs = hidden
    return final_h
