"""LSTM cell semantics, fused-gate equivalence, and exact BPTT gradients."""

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from signrec.nn import autograd as ag
from signrec.nn.autograd import Tensor
from signrec.nn.gradcheck import finite_diff_gradcheck
from signrec.nn.lstm import (
    GATE_NAMES,
    LstmState,
    init_lstm_params,
    lstm_cell_forward,
    lstm_forward,
    lstm_step,
    zero_state,
)


def make_params(state_size, input_size, seed=0, prefix=""):
    return init_lstm_params(state_size, input_size, np.random.default_rng(seed), prefix)


def cell_oracle(x, h, c, p):
    """Textbook gate equations, one scalar path at a time via plain numpy."""
    z = np.concatenate([h, x])

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    f = sig(p.w_f.data @ z + p.b_f.data)
    i = sig(p.w_i.data @ z + p.b_i.data)
    g = np.tanh(p.w_g.data @ z + p.b_g.data)
    c2 = f * c + i * g
    o = sig(p.w_o.data @ z + p.b_o.data)
    return o * np.tanh(c2), c2


def test_init_shapes_and_forget_bias():
    p = make_params(7, 4)
    for name in ("w_f", "w_i", "w_g", "w_o"):
        assert getattr(p, name).data.shape == (7, 11)
    assert np.all(p.b_f.data == 1.0)  # forget gate starts open
    for name in ("b_i", "b_g", "b_o"):
        assert np.all(getattr(p, name).data == 0.0)
    assert p.state_size == 7
    assert p.input_size == 4
    assert set(GATE_NAMES) == {"w_f", "w_i", "w_g", "w_o", "b_f", "b_i", "b_g", "b_o"}


def test_init_prefix_lands_in_parameter_names():
    p = make_params(3, 2, prefix="axis0.l1.")
    assert p.w_f.name == "axis0.l1.w_f"
    assert p.b_o.name == "axis0.l1.b_o"


def test_cell_forward_matches_oracle():
    rng = np.random.default_rng(1)
    p = make_params(6, 3, seed=1)
    for _ in range(100):
        x = rng.standard_normal(3)
        h = rng.standard_normal(6) * 0.5
        c = rng.standard_normal(6)
        out = lstm_cell_forward(x, LstmState(h=h, c=c), p)
        h_ref, c_ref = cell_oracle(x, h, c, p)
        assert np.allclose(out.h, h_ref, atol=1e-12)
        assert np.allclose(out.c, c_ref, atol=1e-12)


def test_cell_forward_validates_shapes():
    p = make_params(4, 3)
    with pytest.raises(ValueError):
        lstm_cell_forward(np.zeros(2), LstmState(np.zeros(4), np.zeros(4)), p)
    with pytest.raises(ValueError):
        lstm_cell_forward(np.zeros(3), LstmState(np.zeros(5), np.zeros(4)), p)


def test_batched_step_matches_per_row_cell():
    rng = np.random.default_rng(2)
    p = make_params(5, 3, seed=2)
    x = rng.standard_normal((4, 3))
    h = rng.standard_normal((4, 5)) * 0.3
    c = rng.standard_normal((4, 5))
    h2, c2 = lstm_step(Tensor(x), Tensor(h), Tensor(c), p)
    for row in range(4):
        out = lstm_cell_forward(x[row], LstmState(h=h[row], c=c[row]), p)
        assert np.allclose(h2.data[row], out.h, atol=1e-12)
        assert np.allclose(c2.data[row], out.c, atol=1e-12)


def test_fused_forward_matches_stepwise_recurrence():
    """The single-matmul gate fusion must be numerically equivalent to
    running lstm_step over the sequence, for a 2-layer stack."""
    rng = np.random.default_rng(3)
    layers = [make_params(6, 4, seed=10), make_params(6, 6, seed=11)]
    seq = rng.standard_normal((3, 9, 4))

    final = lstm_forward(seq, layers)

    outputs = [Tensor(seq[:, t, :]) for t in range(9)]
    for layer in layers:
        h = Tensor(np.zeros((3, layer.state_size)))
        c = Tensor(np.zeros((3, layer.state_size)))
        hidden = []
        for x_t in outputs:
            h, c = lstm_step(x_t, h, c, layer)
            hidden.append(h)
        outputs = hidden
    assert np.allclose(final.data, outputs[-1].data, atol=1e-12)


def test_forward_output_lies_in_tanh_range():
    rng = np.random.default_rng(4)
    layers = [make_params(8, 5, seed=5)]
    out = lstm_forward(rng.standard_normal((2, 30, 5)) * 10, layers)
    assert np.all(np.abs(out.data) < 1.0)


def test_forward_validates_input():
    layers = [make_params(4, 3)]
    with pytest.raises(ValueError):
        lstm_forward(np.zeros((2, 5)), layers)
    with pytest.raises(ValueError):
        lstm_forward(np.zeros((2, 5, 7)), layers)
    with pytest.raises(ValueError):
        lstm_forward(np.zeros((2, 5, 3)), [])


def test_zero_state_shapes():
    s = zero_state(6, batch=3)
    assert s.h.shape == (3, 6)
    assert s.c.shape == (3, 6)
    assert not s.h.any() and not s.c.any()


def test_full_bptt_gradients_match_finite_differences():
    """Unrolled backward through 12 steps and 2 layers is an exact gradient."""
    rng = np.random.default_rng(6)
    layers = [make_params(4, 3, seed=20, prefix="l0."), make_params(4, 4, seed=21, prefix="l1.")]
    seq = rng.standard_normal((2, 12, 3))
    labels = np.array([1, 0])
    params = {t.name: t for layer in layers for t in vars(layer).values()}

    def loss_fn():
        final = lstm_forward(seq, layers)
        head = Tensor(np.eye(4)[:2])  # fixed projection to 2 logits
        logits = ag.matmul(final, ag.transpose(head))
        return ag.softmax_cross_entropy(logits, labels)[0]

    err = finite_diff_gradcheck(loss_fn, params, rng=np.random.default_rng(0))
    assert err < 1e-6, f"BPTT relative error {err:.2e}"


def test_inter_layer_dropout_leaves_final_state_undropped():
    """Dropout applies between layers only; the returned top-layer state is
    never masked, and a single layer trains without any dropout at all."""
    rng = np.random.default_rng(7)
    seq = rng.standard_normal((4, 6, 3))
    one = [make_params(5, 3, seed=30)]
    out_train = lstm_forward(seq, one, dropout_keep=0.5, training=True,
                             rng=np.random.default_rng(0))
    out_eval = lstm_forward(seq, one, dropout_keep=0.5, training=False)
    assert np.allclose(out_train.data, out_eval.data, atol=1e-12)

    two = [make_params(5, 3, seed=31), make_params(5, 5, seed=32)]
    a = lstm_forward(seq, two, dropout_keep=0.5, training=True,
                     rng=np.random.default_rng(1))
    b = lstm_forward(seq, two, dropout_keep=0.5, training=True,
                     rng=np.random.default_rng(2))
    # different masks on the layer-1 output change the layer-2 result
    assert not np.allclose(a.data, b.data)


@settings(max_examples=20, deadline=None)
@given(
    batch=st.integers(1, 3),
    steps=st.integers(1, 8),
    state=st.integers(1, 6),
    seed=st.integers(0, 10_000),
)
def test_forward_shape_and_determinism(batch, steps, state, seed):
    rng = np.random.default_rng(seed)
    layers = [make_params(state, 3, seed=seed)]
    seq = rng.standard_normal((batch, steps, 3))
    a = lstm_forward(seq, layers)
    b = lstm_forward(seq, layers)
    assert a.data.shape == (batch, state)
    assert np.array_equal(a.data, b.data)
