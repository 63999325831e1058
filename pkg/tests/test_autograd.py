"""Backward-pass correctness of every autodiff operation.

Each op's analytic gradient is compared against central finite differences,
and conv3d/maxpool3d additionally against brute-force scalar-loop oracles.
"""

import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from signrec.nn import autograd as ag
from signrec.nn.autograd import Tensor


def numeric_grad(fn, x: np.ndarray, eps: float = 1e-6) -> np.ndarray:
    """Central-difference gradient of a scalar function of one array."""
    g = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = fn(x)
        flat[i] = orig - eps
        fm = fn(x)
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * eps)
    return g


def check_unary(op, x, tol=1e-7):
    t = ag.parameter(x, "x")
    loss = ag.sum_all(op(t))
    loss.backward()
    expected = numeric_grad(lambda arr: op(Tensor(arr)).data.sum(), x.copy())
    assert np.allclose(t.grad, expected, atol=tol), (
        f"max err {np.abs(t.grad - expected).max():.2e}"
    )


@pytest.mark.parametrize("op", [ag.sigmoid, ag.tanh, lambda t: ag.scale(t, -2.5)])
def test_smooth_unary_ops_match_finite_differences(op):
    rng = np.random.default_rng(0)
    check_unary(op, rng.standard_normal((4, 5)))


def test_relu_gradient_away_from_kink():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((6, 3))
    x[np.abs(x) < 1e-3] = 0.5  # keep probes off the nondifferentiable point
    check_unary(ag.relu, x)


def test_add_mul_broadcast_gradients():
    rng = np.random.default_rng(2)
    a = ag.parameter(rng.standard_normal((4, 5)), "a")
    b = ag.parameter(rng.standard_normal((5,)), "b")  # broadcasts over rows
    loss = ag.sum_all(ag.mul(ag.add(a, b), a))
    loss.backward()
    ga = numeric_grad(
        lambda arr: ((arr + b.data) * arr).sum(), a.data.copy()
    )
    gb = numeric_grad(
        lambda arr: ((a.data + arr) * a.data).sum(), b.data.copy()
    )
    assert np.allclose(a.grad, ga, atol=1e-7)
    assert np.allclose(b.grad, gb, atol=1e-7)
    assert b.grad.shape == b.data.shape


def test_matmul_and_transpose_gradients():
    rng = np.random.default_rng(3)
    a = ag.parameter(rng.standard_normal((3, 4)), "a")
    b = ag.parameter(rng.standard_normal((4, 2)), "b")
    loss = ag.sum_all(ag.matmul(a, b))
    loss.backward()
    assert np.allclose(a.grad, np.ones((3, 2)) @ b.data.T)
    assert np.allclose(b.grad, a.data.T @ np.ones((3, 2)))

    t = ag.parameter(rng.standard_normal((2, 5)), "t")
    loss = ag.sum_all(ag.mul(ag.transpose(t), ag.constant(rng.standard_normal((5, 2)))))
    loss.backward()
    assert t.grad.shape == (2, 5)


def test_concat_routes_gradient_to_each_part():
    rng = np.random.default_rng(4)
    parts = [ag.parameter(rng.standard_normal((2, k)), f"p{k}") for k in (1, 3, 2)]
    weight = rng.standard_normal((2, 6))
    loss = ag.sum_all(ag.mul(ag.concat(parts, axis=1), ag.constant(weight)))
    loss.backward()
    assert np.allclose(parts[0].grad, weight[:, 0:1])
    assert np.allclose(parts[1].grad, weight[:, 1:4])
    assert np.allclose(parts[2].grad, weight[:, 4:6])


def test_narrow_is_slice_forward_scatter_backward():
    rng = np.random.default_rng(5)
    a = ag.parameter(rng.standard_normal((3, 8)), "a")
    out = ag.narrow(a, 1, 2, 4)
    assert np.array_equal(out.data, a.data[:, 2:6])
    loss = ag.sum_all(out)
    loss.backward()
    expected = np.zeros((3, 8))
    expected[:, 2:6] = 1.0
    assert np.array_equal(a.grad, expected)


def test_reshape_gradient_restores_shape():
    a = ag.parameter(np.arange(12.0).reshape(3, 4), "a")
    loss = ag.sum_all(ag.mul(ag.reshape(a, (2, 6)), ag.constant(np.arange(12.0).reshape(2, 6))))
    loss.backward()
    assert a.grad.shape == (3, 4)
    assert np.array_equal(a.grad, np.arange(12.0).reshape(3, 4))


def test_mean_all_is_sum_over_size():
    a = ag.parameter(np.array([[1.0, 2.0], [3.0, 4.0]]), "a")
    ag.mean_all(a).backward()
    assert np.allclose(a.grad, np.full((2, 2), 0.25))


def test_gradients_accumulate_across_reuse():
    a = ag.parameter(np.array([2.0, 3.0]), "a")
    loss = ag.sum_all(ag.mul(a, a))  # d/da sum(a*a) = 2a
    loss.backward()
    assert np.allclose(a.grad, 2 * a.data)


def test_backward_requires_scalar():
    a = ag.parameter(np.ones((2, 2)), "a")
    with pytest.raises(ValueError):
        ag.mul(a, a).backward()


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def test_dropout_inference_is_identity():
    a = ag.parameter(np.arange(6.0).reshape(2, 3), "a")
    out = ag.dropout(a, 0.5, training=False, rng=None)
    assert out is a


def test_dropout_training_masks_and_rescales():
    rng = np.random.default_rng(0)
    a = ag.parameter(np.ones((200, 50)), "a")
    out = ag.dropout(a, 0.25, training=True, rng=rng)
    vals = np.unique(out.data)
    assert set(vals.tolist()) <= {0.0, 4.0}  # survivors scaled by 1/keep
    keep_rate = (out.data != 0).mean()
    assert abs(keep_rate - 0.25) < 0.02
    ag.sum_all(out).backward()
    assert np.array_equal(a.grad != 0, out.data != 0)


def test_dropout_rejects_bad_keep():
    a = ag.parameter(np.ones(3), "a")
    for keep in (0.0, -0.1, 1.5):
        with pytest.raises(ValueError):
            ag.dropout(a, keep, training=True, rng=np.random.default_rng(0))


# ---------------------------------------------------------------------------
# softmax cross-entropy
# ---------------------------------------------------------------------------

def test_softmax_cross_entropy_matches_manual_computation():
    rng = np.random.default_rng(6)
    z = rng.standard_normal((5, 4))
    labels = rng.integers(0, 4, 5)
    logits = ag.parameter(z, "z")
    loss, probs = ag.softmax_cross_entropy(logits, labels)
    ref_probs = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    ref_loss = -np.log(ref_probs[np.arange(5), labels]).mean()
    assert abs(float(loss.data) - ref_loss) < 1e-12
    assert np.allclose(probs, ref_probs, atol=1e-12)
    loss.backward()
    expected = ref_probs.copy()
    expected[np.arange(5), labels] -= 1.0
    assert np.allclose(logits.grad, expected / 5, atol=1e-12)


def test_softmax_cross_entropy_is_stable_for_huge_logits():
    logits = ag.parameter(np.array([[1000.0, 0.0], [-1000.0, 0.0]]), "z")
    loss, probs = ag.softmax_cross_entropy(logits, np.array([0, 1]))
    assert np.isfinite(float(loss.data))
    assert np.all(np.isfinite(probs))


def test_softmax_cross_entropy_rejects_bad_labels():
    logits = ag.parameter(np.zeros((2, 3)), "z")
    with pytest.raises(ValueError):
        ag.softmax_cross_entropy(logits, np.array([0, 3]))


def test_plain_softmax_rows_sum_to_one():
    rng = np.random.default_rng(7)
    p = ag.softmax(rng.standard_normal((8, 6)) * 50)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0)


# ---------------------------------------------------------------------------
# conv3d / maxpool3d against scalar-loop oracles
# ---------------------------------------------------------------------------

def conv3d_oracle(x, k, b):
    """Seven nested loops, one multiply at a time."""
    B, F, H, W, C = x.shape
    K, kt, kh, kw, _ = k.shape
    out = np.zeros((B, F - kt + 1, H - kh + 1, W - kw + 1, K))
    for n in range(B):
        for f in range(F - kt + 1):
            for i in range(H - kh + 1):
                for j in range(W - kw + 1):
                    for kk in range(K):
                        acc = b[kk]
                        for dt in range(kt):
                            for di in range(kh):
                                for dj in range(kw):
                                    for c in range(C):
                                        acc += (
                                            x[n, f + dt, i + di, j + dj, c]
                                            * k[kk, dt, di, dj, c]
                                        )
                        out[n, f, i, j, kk] = acc
    return out


def maxpool3d_oracle(x, window):
    B, F, H, W, C = x.shape
    wf, wh, ww = window
    fo, ho, wo = F // wf, H // wh, W // ww
    out = np.zeros((B, fo, ho, wo, C))
    for n in range(B):
        for f in range(fo):
            for i in range(ho):
                for j in range(wo):
                    for c in range(C):
                        block = x[
                            n,
                            f * wf : (f + 1) * wf,
                            i * wh : (i + 1) * wh,
                            j * ww : (j + 1) * ww,
                            c,
                        ]
                        out[n, f, i, j, c] = block.max()
    return out


def test_conv3d_forward_matches_scalar_oracle():
    rng = np.random.default_rng(8)
    x = rng.standard_normal((2, 4, 5, 5, 2))
    k = rng.standard_normal((3, 2, 3, 3, 2))
    b = rng.standard_normal(3)
    out = ag.conv3d(Tensor(x), Tensor(k), Tensor(b))
    assert np.allclose(out.data, conv3d_oracle(x, k, b), atol=1e-12)


def test_conv3d_gradients_match_finite_differences():
    rng = np.random.default_rng(9)
    x = ag.parameter(rng.standard_normal((1, 3, 4, 4, 2)), "x")
    k = ag.parameter(rng.standard_normal((2, 2, 2, 2, 2)), "k")
    b = ag.parameter(rng.standard_normal(2), "b")
    weight = rng.standard_normal((1, 2, 3, 3, 2))

    def loss_val(xa, ka, ba):
        return float((conv3d_oracle(xa, ka, ba) * weight).sum())

    loss = ag.sum_all(ag.mul(ag.conv3d(x, k, b), ag.constant(weight)))
    loss.backward()
    gx = numeric_grad(lambda a: loss_val(a, k.data, b.data), x.data.copy())
    gk = numeric_grad(lambda a: loss_val(x.data, a, b.data), k.data.copy())
    gb = numeric_grad(lambda a: loss_val(x.data, k.data, a), b.data.copy())
    assert np.allclose(x.grad, gx, atol=1e-6)
    assert np.allclose(k.grad, gk, atol=1e-6)
    assert np.allclose(b.grad, gb, atol=1e-6)


def test_conv3d_rejects_mismatched_channels_and_oversize_kernels():
    x = Tensor(np.zeros((1, 4, 4, 4, 3)))
    with pytest.raises(ValueError):
        ag.conv3d(x, Tensor(np.zeros((2, 2, 2, 2, 4))), Tensor(np.zeros(2)))
    with pytest.raises(ValueError):
        ag.conv3d(x, Tensor(np.zeros((2, 5, 2, 2, 3))), Tensor(np.zeros(2)))


def test_maxpool3d_forward_matches_scalar_oracle():
    rng = np.random.default_rng(10)
    x = rng.standard_normal((2, 4, 6, 6, 3))
    out = ag.maxpool3d(Tensor(x), (2, 2, 2))
    assert np.allclose(out.data, maxpool3d_oracle(x, (2, 2, 2)), atol=1e-12)
    out = ag.maxpool3d(Tensor(x), (1, 2, 3))
    assert np.allclose(out.data, maxpool3d_oracle(x, (1, 2, 3)), atol=1e-12)


def test_maxpool3d_truncates_odd_remainders():
    rng = np.random.default_rng(11)
    x = rng.standard_normal((1, 5, 5, 5, 1))
    out = ag.maxpool3d(Tensor(x), (2, 2, 2))
    assert out.data.shape == (1, 2, 2, 2, 1)
    assert np.allclose(out.data, maxpool3d_oracle(x[:, :4, :4, :4], (2, 2, 2)))


def test_maxpool3d_routes_gradient_to_argmax_only():
    x = np.zeros((1, 2, 2, 2, 1))
    x[0, 1, 0, 1, 0] = 5.0  # unique maximum of the single window
    t = ag.parameter(x, "x")
    ag.sum_all(ag.maxpool3d(t, (2, 2, 2))).backward()
    expected = np.zeros_like(x)
    expected[0, 1, 0, 1, 0] = 1.0
    assert np.array_equal(t.grad, expected)


def test_maxpool3d_tie_goes_to_first_index():
    x = np.ones((1, 2, 2, 2, 1))  # all tied
    t = ag.parameter(x, "x")
    ag.sum_all(ag.maxpool3d(t, (2, 2, 2))).backward()
    expected = np.zeros_like(x)
    expected[0, 0, 0, 0, 0] = 1.0
    assert np.array_equal(t.grad, expected)


def test_dense_is_affine_with_out_by_in_weight():
    rng = np.random.default_rng(12)
    x = Tensor(rng.standard_normal((4, 3)))
    w = Tensor(rng.standard_normal((5, 3)))
    b = Tensor(rng.standard_normal(5))
    out = ag.dense(x, w, b)
    assert np.allclose(out.data, x.data @ w.data.T + b.data, atol=1e-12)


# ---------------------------------------------------------------------------
# decision signatures (kink detection for finite-difference checks)
# ---------------------------------------------------------------------------

def test_decision_signature_distinguishes_relu_patterns():
    with ag.decision_signature() as s1:
        ag.relu(Tensor(np.array([1.0, -1.0])))
    with ag.decision_signature() as s2:
        ag.relu(Tensor(np.array([1.0, 1.0])))
    with ag.decision_signature() as s3:
        ag.relu(Tensor(np.array([1.0, -1.0])))
    assert s1.digest != s2.digest
    assert s1.digest == s3.digest


def test_decision_signature_sees_pool_argmax_changes():
    lo = np.zeros((1, 2, 2, 2, 1))
    lo[0, 0, 0, 0, 0] = 1.0
    hi = np.zeros((1, 2, 2, 2, 1))
    hi[0, 1, 1, 1, 0] = 1.0
    with ag.decision_signature() as s1:
        ag.maxpool3d(Tensor(lo), (2, 2, 2))
    with ag.decision_signature() as s2:
        ag.maxpool3d(Tensor(hi), (2, 2, 2))
    assert s1.digest != s2.digest


def test_decision_signature_nests_and_restores():
    with ag.decision_signature() as outer:
        ag.relu(Tensor(np.array([1.0])))
        with ag.decision_signature() as inner:
            ag.relu(Tensor(np.array([-1.0])))
        ag.relu(Tensor(np.array([1.0])))
    assert inner.digest != outer.digest
    # outside any context, noting decisions is a no-op
    ag.relu(Tensor(np.array([2.0])))


# ---------------------------------------------------------------------------
# property-based: gradients of compositions stay finite and correctly shaped
# ---------------------------------------------------------------------------

@settings(max_examples=25, deadline=None)
@given(
    rows=st.integers(1, 4),
    cols=st.integers(1, 4),
    seed=st.integers(0, 2**31 - 1),
)
def test_composite_graph_gradient_shapes_and_finiteness(rows, cols, seed):
    rng = np.random.default_rng(seed)
    a = ag.parameter(rng.standard_normal((rows, cols)), "a")
    w = ag.parameter(rng.standard_normal((cols, cols)), "w")
    out = ag.tanh(ag.matmul(a, w))
    out = ag.add(out, a)
    ag.mean_all(ag.mul(out, out)).backward()
    assert a.grad.shape == a.data.shape
    assert w.grad.shape == w.data.shape
    assert np.all(np.isfinite(a.grad))
    assert np.all(np.isfinite(w.grad))
