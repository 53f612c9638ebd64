import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from gblsdetect import tensor as T
from gblsdetect.gradcheck import grad_check
from gblsdetect.tensor import AutogradError, NonFiniteError, ShapeError, Tensor

finite = st.floats(-5, 5, allow_nan=False, allow_infinity=False)


def test_elementwise_examples():
    assert T.sigmoid(Tensor(0.0)).item() == 0.5
    np.testing.assert_array_equal(T.add(Tensor([1, 2]), Tensor([3, 4])).data, [4, 6])
    assert T.relu(Tensor(-3.0)).item() == 0.0


def test_matmul_examples():
    m = Tensor([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_array_equal((Tensor(np.eye(2)) @ m).data, m.data)
    assert (Tensor([[1.0, 0.0]]) @ Tensor([[0.0], [5.0]])).data.tolist() == [[0.0]]


def test_matmul_matches_triple_loop(rng):
    a, b = rng.normal(size=(3, 4)), rng.normal(size=(4, 2))
    ref = np.zeros((3, 2))
    for i in range(3):
        for j in range(2):
            for k in range(4):
                ref[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose((Tensor(a) @ Tensor(b)).data, ref, atol=1e-12)


def test_matmul_shape_errors():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_broadcast_is_restricted():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones(2))
    # suffix and scalar forms are fine
    assert (Tensor(np.ones((2, 3))) + Tensor(np.ones(3))).shape == (2, 3)
    assert (Tensor(np.ones((2, 3))) * 2.0).shape == (2, 3)


def test_nonfinite_rejected():
    with pytest.raises(NonFiniteError):
        Tensor([1.0, np.nan])
    with pytest.raises(NonFiniteError):
        T.log(Tensor([0.0]))
    with pytest.raises(NonFiniteError):
        T.exp(Tensor([1000.0]))


def test_softmax_examples():
    np.testing.assert_allclose(T.softmax(Tensor([[0.0, 0.0, 0.0]])).data, [[1 / 3] * 3], atol=1e-15)
    s = T.softmax(Tensor([[1000.0, 0.0]])).data
    assert abs(s[0, 0] - 1) < 1e-12 and s[0, 1] < 1e-12


@given(hnp.arrays(np.float64, (3, 5), elements=st.floats(-1e3, 1e3)))
def test_softmax_rows_sum_to_one(x):
    s = T.softmax(Tensor(x)).data
    assert np.all(s >= 0)
    np.testing.assert_allclose(s.sum(axis=-1), 1.0, atol=1e-12)


def test_masked_softmax_gives_exact_zero():
    mask = np.array([[True, False, True]])
    s = T.softmax(Tensor([[1.0, 50.0, 2.0]]), mask=mask).data
    assert s[0, 1] == 0.0
    with pytest.raises(ShapeError):
        T.softmax(Tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))


def test_layer_norm_examples():
    one, zero = Tensor(np.ones(2)), Tensor(np.zeros(2))
    np.testing.assert_array_equal(T.layer_norm(Tensor([[3.0, 3.0]]), one, zero).data, [[0.0, 0.0]])
    out = T.layer_norm(Tensor([[1.0, -1.0]]), one, zero).data
    expected = 1.0 / math.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(out, [[expected, -expected]], atol=1e-15)


@given(hnp.arrays(np.float64, (4, 6), elements=finite))
def test_layer_norm_rows_centred(x):
    out = T.layer_norm(Tensor(x), Tensor(np.ones(6)), Tensor(np.zeros(6))).data
    assert np.all(np.abs(out.mean(axis=-1)) < 1e-12)


def test_batch_norm_train_and_eval():
    x = np.array([[1.0, -1.0], [-1.0, 1.0]])  # zero mean, unit (biased) variance per column
    st_ = T.BatchNormState.fresh(2)
    out = T.batch_norm(Tensor(x), Tensor(np.ones(2)), Tensor(np.zeros(2)), st_, training=True).data
    # unchanged apart from the eps inside the square root
    np.testing.assert_allclose(out, x / np.sqrt(1.0 + 1e-5), atol=1e-15)
    assert np.max(np.abs(out - x)) < 1e-5
    # running stats: momentum 0.1, unbiased variance (n=2 -> 2.0)
    np.testing.assert_allclose(st_.running_mean, [0.0, 0.0], atol=1e-15)
    np.testing.assert_allclose(st_.running_var, [1.1, 1.1])
    # eval with mean 0 / var 1 is affine only (up to eps)
    ev = T.BatchNormState.fresh(2)
    g, b = Tensor([2.0, 3.0]), Tensor([0.5, -1.0])
    out = T.batch_norm(Tensor(x), g, b, ev, training=False).data
    np.testing.assert_allclose(out, x / np.sqrt(1 + 1e-5) * g.data + b.data, atol=1e-12)
    with pytest.raises(ShapeError):
        T.batch_norm(Tensor(np.ones((1, 2))), g, b, ev, training=True)


@given(hnp.arrays(np.float64, (6, 3), elements=finite))
def test_batch_norm_train_columns_centred(x):
    out = T.batch_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3)), T.BatchNormState.fresh(3), True).data
    assert np.all(np.abs(out.mean(axis=0)) < 1e-9)


def test_dropout_modes_and_rate():
    x = Tensor(np.ones((100, 1000)))
    assert T.dropout(x, 0.0, 1, True) is x
    assert T.dropout(x, 0.5, 1, False) is x
    out = T.dropout(x, 0.3, 7, True).data
    assert abs((out == 0).mean() - 0.3) < 0.01
    assert np.allclose(out[out != 0], 1 / 0.7)
    np.testing.assert_array_equal(out, T.dropout(x, 0.3, 7, True).data)
    with pytest.raises(ValueError):
        T.dropout(x, 1.0, 1, True)


def test_backward_examples():
    x, y = Tensor(2.0, requires_grad=True), Tensor(3.0, requires_grad=True)
    (x * y).backward()
    assert x.grad == 3.0 and y.grad == 2.0
    z = Tensor(0.0, requires_grad=True)
    T.sigmoid(z).backward()
    assert z.grad == 0.25
    with pytest.raises(AutogradError):
        Tensor(1.0).backward()


def test_shared_parent_accumulates():
    x = Tensor([0.3, -0.7], requires_grad=True)
    y = (x * x).sum() + T.sin(x).sum()
    y.backward()
    np.testing.assert_allclose(x.grad, 2 * x.data + np.cos(x.data))
    assert grad_check(lambda t: (t * t).sum() + T.sin(t).sum(), x.data) < 1e-8


def test_tape_is_topological():
    x = Tensor([1.0, 2.0], requires_grad=True)
    y = T.exp(x) * x
    loss = y.sum()
    tape = T.build_tape(loss)
    pos = {id(n): i for i, n in enumerate(tape.nodes)}
    for node in tape.nodes:
        for p in node._parents:
            if p.requires_grad:
                assert pos[id(p)] < pos[id(node)]
    assert len({id(n) for n in tape.nodes}) == len(tape)


def test_no_grad_disables_tape():
    x = Tensor([1.0], requires_grad=True)
    with T.no_grad():
        y = x * 2.0
    assert not y.requires_grad
    assert T.is_grad_enabled()


def test_bce_matches_reference():
    z = np.array([-3.0, 0.0, 2.5, 40.0])
    y = np.array([0.0, 1.0, 1.0, 0.0])
    ref = np.mean(np.logaddexp(0, z) - y * z)
    assert abs(T.bce_with_logits(Tensor(z), y).item() - ref) < 1e-12


def test_gather_and_take_rows(rng):
    x = rng.normal(size=(2, 3, 5))
    idx = np.array([[0, 4], [1, 1], [3, 2]])
    out = T.gather_last(Tensor(x), idx).data
    for b in range(2):
        for i in range(3):
            for j in range(2):
                assert out[b, i, j] == x[b, i, idx[i, j]]
    table = rng.normal(size=(4, 3))
    np.testing.assert_array_equal(T.take_rows(Tensor(table), np.array([[3, 0]])).data, table[[[3, 0]]])
    with pytest.raises(ShapeError):
        T.take_rows(Tensor(table), np.array([4]))
