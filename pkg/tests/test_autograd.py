import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from longirisk import autograd as ag
from longirisk.autograd import Tensor
from longirisk.errors import ContractError, DimensionError, InvalidMaskError
from longirisk.optim import Adam
from longirisk.rng import make_rng
from oracles import check_op_gradient, numeric_grad, op_cases


@pytest.mark.parametrize("case", op_cases(make_rng(0)), ids=lambda c: c[0])
def test_gradients_match_central_differences(case):
    name, build, inputs = case
    assert check_op_gradient(build, inputs) < 1e-4, name


def test_matmul_identity_and_hand_product():
    m = np.array([[1.0, 2.0], [3.0, 4.0]])
    assert np.array_equal(ag.matmul(Tensor(np.eye(2)), Tensor(m)).data, m)
    assert ag.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_sum_gradient_rows_are_row_sums_of_b(rng):
    a = Tensor(rng.normal(size=(3, 4)), requires_grad=True)
    b = rng.normal(size=(4, 2))
    ag.tsum(ag.matmul(a, Tensor(b))).backward()
    for row in a.grad:
        np.testing.assert_allclose(row, b.sum(axis=1), rtol=0, atol=1e-12)


def test_matmul_shape_mismatch_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(2, 3\)"):
        ag.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_elementwise_rejects_general_broadcasting():
    with pytest.raises(DimensionError):
        ag.add(Tensor(np.zeros((2, 3))), Tensor(np.zeros(3)))


def test_relu_sigmoid_values():
    assert ag.relu(Tensor([-1.0, 0.0, 2.0])).data.tolist() == [0.0, 0.0, 2.0]
    assert ag.sigmoid(Tensor(0.0)).data == 0.5


def test_dropout_degenerate_and_eval_identity(rng):
    x = Tensor(rng.normal(size=(4, 5)))
    assert np.array_equal(ag.dropout(x, 0.0, rng, True).data, x.data)
    assert np.array_equal(ag.dropout(x, 0.5, rng, False).data, x.data)
    assert np.array_equal(ag.dropout(x, 0.5, None, False).data, x.data)
    with pytest.raises(ContractError):
        ag.dropout(x, 0.5, None, True)


def test_dropout_drop_rate_and_scaling():
    x = Tensor(np.ones(200_000))
    y = ag.dropout(x, 0.25, make_rng(3), True).data
    kept = y != 0
    assert abs(1 - kept.mean() - 0.25) < 0.005
    assert np.allclose(y[kept], 1 / 0.75)


def test_softmax_examples():
    np.testing.assert_allclose(ag.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)
    assert ag.softmax(Tensor([1000.0, 1000.0])).data.tolist() == [0.5, 0.5]
    e = [math.exp(v) for v in (1.0, 2.0, 3.0)]
    expected = [v / sum(e) for v in e]
    np.testing.assert_allclose(ag.softmax(Tensor([1.0, 2.0, 3.0])).data, expected, rtol=0, atol=1e-12)


def test_softmax_masked_entries_exactly_zero_and_all_masked_rejected():
    out = ag.softmax(Tensor([[1.0, 5.0, 2.0]]), mask=np.array([[True, False, True]])).data
    assert out[0, 1] == 0.0
    assert abs(out.sum() - 1.0) < 1e-12
    with pytest.raises(InvalidMaskError):
        ag.softmax(Tensor([[1.0, 2.0]]), mask=np.array([[False, False]]))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 6)),
              elements=st.floats(-50, 50)),
       st.data())
def test_softmax_rows_sum_to_one(x, data):
    mask = data.draw(arrays(np.bool_, x.shape))
    mask[:, 0] = True
    out = ag.softmax(Tensor(x), axis=-1, mask=mask).data
    np.testing.assert_allclose(out.sum(axis=-1), 1.0, atol=1e-9)
    assert np.all(out[~mask] == 0.0)


def test_backward_sum_gives_ones(rng):
    x = Tensor(rng.normal(size=(2, 3, 4)), requires_grad=True)
    ag.tsum(x).backward()
    assert np.array_equal(x.grad, np.ones((2, 3, 4)))


def test_sigmoid_of_dot_product_gradient(rng):
    w, x = rng.normal(size=6), rng.normal(size=6)
    wt = Tensor(w, requires_grad=True)
    ag.sigmoid(ag.tsum(ag.mul(wt, Tensor(x)))).backward()
    fd = numeric_grad(lambda v: 1 / (1 + math.exp(-float(v @ x))), w)
    np.testing.assert_allclose(wt.grad, fd, rtol=1e-6)


def test_backward_contracts(rng):
    x = Tensor(rng.normal(size=3), requires_grad=True)
    loss = ag.tsum(ag.mul(x, x))
    loss.backward()
    with pytest.raises(ContractError):
        loss.backward()
    with pytest.raises(ContractError):
        ag.mul(x, 2.0).backward()
    with pytest.raises(ContractError):
        ag.tsum(Tensor(np.ones(3))).backward()


def test_gradients_accumulate_across_branches():
    x = Tensor(np.array([2.0]), requires_grad=True)
    ag.tsum(ag.add(ag.mul(x, x), ag.mul(x, 3.0))).backward()
    assert x.grad.tolist() == [7.0]


def test_no_grad_records_nothing():
    x = Tensor(np.ones(2), requires_grad=True)
    with ag.no_grad():
        y = ag.mul(x, 2.0)
    assert not y.requires_grad


def test_determinism_same_seed_bit_identical():
    from longirisk.layers import TransformerBlock

    def run():
        rng = make_rng(9)
        block = TransformerBlock(8, 2, rng)
        x = Tensor(rng.normal(size=(2, 5, 8)), requires_grad=True)
        out = block(x, dropout=0.25, train=True, rng=rng)
        ag.tsum(out).backward()
        return out.data, x.grad

    (a, ga), (b, gb) = run(), run()
    assert np.array_equal(a, b) and np.array_equal(ga, gb)


def _adam_reference(w, grads_fn, steps, lr, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    for t in range(1, steps + 1):
        g = grads_fn(w)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        w = w - lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    return w


def _adam_run(w0, target, steps, lr, wd=0.0):
    w = Tensor(np.array([w0]), requires_grad=True)
    opt = Adam([w], lr=lr, weight_decay=wd)
    for _ in range(steps):
        opt.zero_grad()
        d = ag.sub(w, target)
        ag.tsum(ag.mul(d, d)).backward()
        opt.step()
    return float(w.data[0])


def test_adam_descends_on_square():
    assert _adam_run(1.0, 0.0, 1, lr=0.1) < 1.0


def test_adam_without_decay_matches_plain_adam():
    ours = _adam_run(1.0, 3.0, 25, lr=0.05, wd=0.0)
    ref = _adam_reference(1.0, lambda w: 2 * (w - 3.0), 25, lr=0.05)
    assert ours == pytest.approx(ref, abs=1e-12)


def test_adam_weight_decay_adds_l2_gradient():
    ours = _adam_run(1.0, 3.0, 10, lr=0.05, wd=0.1)
    ref = _adam_reference(1.0, lambda w: 2 * (w - 3.0) + 0.1 * w, 10, lr=0.05)
    assert ours == pytest.approx(ref, abs=1e-12)


def test_adam_converges():
    assert abs(_adam_run(0.0, 3.0, 500, lr=0.1) - 3.0) < 0.01


def test_adam_missing_gradient_is_contract_error():
    w = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(ContractError):
        Adam([w]).step()
