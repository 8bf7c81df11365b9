import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mambax import tensor as T
from mambax.errors import ContractError, InternalError, NumericError
from mambax.gradcheck import gradcheck
from mambax.tensor import Tensor, backward, finite_checks, no_grad

TOL = 1e-4


def leaf(rng, *shape, lo=-1.0, hi=1.0):
    return Tensor(rng.uniform(lo, hi, size=shape), requires_grad=True)


def test_construction_rejects_non_finite():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        Tensor([np.inf])


def test_grad_of_sum_is_ones(rng):
    x = leaf(rng, 3, 4)
    backward(x.sum())
    np.testing.assert_array_equal(x.grad, np.ones((3, 4)))


def test_grad_of_sum_of_squares():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    backward((x * x).sum())
    np.testing.assert_array_equal(x.grad, [2.0, 4.0, 6.0])


def test_backward_requires_scalar(rng):
    with pytest.raises(ContractError):
        backward(leaf(rng, 2) * 2.0)


def test_backward_detects_cycle(rng):
    x = leaf(rng, 2)
    y = x * 2.0
    z = y.sum()
    y._parents = (z,)  # corrupt the graph on purpose
    with pytest.raises(InternalError):
        backward(z)


def test_tape_released_after_backward(rng):
    x = leaf(rng, 3)
    y = (x * x).sum()
    backward(y)
    g = x.grad.copy()
    # leaves accumulate; released interior nodes refuse a second pass
    assert y._parents == ()
    backward((x * 3.0).sum())
    np.testing.assert_allclose(x.grad, g + 3.0)


def test_no_grad_records_nothing(rng):
    x = leaf(rng, 3)
    with no_grad():
        y = (x * x).sum()
    assert not y.requires_grad and y._parents == ()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_finite_checks_flag_names_op():
    x = Tensor([1000.0], requires_grad=True)
    with finite_checks(True):
        with pytest.raises(NumericError, match="exp"):
            T.exp(x)
    assert np.isinf(T.exp(x).data).all()  # unchecked outside the block


def test_broadcast_gradients_reduce(rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 4)
    assert gradcheck(lambda: a * b + b, [a, b]) < TOL


UNARY = {
    "exp": T.exp,
    "log": lambda x: T.log(x + 2.0),
    "sqrt": lambda x: T.sqrt(x + 2.0),
    "abs": lambda x: T.tabs(x + 0.05),
    "tanh": T.tanh,
    "sigmoid": T.sigmoid,
    "silu": T.silu,
    "softplus": T.softplus,
    "power": lambda x: T.power(x + 2.0, 1.7),
    "softmax0": lambda x: T.softmax(x, 0),
    "softmax1": lambda x: T.softmax(x, 1),
    "sum_axis": lambda x: T.tsum(x, axis=1, keepdims=True),
    "mean": lambda x: T.mean(x, axis=0),
    "reshape": lambda x: T.reshape(x, (4, 3)),
    "transpose": lambda x: T.transpose(x, (1, 0)),
    "flip": lambda x: T.flip(x, 1),
    "getitem_slice": lambda x: x[1:, ::2],
    "getitem_fancy": lambda x: x[np.array([0, 0, 2])],
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_gradcheck(name, rng):
    x = leaf(rng, 3, 4)
    assert gradcheck(lambda: UNARY[name](x), [x]) < TOL


BINARY = {
    "add": T.add,
    "sub": T.sub,
    "mul": T.mul,
    "div": lambda a, b: T.div(a, b + 3.0),
    "matmul": lambda a, b: T.matmul(a, T.transpose(b, (1, 0))),
    "concat": lambda a, b: T.concat([a, b], axis=1),
    "stack": lambda a, b: T.stack([a, b], axis=0),
}


@pytest.mark.parametrize("name", sorted(BINARY))
def test_binary_gradcheck(name, rng):
    a, b = leaf(rng, 3, 4), leaf(rng, 3, 4)
    assert gradcheck(lambda: BINARY[name](a, b), [a, b]) < TOL


def test_composite_chain_gradcheck(rng):
    x, w = leaf(rng, 5, 3), leaf(rng, 3, 2)
    f = lambda: T.softmax(T.silu(x @ w) * T.sigmoid(x[:, :2]), 1).sum(axis=0)  # noqa: E731
    assert gradcheck(f, [x, w]) < TOL


def test_gradcheck_catches_a_wrong_adjoint(rng):
    x = leaf(rng, 4)

    def bad():
        return T._result(x.data**2, (x,), lambda g: (g * x.data,), "bad_square")  # missing factor 2

    assert gradcheck(bad, [x]) > 0.1


@given(arrays(np.float64, st.integers(1, 6), elements=st.floats(-30, 30)))
def test_softmax_is_distribution(v):
    p = T.softmax(Tensor(v), 0).data
    assert (p >= 0).all()
    assert abs(p.sum() - 1.0) <= 1e-12


@given(arrays(np.float64, st.integers(1, 8), elements=st.floats(-50, 50)))
def test_softplus_positive_and_stable(v):
    out = T.softplus(Tensor(v)).data
    assert (out > 0).all() and np.isfinite(out).all()
    np.testing.assert_allclose(out, np.logaddexp(0.0, v), rtol=1e-14)
