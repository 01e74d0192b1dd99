"""Tensor/tape unit tests: hand-computable values, finite-difference
oracles, and the documented broadcasting/accumulation contracts."""

import numpy as np
import pytest

from uttembed import ShapeError, Tensor
from uttembed.autograd import concatenate, stack, tape
from uttembed.gradcheck import max_rel_err


@pytest.fixture(autouse=True)
def clean_tape():
    tape().clear()
    yield
    tape().clear()


def test_matmul_identity():
    v = np.arange(3.0).reshape(3, 1)
    out = Tensor(np.eye(3)) @ Tensor(v)
    np.testing.assert_array_equal(out.numpy(), v)


def test_matmul_hand_2x2():
    out = Tensor([[1.0, 2.0], [3.0, 4.0]]) @ Tensor([[1.0], [1.0]])
    np.testing.assert_array_equal(out.numpy(), [[3.0], [7.0]])


def test_matmul_gradient_vs_fd():
    rng = np.random.default_rng(7)
    a = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((3, 5)), requires_grad=True)
    err = max_rel_err(lambda: (a @ b).sum(), [a, b])
    assert err < 1e-6


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
        Tensor(np.ones((2, 3))) @ Tensor(np.ones((2, 3)))


def test_elementwise_trivial_values():
    assert Tensor(0.0).tanh().item() == 0.0
    np.testing.assert_array_equal(
        Tensor([-1.0, 2.0]).relu().numpy(), [0.0, 2.0]
    )


def test_tanh_gradient_at_0p3():
    x = Tensor(np.array(0.3), requires_grad=True)
    assert max_rel_err(lambda: x.tanh(), [x]) < 1e-6


@pytest.mark.parametrize(
    "op",
    [
        lambda a, b: a + b,
        lambda a, b: a - b,
        lambda a, b: a * b,
        lambda a, b: a / b,
        lambda a, b: a.tanh() + b.exp(),
        lambda a, b: a.square() * b.relu(),
    ],
)
def test_elementwise_gradients_vs_fd(op):
    rng = np.random.default_rng(11)
    a = Tensor(rng.standard_normal((3, 4)) + 2.0, requires_grad=True)
    b = Tensor(rng.standard_normal((3, 4)) + 2.0, requires_grad=True)
    assert max_rel_err(lambda: op(a, b).sum(), [a, b]) < 1e-4


def test_broadcasting_trailing_aligned():
    a = Tensor(np.ones((2, 1, 4)), requires_grad=True)
    b = Tensor(np.ones((3, 1)), requires_grad=True)
    out = a + b
    assert out.shape == (2, 3, 4)
    out.sum().backward()
    np.testing.assert_array_equal(a.grad, np.full((2, 1, 4), 3.0))
    np.testing.assert_array_equal(b.grad, np.full((3, 1), 8.0))


def test_non_broadcastable_raises():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))) + Tensor(np.ones((4,)))


def test_softmax_symmetry():
    out = Tensor([0.0, 0.0, 0.0]).softmax(axis=0)
    np.testing.assert_allclose(out.numpy(), np.full(3, 1 / 3), atol=1e-12)


def test_softmax_overflow_safe():
    out = Tensor([1000.0, 0.0]).softmax(axis=0)
    assert np.isfinite(out.numpy()).all()
    np.testing.assert_allclose(out.numpy(), [1.0, 0.0], atol=1e-12)


def test_softmax_sums_to_one_random():
    rng = np.random.default_rng(3)
    x = Tensor(rng.standard_normal((5, 7)) * 50)
    s = x.softmax(axis=1).numpy()
    assert (s >= 0).all()
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-6)


def test_softmax_cross_entropy_gradient_vs_fd():
    rng = np.random.default_rng(5)
    logits = Tensor(rng.standard_normal((4, 6)), requires_grad=True)
    onehot = np.zeros((4, 6))
    onehot[np.arange(4), [1, 0, 5, 2]] = 1.0

    def loss_fn():
        p = logits.softmax(axis=1)
        return -(Tensor(onehot) * (p + 1e-12).log()).sum() / 4.0

    assert max_rel_err(loss_fn, [logits]) < 1e-4


def test_reduction_axis_out_of_range():
    with pytest.raises(ShapeError):
        Tensor(np.ones((2, 3))).sum(axis=2)


def test_max_first_index_tie_break():
    x = Tensor(np.array([[1.0, 3.0, 3.0]]), requires_grad=True)
    x.max(axis=1).sum().backward()
    np.testing.assert_array_equal(x.grad, [[0.0, 1.0, 0.0]])


@pytest.mark.parametrize(
    "reduce_fn",
    [
        lambda x: x.sum(),
        lambda x: x.sum(axis=1).sum(),
        lambda x: x.mean(axis=0).sum(),
        lambda x: x.mean(),
        lambda x: x.max(axis=1).sum(),
        lambda x: x.softmax(axis=1).square().sum(),
        lambda x: x.l2norm(axis=1).sum(),
    ],
)
def test_reduction_gradients_vs_fd(reduce_fn):
    rng = np.random.default_rng(13)
    x = Tensor(rng.standard_normal((4, 5)), requires_grad=True)
    assert max_rel_err(lambda: reduce_fn(x), [x]) < 1e-4


def test_backward_sum_gives_ones():
    x = Tensor(np.zeros((2, 3, 4)), requires_grad=True)
    x.sum().backward()
    np.testing.assert_array_equal(x.grad, np.ones((2, 3, 4)))


def test_backward_half_square_gives_x():
    rng = np.random.default_rng(17)
    data = rng.standard_normal((5, 2))
    x = Tensor(data, requires_grad=True)
    (x.square().sum() / 2.0).backward()
    np.testing.assert_allclose(x.grad, data, rtol=1e-12)


def test_backward_requires_scalar():
    x = Tensor(np.ones(3), requires_grad=True)
    with pytest.raises(ShapeError):
        (x * 2.0).backward()


def test_backward_accumulates_without_reset():
    x = Tensor(np.ones(3), requires_grad=True)
    loss = x.sum()
    loss.backward()
    loss.backward()
    np.testing.assert_array_equal(x.grad, np.full(3, 2.0))


def test_backward_is_linear():
    rng = np.random.default_rng(19)
    data = rng.standard_normal((3, 3))

    def grad_of(fn):
        x = Tensor(data.copy(), requires_grad=True)
        tape().clear()
        fn(x).backward()
        g = x.grad.copy()
        tape().clear()
        return g

    l1 = lambda x: x.square().sum()
    l2 = lambda x: x.tanh().sum()
    combined = grad_of(lambda x: 2.0 * l1(x) + 3.0 * l2(x))
    np.testing.assert_allclose(
        combined, 2.0 * grad_of(l1) + 3.0 * grad_of(l2), atol=1e-6
    )


def test_tape_visits_each_op_once():
    x = Tensor(np.ones(2), requires_grad=True)
    y = x * 2.0
    z = y + y
    assert len(tape()) == 2
    z.sum().backward()
    # dz/dx = 4 through the shared intermediate, not 2 or 8
    np.testing.assert_array_equal(x.grad, np.full(2, 4.0))


def test_getitem_concat_stack_gradients():
    rng = np.random.default_rng(23)
    a = Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    b = Tensor(rng.standard_normal((2, 3)), requires_grad=True)

    def loss_fn():
        joined = concatenate([a, b], axis=0)
        picked = joined[1:5]
        return stack([picked.sum(axis=0), picked.mean(axis=0)]).square().sum()

    assert max_rel_err(loss_fn, [a, b]) < 1e-4


def test_dtype_preserved_float32():
    x = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    y = (x * 2.0).tanh().sum()
    assert y.dtype == np.float32
    y.backward()
    assert x.grad.dtype == np.float32
