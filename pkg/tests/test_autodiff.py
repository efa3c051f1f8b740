"""Engine-level gradient checks against central finite differences."""

import numpy as np
import pytest

from conftest import gradcheck
from coar_zsl import nnops
from coar_zsl.autodiff import Tensor, concat, softmax, stack

rng = np.random.default_rng(7)

TOL = 1e-4


def test_arithmetic_chain():
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4,)) + 3.0
    err = gradcheck(lambda A, B: ((A * B + 1.0) / (B ** 2)).sum(), [a, b])
    assert err < TOL


def test_matmul_2d_and_batched():
    a = rng.normal(size=(3, 4))
    b = rng.normal(size=(4, 2))
    assert gradcheck(lambda A, B: ((A @ B) ** 2).sum(), [a, b]) < TOL
    c = rng.normal(size=(2, 3, 4))
    d = rng.normal(size=(2, 4, 5))
    assert gradcheck(lambda C, D: ((C @ D) ** 2).mean(), [c, d]) < TOL


def test_broadcast_matmul_against_shared_rhs():
    c = rng.normal(size=(2, 3, 4))
    d = rng.normal(size=(4, 5))
    assert gradcheck(lambda C, D: ((C @ D).relu()).sum(), [c, d]) < TOL


def test_pointwise_ops():
    a = rng.normal(size=(4, 3))
    assert gradcheck(lambda A: (A.exp() + 1.0).log().sum(), [a]) < TOL
    assert gradcheck(lambda A: ((A * A) + 0.5).sqrt().sum(), [a]) < TOL
    assert gradcheck(lambda A: A.tanh().sum(), [a]) < TOL
    assert gradcheck(lambda A: nnops.gelu(A).sum(), [a]) < TOL


def test_reductions_and_max():
    a = rng.normal(size=(5, 4))
    assert gradcheck(lambda A: A.mean(axis=0).sum(), [a]) < TOL
    assert gradcheck(lambda A: (A.sum(axis=1, keepdims=True) ** 2).sum(), [a]) < TOL
    assert gradcheck(lambda A: (A.max(axis=1) ** 2).sum(), [a]) < TOL


def test_max_gradient_routes_to_first_tie():
    x = Tensor(np.array([[1.0, 1.0, 0.0]]), requires_grad=True)
    x.max(axis=1).sum().backward()
    np.testing.assert_array_equal(x.grad, [[1.0, 0.0, 0.0]])


def test_softmax_rows_sum_to_one_and_grads():
    a = rng.normal(size=(3, 5)) * 3
    w = rng.normal(size=(3, 5))
    s = softmax(Tensor(a), axis=1)
    np.testing.assert_allclose(s.data.sum(axis=1), 1.0, atol=1e-12)
    assert gradcheck(lambda A: (softmax(A, axis=1) * Tensor(w)).sum(), [a]) < TOL


def test_indexing_shapes_concat_stack():
    a = rng.normal(size=(4, 5))
    b = rng.normal(size=(4, 5))
    assert gradcheck(lambda A: (A[1:3, ::2] ** 2).sum(), [a]) < TOL
    assert gradcheck(
        lambda A: (A[np.array([0, 2]), np.array([1, 3])] ** 2).sum(), [a]) < TOL
    assert gradcheck(
        lambda A, B: (concat([A, B], axis=1) ** 2).mean(), [a, b]) < TOL
    assert gradcheck(
        lambda A, B: (stack([A, B], axis=0) ** 3).sum(), [a, b]) < TOL
    assert gradcheck(
        lambda A: (A.reshape(2, 10).transpose(1, 0) ** 2).sum(), [a]) < TOL


def test_conv_pool_resize():
    x = rng.normal(size=(2, 6, 6, 2))
    w = rng.normal(size=(3, 3, 2, 4)) * 0.5
    b = rng.normal(size=(4,))
    assert gradcheck(
        lambda X, W, B: (nnops.conv2d(X, W, B, pad=1) ** 2).sum(),
        [x, w, b]) < TOL
    assert gradcheck(lambda X: (nnops.maxpool2x2(X) ** 2).sum(), [x]) < TOL
    assert gradcheck(
        lambda X: (nnops.bilinear_resize(X, 3, 4) ** 2).sum(), [x]) < TOL
    assert gradcheck(
        lambda X: (nnops.bilinear_resize(X, 9, 5) ** 2).sum(), [x]) < TOL


def test_layer_norm_gradients():
    x = rng.normal(size=(3, 6))
    g = np.abs(rng.normal(size=(6,))) + 0.5
    b = rng.normal(size=(6,))
    assert gradcheck(
        lambda X, G, B: (nnops.layer_norm(X, G, B) ** 2).sum(), [x, g, b]) < TOL


def test_gradient_accumulates_over_reuse():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * x + x * 3.0  # x appears twice
    y.sum().backward()
    np.testing.assert_allclose(x.grad, [2 * 2.0 + 3.0])


def test_backward_needs_scalar_without_seed():
    x = Tensor(np.ones((2, 2)), requires_grad=True)
    with pytest.raises(ValueError):
        (x * 2).backward()


def test_detach_blocks_gradient():
    x = Tensor(np.array([3.0]), requires_grad=True)
    (x.detach() * x).sum().backward()
    np.testing.assert_allclose(x.grad, [3.0])
