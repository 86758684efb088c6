import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from twinrep import tensor as T
from twinrep.tensor import LabelError, NumericError, ShapeError, Tensor, grad_check


def param(x):
    return Tensor(np.asarray(x, dtype=float), requires_grad=True)


def numeric_grad(f, x, h=1e-5):
    """Central differences of scalar f over every entry of ndarray x."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def assert_grad_matches(build, *params, tol=1e-6):
    for p in params:
        p.zero_grad()
    build().backward()
    for p in params:
        with T.no_grad():
            num = numeric_grad(lambda: build().item(), p.data)
        rel = np.abs(p.grad - num) / np.maximum(1.0, np.maximum(np.abs(p.grad), np.abs(num)))
        assert rel.max() < tol


class TestMatmul:
    def test_identity(self):
        a = Tensor(np.eye(2))
        b = Tensor([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(T.matmul(a, b).data, b.data)

    def test_forced_arithmetic(self):
        assert T.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]

    def test_shape_error_names_both_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 3\)"):
            T.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 3))))

    def test_gradient(self):
        rng = np.random.default_rng(0)
        a, b = param(rng.uniform(-2, 2, (3, 3))), param(rng.uniform(-2, 2, (3, 3)))
        assert_grad_matches(lambda: T.matmul(a, b).sum(), a, b)

    def test_batched_gradient(self):
        rng = np.random.default_rng(1)
        a, b = param(rng.uniform(-2, 2, (2, 3, 4))), param(rng.uniform(-2, 2, (2, 4, 2)))
        w = rng.normal(size=(2, 3, 2))
        assert_grad_matches(lambda: (T.batched_matmul(a, b) * w).sum(), a, b)

    def test_batched_transpose_b_matches_explicit(self):
        rng = np.random.default_rng(2)
        a, b = param(rng.normal(size=(2, 3, 4))), param(rng.normal(size=(2, 5, 4)))
        fused = T.batched_matmul(a, b, transpose_b=True).data
        np.testing.assert_allclose(fused, np.matmul(a.data, b.data.transpose(0, 2, 1)), atol=1e-14)
        w = rng.normal(size=(2, 3, 5))
        assert_grad_matches(lambda: (T.batched_matmul(a, b, transpose_b=True) * w).sum(), a, b)

    def test_batched_transpose_b_shape_error(self):
        with pytest.raises(ShapeError, match="transposed"):
            T.batched_matmul(Tensor(np.ones((2, 3, 4))), Tensor(np.ones((2, 4, 5))), transpose_b=True)


class TestLinear:
    def test_matches_matmul_plus_bias(self):
        rng = np.random.default_rng(3)
        x, w, b = rng.normal(size=(4, 3)), rng.normal(size=(3, 2)), rng.normal(size=2)
        out = T.linear(Tensor(x), Tensor(w), Tensor(b)).data
        np.testing.assert_allclose(out, x @ w + b, atol=1e-14)

    @pytest.mark.parametrize("with_bias", [True, False])
    def test_gradient(self, with_bias):
        rng = np.random.default_rng(4)
        x, w = param(rng.normal(size=(4, 3))), param(rng.normal(size=(3, 2)))
        b = param(rng.normal(size=2)) if with_bias else None
        c = rng.normal(size=(4, 2))
        params = (x, w, b) if with_bias else (x, w)
        assert_grad_matches(lambda: (T.linear(x, w, b) * c).sum(), *params)

    @pytest.mark.parametrize("xs,ws,bs", [((4, 3), (2, 2), 2), ((4, 3), (3, 2), 3), ((3,), (3, 2), 2)])
    def test_shape_errors(self, xs, ws, bs):
        with pytest.raises(ShapeError):
            T.linear(Tensor(np.ones(xs)), Tensor(np.ones(ws)), Tensor(np.ones(bs)))


class TestRegroup:
    def test_matches_numpy(self):
        x = np.arange(24.0).reshape(6, 4)
        out = T.regroup(Tensor(x), (2, 3, 2, 2), (0, 2, 1, 3), (4, 3, 2)).data
        np.testing.assert_array_equal(out, x.reshape(2, 3, 2, 2).transpose(0, 2, 1, 3).reshape(4, 3, 2))

    @given(st.permutations([0, 1, 2]))
    @settings(max_examples=6, deadline=None)
    def test_gradient_any_permutation(self, axes):
        rng = np.random.default_rng(5)
        x = param(rng.normal(size=(6, 4)))
        pre = (2, 3, 4)
        post = (int(np.prod([pre[i] for i in axes[:2]])), pre[axes[2]])
        c = rng.normal(size=post)
        assert_grad_matches(lambda: (T.regroup(x, pre, axes, post) * c).sum(), x)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(T.softmax(Tensor([0.0, 0.0, 0.0])).data, [1 / 3] * 3, atol=1e-15)

    def test_large_inputs_do_not_overflow(self):
        np.testing.assert_array_equal(T.softmax(Tensor([1000.0, 1000.0])).data, [0.5, 0.5])

    def test_closed_form(self):
        np.testing.assert_allclose(T.softmax(Tensor([0.0, math.log(3.0)])).data, [0.25, 0.75], atol=1e-15)

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError):
            T.softmax(Tensor([0.0, np.nan]))

    def test_mask_zeroes_weights(self):
        y = T.softmax(Tensor([[1.0, 2.0, 3.0]]), mask=np.array([[True, False, True]])).data
        assert y[0, 1] == 0.0
        assert abs(y.sum() - 1.0) < 1e-12

    def test_gradient(self):
        rng = np.random.default_rng(2)
        x = param(rng.uniform(-2, 2, (3, 4)))
        w = rng.normal(size=(3, 4))
        assert_grad_matches(lambda: (T.softmax(x) * w).sum(), x)

    @settings(max_examples=200, deadline=None)
    @given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=3, max_side=6),
                      elements=st.floats(-1e6, 1e6)))
    def test_rows_are_distributions(self, x):
        y = T.softmax(Tensor(x)).data
        assert np.all(y >= 0)
        np.testing.assert_allclose(y.sum(axis=-1), 1.0, atol=1e-12)


class TestLayerNorm:
    def test_constant_row_collapses_to_bias(self):
        out = T.layer_norm(Tensor([1.0, 1.0, 1.0]), Tensor(np.ones(3)), Tensor(np.zeros(3)), 1e-12)
        np.testing.assert_array_equal(out.data, [0.0, 0.0, 0.0])

    def test_already_normalised(self):
        out = T.layer_norm(Tensor([-1.0, 1.0]), Tensor(np.ones(2)), Tensor(np.zeros(2)), 1e-300)
        np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-15)

    def test_gradient(self):
        rng = np.random.default_rng(3)
        x = param(rng.uniform(-2, 2, (2, 4)))
        gain, bias = param(rng.uniform(0.5, 1.5, 4)), param(rng.uniform(-1, 1, 4))
        w = rng.normal(size=(2, 4))
        assert_grad_matches(lambda: (T.layer_norm(x, gain, bias, 1e-5) * w).sum(), x, gain, bias)


class TestCrossEntropy:
    def test_uniform(self):
        loss = T.cross_entropy(Tensor([[0.0, 0.0, 0.0]]), [0])
        assert loss.item() == pytest.approx(math.log(3.0), abs=1e-15)

    def test_confident_correct(self):
        loss = T.cross_entropy(Tensor([[10.0, -10.0]]), [0]).item()
        assert loss == pytest.approx(math.log1p(math.exp(-20.0)), rel=1e-9)
        assert loss == pytest.approx(2.06e-9, rel=1e-2)

    def test_out_of_range_label(self):
        with pytest.raises(LabelError, match="index 1"):
            T.cross_entropy(Tensor(np.zeros((2, 3))), [0, 3])

    def test_gradient_is_softmax_minus_onehot(self):
        rng = np.random.default_rng(4)
        z = param(rng.uniform(-2, 2, (4, 3)))
        labels = [0, 2, 1, 2]
        T.cross_entropy(z, labels).backward()
        p = np.exp(z.data) / np.exp(z.data).sum(axis=1, keepdims=True)
        expected = (p - np.eye(3)[labels]) / 4
        np.testing.assert_allclose(z.grad, expected, atol=1e-15)
        z.zero_grad()
        assert_grad_matches(lambda: T.cross_entropy(z, labels), z)


class TestElementwiseGradients:
    @pytest.mark.parametrize("op", [T.gelu, lambda x: x.abs(), lambda x: x * x, lambda x: -x])
    def test_unary(self, op):
        rng = np.random.default_rng(5)
        x = param(rng.uniform(-2, 2, (3, 4)))
        w = rng.normal(size=(3, 4))
        assert_grad_matches(lambda: (op(x) * w).sum(), x, tol=1e-4)

    def test_bias_add(self):
        rng = np.random.default_rng(6)
        x, b = param(rng.normal(size=(2, 3, 4))), param(rng.normal(size=4))
        w = rng.normal(size=(2, 3, 4))
        assert_grad_matches(lambda: ((x + b) * w).sum(), x, b)

    def test_add_rejects_general_broadcast(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))) + Tensor(np.ones((2, 1)))

    def test_concat_getitem_reshape_transpose(self):
        rng = np.random.default_rng(7)
        a, b = param(rng.normal(size=(2, 3))), param(rng.normal(size=(2, 2)))
        w = rng.normal(size=(5, 2))

        def f():
            c = T.concat([a, b], axis=-1).transpose(1, 0)
            return (c.reshape(5, 2) * w).sum() + c[1:3].sum()

        assert_grad_matches(f, a, b)

    def test_embedding_scatter_adds_repeated_ids(self):
        table = param(np.arange(6.0).reshape(3, 2))
        T.embedding(table, np.array([[0, 2, 0]])).sum().backward()
        np.testing.assert_array_equal(table.grad, [[2, 2], [0, 0], [1, 1]])

    def test_max_routes_to_argmax(self):
        x = param([[1.0, 5.0], [7.0, 2.0]])
        x.max(axis=0).sum().backward()
        np.testing.assert_array_equal(x.grad, [[0, 1], [1, 0]])


class TestTape:
    def test_accumulates_over_shared_inputs(self):
        x = param([3.0])
        (x + x).sum().backward()
        assert x.grad.tolist() == [2.0]

    def test_diamond_graph(self):
        x = param([2.0])
        y = x * x
        z = (y + y * 3.0).sum()  # 4 x^2
        z.backward()
        assert x.grad.tolist() == [16.0]

    def test_repeated_backward_accumulates(self):
        x = param([1.0, 2.0])
        (x * x).sum().backward()
        (x * x).sum().backward()
        np.testing.assert_array_equal(x.grad, [4.0, 8.0])

    def test_no_grad_builds_no_graph(self):
        x = param([1.0])
        with T.no_grad():
            y = x * 2.0
        assert not y.requires_grad

    def test_topological_order_visits_once(self):
        x = param([1.0])
        y = x * 2.0
        z = y + y
        order = T.topological_order(z.sum())
        ids = [id(n) for n in order]
        assert len(ids) == len(set(ids))
        assert ids.index(id(x)) < ids.index(id(y)) < ids.index(id(z))


class TestDropout:
    def test_identity_outside_training(self):
        x = Tensor(np.ones(10))
        assert T.dropout(x, 0.5, None, training=False) is x

    def test_inverted_scaling_and_reproducible(self):
        x = Tensor(np.ones(10000))
        a = T.dropout(x, 0.1, np.random.default_rng(3), training=True).data
        b = T.dropout(x, 0.1, np.random.default_rng(3), training=True).data
        np.testing.assert_array_equal(a, b)
        assert set(np.unique(a)) <= {0.0, 1.0 / 0.9}
        assert abs(a.mean() - 1.0) < 0.03


class TestGradCheck:
    def test_quadratic(self):
        x = param([1.0, 2.0])
        assert grad_check(lambda: (x * x).sum(), [x]) < 1e-8
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, [2.0, 4.0])

    def test_constant_function(self):
        x = param([1.0, -3.0])
        assert grad_check(lambda: Tensor(5.0) + (x * 0.0).sum(), [x]) == 0.0

    def test_detects_wrong_gradient(self):
        x = param([1.0, 2.0])

        def broken():
            y = x * x
            return Tensor._make(y.data.sum(), (x,), lambda g: ((x, g * x.data),), "broken")

        assert grad_check(broken, [x]) > 0.1
