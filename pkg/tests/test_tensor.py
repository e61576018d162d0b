import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from verseqa.tensor import (GraphError, InvalidAxisError, ParameterSet,
                            ShapeError, Tensor, concat, grad_check, matmul,
                            split)


class TestUnaryOps:
    def test_sigmoid_at_zero(self):
        assert Tensor([0.0]).sigmoid().item() == 0.5

    def test_relu(self):
        np.testing.assert_array_equal(Tensor([-1.0, 2.0]).relu().data, [0.0, 2.0])

    def test_softmax_symmetry(self):
        np.testing.assert_allclose(Tensor([0.0, 0.0]).softmax().data, [0.5, 0.5])

    def test_softmax_rows_sum_to_one(self):
        rng = np.random.default_rng(0)
        t = Tensor(rng.normal(size=(5, 7)) * 10)
        rows = t.softmax().data
        np.testing.assert_allclose(rows.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(rows > 0)

    def test_empty_tensor_rejected(self):
        with pytest.raises(ShapeError):
            Tensor(np.zeros((0, 3)))


class TestMatmul:
    def test_identity(self):
        a = Tensor([[1.0, 2.0], [3.0, 4.0]])
        out = matmul(Tensor(np.eye(2)), a)
        np.testing.assert_array_equal(out.data, a.data)

    def test_hand_product(self):
        out = matmul(Tensor([[1.0, 2.0], [3.0, 4.0]]), Tensor([[1.0], [1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0], [7.0]])

    def test_inner_dim_mismatch_names_shapes(self):
        with pytest.raises(ShapeError, match=r"\(2, 3\).*\(4, 2\)"):
            matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 2))))


class TestReduce:
    def test_max(self):
        assert Tensor([1.0, 5.0, 3.0]).max(axis=0).item() == 5.0

    def test_sum_axis0(self):
        out = Tensor([[1.0, 2.0], [3.0, 4.0]]).sum(axis=0)
        np.testing.assert_array_equal(out.data, [4.0, 6.0])

    def test_mean_constant(self):
        assert Tensor([2.0, 2.0, 2.0]).mean(axis=0).item() == 2.0

    def test_axis_out_of_range(self):
        with pytest.raises(InvalidAxisError):
            Tensor([1.0, 2.0]).sum(axis=1)

    def test_max_tie_gradient_goes_to_lowest_index(self):
        t = Tensor([3.0, 3.0, 1.0])
        t.max(axis=0).backward()
        np.testing.assert_array_equal(t.grad, [1.0, 0.0, 0.0])


class TestConcat:
    def test_basic(self):
        out = concat(Tensor([1.0]), Tensor([2.0]), axis=0)
        np.testing.assert_array_equal(out.data, [1.0, 2.0])

    def test_extent_addition(self):
        out = concat(Tensor(np.ones((2, 3))), Tensor(np.ones((2, 5))), axis=1)
        assert out.shape == (2, 8)

    def test_other_axis_mismatch(self):
        with pytest.raises(ShapeError):
            concat(Tensor(np.ones((2, 3))), Tensor(np.ones((3, 3))), axis=1)

    def test_concat_split_identity_values_and_grads(self):
        rng = np.random.default_rng(1)
        a = Tensor(rng.normal(size=(2, 3)))
        b = Tensor(rng.normal(size=(2, 5)))
        joined = concat(a, b, axis=1)
        pa, pb = split(joined, [3, 5], axis=1)
        np.testing.assert_array_equal(pa.data, a.data)
        np.testing.assert_array_equal(pb.data, b.data)
        w = Tensor(rng.normal(size=(2, 8)))
        (concat(pa, pb, axis=1) * w).sum().backward()
        a2, b2 = Tensor(a.data), Tensor(b.data)
        (concat(a2, b2, axis=1) * w).sum().backward()
        np.testing.assert_array_equal(a.grad, a2.grad)
        np.testing.assert_array_equal(b.grad, b2.grad)


class TestBackward:
    def test_square(self):
        x = Tensor([3.0])
        (x * x).sum().backward()
        np.testing.assert_allclose(x.grad, [6.0])

    def test_sigmoid_chain(self):
        w = Tensor([[0.0]])
        x = Tensor([[1.0]])
        (w @ x).sigmoid().sum().backward()
        np.testing.assert_allclose(w.grad, [[0.25]])

    def test_grad_of_loss_wrt_itself_is_one(self):
        x = Tensor([2.0])
        y = (x * x).sum()
        y.backward()
        assert y.grad == 1.0

    def test_non_scalar_loss_rejected(self):
        with pytest.raises(GraphError):
            Tensor([1.0, 2.0]).backward()

    def test_random_chain_matches_finite_differences(self):
        rng = np.random.default_rng(7)
        params = ParameterSet({
            "w1": Tensor(rng.normal(size=(3, 4))),
            "w2": Tensor(rng.normal(size=(4, 2))),
            "b": Tensor(rng.normal(size=(1, 2))),
        })
        x = Tensor(rng.normal(size=(1, 3)))

        def f(p):
            h = (x @ p["w1"]).tanh() @ p["w2"] + p["b"]
            return h.sigmoid().softmax().log().sum() * -1.0

        assert grad_check(f, params) < 1e-6


class TestGradCheck:
    def test_quadratic_bowl_nearly_exact(self):
        params = ParameterSet({"w": Tensor([[1.0, -2.0], [0.5, 3.0]])})
        assert grad_check(lambda p: (p["w"] * p["w"]).sum(), params) < 1e-9

    def test_non_scalar_f_rejected(self):
        params = ParameterSet({"w": Tensor([1.0, 2.0])})
        with pytest.raises(GraphError):
            grad_check(lambda p: p["w"] * 2.0, params)


@settings(max_examples=25, deadline=None)
@given(rows=st.integers(1, 8), cols=st.integers(1, 8),
       seed=st.integers(0, 10_000))
def test_ops_match_finite_differences_on_random_shapes(rows, cols, seed):
    rng = np.random.default_rng(seed)
    params = ParameterSet({"w": Tensor(rng.normal(size=(rows, cols)))})
    v = Tensor(rng.normal(size=(cols, 1)))

    def f(p):
        w = p["w"]
        return ((w @ v).tanh().sigmoid() + (w.relu() @ v) * 0.1).sum() \
            + w.softmax().max(axis=1).sum() * 0.5

    assert grad_check(f, params) < 1e-4


def test_forward_bitwise_deterministic():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(4, 4))
    b = rng.normal(size=(4, 4))
    r1 = (matmul(Tensor(a), Tensor(b)).softmax().sum()).item()
    r2 = (matmul(Tensor(a), Tensor(b)).softmax().sum()).item()
    assert r1 == r2


class TestParameterSet:
    def test_lexicographic_iteration(self):
        ps = ParameterSet({"b": Tensor([1.0]), "a": Tensor([2.0]), "c": Tensor([3.0])})
        assert ps.names() == ["a", "b", "c"]

    def test_rejects_bad_names(self):
        ps = ParameterSet()
        with pytest.raises(ValueError):
            ps.add("", Tensor([1.0]))
        with pytest.raises(ValueError):
            ps.add("ключ", Tensor([1.0]))
        ps.add("x", Tensor([1.0]))
        with pytest.raises(ValueError):
            ps.add("x", Tensor([2.0]))
