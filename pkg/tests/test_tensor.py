import numpy as np
import pytest

from resgan.errors import BroadcastError, ContractError, DomainError, ShapeError
from resgan.tensor import Tensor, concat, elementwise, grad_check, graph_nodes, matmul, reduce


def rand(shape, seed, lo=-1.0, hi=1.0):
    rng = np.random.default_rng(seed)
    return rng.uniform(lo, hi, size=shape)


class TestElementwise:
    def test_sigmoid_symmetry_point(self):
        assert Tensor(0.0).sigmoid().item() == 0.5

    def test_log_identity(self):
        assert Tensor(1.0).log().item() == 0.0

    def test_leaky_relu_definition(self):
        out = Tensor([-1.0, 2.0]).leaky_relu(slope=0.2)
        np.testing.assert_allclose(out.data, [-0.2, 2.0])

    def test_log_rejects_nonpositive(self):
        with pytest.raises(DomainError):
            Tensor([1.0, 0.0]).log()
        with pytest.raises(DomainError):
            Tensor([-3.0]).log()

    def test_broadcast_mismatch_raises(self):
        with pytest.raises(BroadcastError):
            Tensor(np.zeros((2, 3))) + Tensor(np.zeros((2, 4)))

    def test_trailing_broadcast(self):
        a = Tensor(np.ones((2, 3, 4)))
        b = Tensor(np.arange(4.0))
        out = a + b
        assert out.shape == (2, 3, 4)
        np.testing.assert_allclose(out.data[1, 2], 1.0 + np.arange(4.0))

    def test_broadcast_matches_scalar_reference(self):
        # small-tensor broadcast vs an explicit scalar loop
        a = rand((3, 1, 4), 0)
        b = rand((2, 4), 1)
        out = (Tensor(a) * Tensor(b)).data
        assert out.shape == (3, 2, 4)
        for i in range(3):
            for j in range(2):
                for k in range(4):
                    assert out[i, j, k] == a[i, 0, k] * b[j, k]

    def test_dispatcher_surface(self):
        a = Tensor([1.0, 2.0])
        b = Tensor([3.0, 4.0])
        np.testing.assert_allclose(elementwise("add", a, b).data, [4.0, 6.0])
        np.testing.assert_allclose(elementwise("sub", a, b).data, [-2.0, -2.0])
        np.testing.assert_allclose(elementwise("mul", a, b).data, [3.0, 8.0])
        np.testing.assert_allclose(elementwise("negate", a).data, [-1.0, -2.0])
        np.testing.assert_allclose(elementwise("tanh", a).data, np.tanh([1.0, 2.0]))
        with pytest.raises(ContractError):
            elementwise("spin", a)

    def test_forward_is_deterministic(self):
        x = rand((64, 37), 7)
        first = (Tensor(x).sigmoid() * Tensor(x).tanh()).sum().item()
        second = (Tensor(x).sigmoid() * Tensor(x).tanh()).sum().item()
        assert first == second


class TestMatmul:
    def test_identity(self):
        out = matmul(Tensor(np.eye(2)), Tensor([[3.0, 1.0], [4.0, 1.0]]))
        np.testing.assert_array_equal(out.data, [[3.0, 1.0], [4.0, 1.0]])

    def test_arithmetic(self):
        out = matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
        np.testing.assert_array_equal(out.data, [[11.0]])

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            matmul(Tensor(np.zeros((5, 7))), Tensor(np.zeros((6, 3))))

    def test_gradient_vs_finite_differences(self):
        b = rand((7, 3), 11)

        def fn(a):
            return (matmul(a, Tensor(b)).sigmoid()).mean()

        err = grad_check(fn, Tensor(rand((5, 7), 10)))
        assert err < 1e-4

        a = rand((5, 7), 12)

        def fn_b(bt):
            return (matmul(Tensor(a), bt).tanh()).sum()

        assert grad_check(fn_b, Tensor(b)) < 1e-4


class TestConcat:
    def test_shape_arithmetic(self):
        a = Tensor(np.zeros((2, 3, 4, 4)))
        b = Tensor(np.zeros((2, 5, 4, 4)))
        assert concat([a, b], axis=1).shape == (2, 8, 4, 4)

    def test_single_input_identity(self):
        a = rand((3, 2), 2)
        np.testing.assert_array_equal(concat([Tensor(a)], axis=0).data, a)

    def test_round_trip_exact(self):
        a = rand((2, 3, 4), 3)
        b = rand((2, 2, 4), 4)
        joined = concat([Tensor(a), Tensor(b)], axis=1)
        back_a = joined[:, 0:3, :].data
        back_b = joined[:, 3:5, :].data
        assert (back_a == a).all() and (back_b == b).all()

    def test_non_axis_mismatch(self):
        with pytest.raises(ShapeError):
            concat([Tensor(np.zeros((2, 3))), Tensor(np.zeros((3, 3)))], axis=1)

    def test_backward_routes_slices(self):
        a = Tensor(rand((2, 3), 5), requires_grad=True)
        b = Tensor(rand((2, 2), 6), requires_grad=True)
        out = concat([a, b], axis=1)
        (out * Tensor(np.arange(10.0).reshape(2, 5))).sum().backward()
        np.testing.assert_array_equal(a.grad, [[0.0, 1.0, 2.0], [5.0, 6.0, 7.0]])
        np.testing.assert_array_equal(b.grad, [[3.0, 4.0], [8.0, 9.0]])


class TestReduce:
    def test_mean_arithmetic(self):
        assert Tensor([1.0, 2.0, 3.0, 6.0]).mean().item() == 3.0

    def test_empty_axis_list_is_full_reduction(self):
        out = reduce("sum", Tensor(np.ones((2, 3))), axes=[])
        assert out.shape == () and out.item() == 6.0

    def test_invalid_axis(self):
        with pytest.raises(ShapeError):
            Tensor(np.ones((2, 3))).sum(axes=[2])

    def test_mean_gradient_is_uniform(self):
        x = Tensor(rand((4, 5), 8), requires_grad=True)
        x.mean().backward()
        np.testing.assert_allclose(x.grad, np.full((4, 5), 1.0 / 20.0))

    def test_axis_subset_with_keepdims(self):
        x = rand((2, 3, 4), 9)
        out = Tensor(x).mean(axes=(0, 2), keepdims=True)
        assert out.shape == (1, 3, 1)
        np.testing.assert_allclose(out.data, x.mean(axis=(0, 2), keepdims=True))


class TestBackward:
    def test_sum_gradient_all_ones(self):
        x = Tensor(rand((3, 4, 2), 20), requires_grad=True)
        x.sum().backward()
        np.testing.assert_array_equal(x.grad, np.ones((3, 4, 2)))

    def test_sigmoid_dot_hand_derivative(self):
        # loss = sigmoid(w.x) at w = 0: grad(w) = 0.25 * x
        x = rand((6,), 21)
        w = Tensor(np.zeros(6), requires_grad=True)
        (w * Tensor(x)).sum().sigmoid().backward()
        np.testing.assert_allclose(w.grad, 0.25 * x, rtol=0, atol=1e-15)

    def test_non_scalar_rejected(self):
        t = Tensor(np.ones(3), requires_grad=True)
        with pytest.raises(ContractError):
            t.backward()

    def test_repeated_backward_accumulates(self):
        x = Tensor([2.0], requires_grad=True)
        loss = (x * x).sum()
        loss.backward()
        np.testing.assert_allclose(x.grad, [4.0])
        loss.backward()
        np.testing.assert_allclose(x.grad, [8.0])

    def test_diamond_graph_counts_once(self):
        # y = x*x + x: reuse of x must contribute exactly 2x + 1
        x = Tensor([3.0], requires_grad=True)
        (x * x + x).sum().backward()
        np.testing.assert_allclose(x.grad, [7.0])

    def test_tape_order_is_topological(self):
        x = Tensor([1.0], requires_grad=True)
        y = x * 2.0
        z = y + x
        order = graph_nodes(z.sum())
        pos = {id(t): i for i, t in enumerate(order)}
        for t in order:
            if t.node is not None:
                for inp in t.node.inputs:
                    if inp.requires_grad:
                        assert pos[id(inp)] < pos[id(t)]

    def test_detach_blocks_gradient(self):
        x = Tensor([2.0], requires_grad=True)
        (x.detach() * x).sum().backward()
        np.testing.assert_allclose(x.grad, [2.0])


class TestGradCheck:
    def test_linear_is_exact(self):
        err = grad_check(lambda t: t.sum(), Tensor(rand((3, 3), 30)))
        assert err < 1e-10

    def test_mean_sigmoid(self):
        err = grad_check(lambda t: t.sigmoid().mean(), Tensor(rand((4, 5), 31)))
        assert err < 1e-6

    def test_branchy_fn_with_nudged_inputs(self):
        x = rand((4, 4), 32)
        x = np.where(np.abs(x) < 1e-3, 1e-3, x)  # keep relu kink away
        err = grad_check(lambda t: t.relu().mean(), Tensor(x))
        assert err < 1e-4

    def test_non_scalar_fn_rejected(self):
        with pytest.raises(ContractError):
            grad_check(lambda t: t * 2.0, Tensor(np.ones(3)))

    @pytest.mark.parametrize("seed", range(6))
    def test_randomized_composite_ops(self, seed):
        rng = np.random.default_rng(100 + seed)
        x = rng.uniform(-2.0, 2.0, size=(3, 4))
        x = np.where(np.abs(x) < 1e-3, 1e-3, x)

        def fn(t):
            u = t.leaky_relu(0.2).tanh() + t.sigmoid()
            return (u * u).mean()

        assert grad_check(fn, Tensor(x)) < 1e-4

    def test_division_and_sqrt(self):
        x = rand((3, 3), 40, lo=0.5, hi=2.0)

        def fn(t):
            return (t.sqrt() / (t + 1.0)).sum()

        assert grad_check(fn, Tensor(x)) < 1e-6
