import numpy as np
import pytest

from mocap_text.core import tensor as T
from mocap_text.core.tensor import GradientTape, Tensor, backward, grad_check
from mocap_text.exceptions import DimensionError, TapeStateError


class TestTensorOps:
    """Forward values of tensor ops"""

    def test_matmul_values(self):
        """Test matmul agrees with numpy"""
        a = np.arange(6.0).reshape(2, 3)
        b = np.arange(12.0).reshape(3, 4)
        assert np.array_equal(T.matmul(a, b).data, a @ b)

    def test_matmul_shape_mismatch(self):
        """Test mismatched inner dimensions raise DimensionError"""
        with pytest.raises(DimensionError, match="matmul shape mismatch"):
            T.matmul(np.ones((2, 3)), np.ones((4, 2)))

    def test_add_shape_mismatch(self):
        """Test non-broadcastable shapes raise DimensionError"""
        with pytest.raises(DimensionError):
            T.add(np.ones((2, 3)), np.ones((4,)))

    def test_sigmoid_of_zero_is_half(self):
        """Test sigmoid(0) is exactly 0.5"""
        assert T.sigmoid(np.zeros(3)).data.tolist() == [0.5, 0.5, 0.5]

    def test_softmax_sums_to_one(self, rng):
        """Test softmax rows are probability vectors"""
        y = T.softmax(rng.normal(size=(4, 7))).data
        assert np.allclose(y.sum(axis=-1), 1.0)
        assert np.all(y > 0)

    def test_softmax_large_values_stable(self):
        """Test max subtraction keeps huge logits finite"""
        y = T.softmax(np.array([1000.0, 1000.0, -1000.0])).data
        assert np.allclose(y, [0.5, 0.5, 0.0])

    def test_softmax_ignores_negative_infinity(self):
        """Test -inf entries get exactly zero weight"""
        y = T.softmax(np.array([0.0, -np.inf, 0.0])).data
        assert y[1] == 0.0
        assert np.allclose(y, [0.5, 0.0, 0.5])

    def test_softmax_empty_raises(self):
        """Test softmax of an empty vector raises DimensionError"""
        with pytest.raises(DimensionError):
            T.softmax(np.zeros((2, 0)))

    def test_log_softmax_matches_log_of_softmax(self, rng):
        """Test log_softmax equals log(softmax)"""
        v = rng.normal(size=(3, 5))
        assert np.allclose(T.log_softmax(v).data, np.log(T.softmax(v).data))

    def test_concat_and_stack_shapes(self):
        """Test concat joins and stack adds an axis"""
        a, b = np.ones((2, 3)), np.zeros((2, 4))
        assert T.concat([a, b], axis=-1).shape == (2, 7)
        assert T.stack([a, a, a], axis=1).shape == (2, 3, 3)

    def test_take_gathers_rows(self):
        """Test embedding lookup returns the indexed rows"""
        table = np.arange(12.0).reshape(4, 3)
        assert np.array_equal(T.take(table, [2, 0]).data, table[[2, 0]])

    def test_pick_one_per_row(self):
        """Test pick selects one entry per row"""
        x = np.arange(6.0).reshape(2, 3)
        assert T.pick(x, [2, 0]).data.tolist() == [2.0, 3.0]

    def test_elementwise_registry(self):
        """Test named elementwise ops and unknown names"""
        assert np.allclose(T.elementwise("tanh", np.zeros(2)).data, 0.0)
        assert T.elementwise("concat", np.ones(2), np.ones(3)).shape == (5,)
        assert "sigmoid" in T.supported_elementwise_ops()
        with pytest.raises(ValueError, match="Unsupported elementwise op"):
            T.elementwise("relu", np.ones(2))

    def test_ndarray_operand_dispatches_to_tensor(self):
        """Test ndarray on the left of an op still yields a Tensor"""
        out = np.ones(3) * Tensor(np.full(3, 2.0))
        assert isinstance(out, Tensor)
        assert out.data.tolist() == [2.0, 2.0, 2.0]

    def test_untracked_ops_record_nothing(self):
        """Test ops on plain tensors stay untracked"""
        out = T.tanh(Tensor(np.ones(2)) * 3.0)
        assert not out.tracked


class TestGradientTape:
    """Reverse-mode gradients"""

    def test_sum_of_squares_gradient(self):
        """Test d/dx sum(x*x) = 2x"""
        tape = GradientTape()
        x = tape.watch(np.array([1.0, -2.0, 3.0]))
        grads = backward(T.sum(x * x))
        assert np.allclose(grads[x.node_id].data, [2.0, -4.0, 6.0])

    def test_unused_leaf_gets_zero_gradient(self):
        """Test leaves outside the loss graph get zeros of their shape"""
        tape = GradientTape()
        x = tape.watch(np.ones(2))
        y = tape.watch(np.ones((3, 2)))
        grads = backward(T.sum(x))
        assert np.array_equal(grads[y.node_id].data, np.zeros((3, 2)))

    def test_shared_input_accumulates(self):
        """Test a tensor used twice sums both gradient paths"""
        tape = GradientTape()
        x = tape.watch(np.array([3.0]))
        grads = backward(T.sum(x * 2.0 + x * 5.0))
        assert np.allclose(grads[x.node_id].data, [7.0])

    def test_backward_twice_raises(self):
        """Test a tape supports a single backward pass"""
        tape = GradientTape()
        x = tape.watch(np.ones(2))
        loss = T.sum(x)
        backward(loss)
        with pytest.raises(TapeStateError):
            backward(loss)

    def test_record_after_backward_raises(self):
        """Test recording on a finished tape raises"""
        tape = GradientTape()
        x = tape.watch(np.ones(2))
        backward(T.sum(x))
        with pytest.raises(TapeStateError):
            T.tanh(x)

    def test_backward_untracked_raises(self):
        """Test backward on a plain tensor raises"""
        with pytest.raises(TapeStateError, match="untracked"):
            backward(Tensor(np.array(1.0)))

    def test_backward_non_scalar_raises(self):
        """Test backward needs a scalar"""
        tape = GradientTape()
        x = tape.watch(np.ones(3))
        with pytest.raises(DimensionError):
            backward(x * 2.0)

    def test_mixed_tapes_raise(self):
        """Test combining tensors from two tapes raises"""
        x = GradientTape().watch(np.ones(2))
        y = GradientTape().watch(np.ones(2))
        with pytest.raises(TapeStateError):
            x + y

    def test_masked_fill_blocks_gradient(self):
        """Test filled entries receive zero gradient"""
        tape = GradientTape()
        x = tape.watch(np.array([1.0, 2.0, 3.0]))
        keep = np.array([True, False, True])
        grads = backward(T.sum(T.masked_fill(x, keep, 0.0) * 4.0))
        assert grads[x.node_id].data.tolist() == [4.0, 0.0, 4.0]


SCALAR_FNS = [
    lambda x: T.sum(T.tanh(x)),
    lambda x: T.sum(T.sigmoid(x) * x),
    lambda x: T.sum(T.exp(x * 0.3)),
    lambda x: T.sum(T.log(x * x + 1.0)),
    lambda x: T.sum(T.softmax(x) * np.arange(12.0).reshape(3, 4)),
    lambda x: T.sum(T.pick(T.log_softmax(x), [0, 3, 1])),
    lambda x: T.mean(T.swapaxes(x, 0, 1) @ x),
    lambda x: T.sum(T.reshape(x, (4, 3)) * np.arange(12.0).reshape(4, 3)),
    lambda x: T.sum(T.select(x, 1, axis=0) * 3.0),
    lambda x: T.sum(T.clip_max(x, 0.2)),
    lambda x: T.sum(T.concat([x, x * x], axis=0)),
    lambda x: T.sum(T.stack([x, -x], axis=2) * 0.5 + 1.0),
    lambda x: T.sum(T.sum(x, axis=1) * np.array([1.0, 2.0, 3.0])),
]


class TestGradCheck:
    """Finite-difference agreement for every differentiable op"""

    @pytest.mark.parametrize("fn", SCALAR_FNS)
    def test_ops_match_finite_differences(self, fn, rng):
        """Test analytic and numeric gradients agree"""
        point = rng.normal(size=(3, 4)) * 0.7
        assert grad_check(fn, point) < 1e-6

    def test_random_points_sweep(self, rng):
        """Test every op on 50 random points at varied scales"""
        for fn in SCALAR_FNS:
            for _ in range(50):
                point = rng.normal(size=(3, 4)) * rng.uniform(0.1, 2.0)
                # keep clip_max away from its kink
                point[np.abs(point - 0.2) < 1e-3] += 0.01
                assert grad_check(fn, point) < 1e-5

    def test_named_point(self, rng):
        """Test grad_check over a dict of named inputs"""
        point = {"W": rng.normal(size=(3, 2)), "x": rng.normal(size=(4, 3))}

        def f(p):
            return T.sum(T.tanh(p["x"] @ p["W"]))

        assert grad_check(f, point) < 1e-6

    def test_take_gradient(self, rng):
        """Test embedding gather gradient, repeated index included"""

        def f(table):
            return T.sum(T.take(table, [1, 1, 2]) * np.arange(9.0).reshape(3, 3))

        assert grad_check(f, rng.normal(size=(4, 3))) < 1e-6

    def test_non_finite_returns_inf(self):
        """Test non-finite evaluations report inf"""
        assert grad_check(lambda x: T.sum(T.log(x)), np.array([-1.0, 2.0])) == float("inf")
