import numpy as np
import pytest

from classes.errors import ShapeError, TapeError
from engine import ops
from engine.tensor_class import Tensor, backward, clear_tape, current_tape, no_grad, precision
from engine.gradcheck import finite_diff_check

from conftest import weighted_sum

TOL = 1e-3


def check(op, x, rng, h=1e-3):
    """Gradient check of sum(op(x) * w) for a fixed random w."""
    with no_grad():
        shape = op(x).shape
    weights = Tensor(rng.standard_normal(shape))
    return finite_diff_check(lambda t: weighted_sum(op(t), weights), x, h=h)


class TestTape:
    def test_backward_needs_scalar(self):
        x = Tensor(np.ones((2, 2)), requires_grad=True)
        y = ops.mul(x, 2.0)
        with pytest.raises(TapeError):
            backward(y)
        clear_tape()

    def test_backward_on_empty_tape(self):
        clear_tape()
        with pytest.raises(TapeError):
            backward(Tensor(1.0))

    def test_no_grad_records_nothing(self):
        clear_tape()
        x = Tensor(np.ones(3), requires_grad=True)
        with no_grad():
            ops.reduce_sum(ops.mul(x, x))
        assert len(current_tape()) == 0

    def test_full_reduction_is_zero_dimensional(self):
        x = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
        loss = ops.reduce_sum(x)
        assert loss.shape == ()
        assert ops.reduce_mean(x).shape == ()
        assert Tensor(2.5).shape == ()
        backward(loss)
        np.testing.assert_array_equal(x.grad, np.ones((2, 3)))

    def test_leaf_gradients_accumulate(self):
        x = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
        for _ in range(2):
            backward(ops.reduce_sum(ops.mul(x, x)))
        np.testing.assert_allclose(x.grad, 2 * 2.0 * x.data)

    def test_intermediate_gradients_are_released(self):
        x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
        middle = ops.mul(x, 3.0)
        backward(ops.reduce_sum(middle))
        assert middle.grad is None
        np.testing.assert_allclose(x.grad, [3.0, 3.0])
        assert len(current_tape()) == 0

    def test_precision_context(self):
        with precision(np.float64):
            assert Tensor(1.0).data.dtype == np.float64
        assert Tensor(1.0).data.dtype == np.float32

    def test_gradcheck_restores_input(self, rng):
        x = Tensor(rng.standard_normal(4))
        original = x.data.copy()
        finite_diff_check(lambda t: ops.reduce_sum(ops.mul(t, t)), x)
        assert x.data.dtype == np.float32
        assert not x.requires_grad
        np.testing.assert_array_equal(x.data, original)

    def test_gradcheck_central_float32(self, rng):
        x = Tensor(rng.uniform(0.5, 1.5, 4))
        assert finite_diff_check(lambda t: ops.reduce_sum(ops.mul(t, t)), x, h=1e-2, stencil='central') < 1e-3
        assert x.data.dtype == np.float32
        with pytest.raises(ValueError):
            finite_diff_check(lambda t: ops.reduce_sum(t), x, stencil='forward')


class TestElementwise:
    def test_broadcast_add_mul(self, grad_rng):
        other = Tensor(grad_rng.standard_normal((1, 3, 1)))
        x = Tensor(grad_rng.standard_normal((2, 3, 4)))
        assert check(lambda t: ops.mul(ops.add(t, other), other), x, grad_rng) < TOL
        assert check(lambda t: ops.mul(x, t), other, grad_rng) < TOL

    def test_div(self, grad_rng):
        denominator = Tensor(grad_rng.uniform(1.0, 2.0, (3, 4)))
        x = Tensor(grad_rng.standard_normal((3, 4)))
        assert check(lambda t: ops.div(t, denominator), x, grad_rng) < TOL
        assert check(lambda t: ops.div(x, t), denominator, grad_rng) < TOL

    @pytest.mark.parametrize('kind', ['sigmoid', 'gelu', 'exp', 'square'])
    def test_unary(self, grad_rng, kind):
        x = Tensor(grad_rng.standard_normal((3, 5)))
        assert check(lambda t: ops.unary_map(t, kind), x, grad_rng) < TOL

    def test_log_and_sqrt_eps(self, grad_rng):
        x = Tensor(grad_rng.uniform(0.5, 2.0, (4, 4)))
        assert check(lambda t: ops.unary_map(t, 'log'), x, grad_rng) < TOL
        assert check(lambda t: ops.unary_map(t, 'sqrt_eps', eps=1e-3), x, grad_rng) < TOL

    def test_abs_away_from_zero(self, grad_rng):
        x = Tensor(grad_rng.uniform(0.5, 1.5, (3, 3)) * grad_rng.choice([-1.0, 1.0], (3, 3)))
        assert check(lambda t: ops.unary_map(t, 'abs'), x, grad_rng) < TOL

    def test_sqrt_eps_zero_subgradient(self):
        x = Tensor(np.zeros(3), requires_grad=True)
        backward(ops.reduce_sum(ops.unary_map(x, 'sqrt_eps', eps=0.0)))
        np.testing.assert_array_equal(x.grad, np.zeros(3))

    def test_unknown_unary_kind(self):
        with pytest.raises(ValueError):
            ops.unary_map(Tensor(1.0), 'tanh')


class TestLinear:
    def test_matmul(self, grad_rng):
        a = Tensor(grad_rng.standard_normal((2, 3, 4)))
        b = Tensor(grad_rng.standard_normal((4, 5)))
        assert check(lambda t: ops.matmul(t, b), a, grad_rng) < TOL
        assert check(lambda t: ops.matmul(a, t), b, grad_rng) < TOL

    def test_matmul_shape_error(self):
        with pytest.raises(ShapeError, match=r'\(2, 3\).*\(4, 5\)'):
            ops.matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))

    def test_conv_pointwise(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((2, 3, 4, 4)))
        w = Tensor(grad_rng.standard_normal((5, 3)))
        bias = Tensor(grad_rng.standard_normal(5))
        assert ops.conv_pointwise(x, w, bias).shape == (2, 5, 4, 4)
        assert check(lambda t: ops.conv_pointwise(t, w, bias), x, grad_rng) < TOL
        assert check(lambda t: ops.conv_pointwise(x, t, bias), w, grad_rng) < TOL
        assert check(lambda t: ops.conv_pointwise(x, w, t), bias, grad_rng) < TOL

    def test_conv_pointwise_mismatch(self):
        with pytest.raises(ShapeError):
            ops.conv_pointwise(Tensor(np.ones((1, 3, 2, 2))), Tensor(np.ones((4, 2))))

    def test_conv_depthwise(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((1, 3, 5, 4)))
        w = Tensor(grad_rng.standard_normal((3, 3, 3)))
        bias = Tensor(grad_rng.standard_normal(3))
        assert check(lambda t: ops.conv_depthwise3x3(t, w, bias), x, grad_rng) < TOL
        assert check(lambda t: ops.conv_depthwise3x3(x, t, bias), w, grad_rng) < TOL

    def test_conv_depthwise_matches_direct_sum(self, rng):
        x = rng.standard_normal((1, 2, 4, 4))
        w = rng.standard_normal((2, 3, 3))
        with precision(np.float64):
            out = ops.conv_depthwise3x3(Tensor(x), Tensor(w)).data
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        expected = np.zeros_like(x)
        for c in range(2):
            for i in range(4):
                for j in range(4):
                    expected[0, c, i, j] = np.sum(padded[0, c, i:i + 3, j:j + 3] * w[c])
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_conv2d_strided(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((1, 2, 8, 8)))
        w = Tensor(grad_rng.standard_normal((3, 2, 3, 3)))
        bias = Tensor(grad_rng.standard_normal(3))
        assert ops.conv2d(x, w, bias, stride=2).shape == (1, 3, 4, 4)
        assert check(lambda t: ops.conv2d(t, w, bias, stride=2), x, grad_rng) < TOL
        assert check(lambda t: ops.conv2d(x, t, bias, stride=2), w, grad_rng) < TOL


class TestNormalization:
    def test_softmax(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((2, 4, 3)))
        out = ops.softmax_axis(x, axis=1)
        np.testing.assert_allclose(out.data.sum(axis=1), 1.0, atol=1e-6)
        assert check(lambda t: ops.softmax_axis(t, axis=1), x, grad_rng) < TOL

    def test_softmax_bad_axis(self):
        with pytest.raises(ShapeError):
            ops.softmax_axis(Tensor(np.ones((2, 2))), axis=3)

    def test_layernorm(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((2, 4, 3, 3)))
        gamma = Tensor(grad_rng.standard_normal(4))
        beta = Tensor(grad_rng.standard_normal(4))
        assert check(lambda t: ops.layernorm_channel(t, gamma, beta), x, grad_rng) < TOL
        assert check(lambda t: ops.layernorm_channel(x, t, beta), gamma, grad_rng) < TOL
        assert check(lambda t: ops.layernorm_channel(x, gamma, t), beta, grad_rng) < TOL

    def test_layernorm_statistics(self, rng):
        x = Tensor(rng.standard_normal((1, 8, 4, 4)) * 3 + 1)
        out = ops.layernorm_channel(x, Tensor(np.ones(8)), Tensor(np.zeros(8))).data
        np.testing.assert_allclose(out.mean(axis=1), 0.0, atol=1e-5)
        np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-3)

    def test_l2_normalize(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((2, 3, 6)))
        np.testing.assert_allclose(np.linalg.norm(ops.l2_normalize(x).data, axis=-1), 1.0, atol=1e-6)
        assert check(lambda t: ops.l2_normalize(t, axis=-1), x, grad_rng) < TOL


class TestReductionsAndShape:
    def test_mean_axes(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((2, 3, 4)))
        assert check(lambda t: ops.reduce_mean(t, axis=(0, 2)), x, grad_rng) < TOL
        assert check(lambda t: ops.reduce_sum(t, axis=1, keepdims=True), x, grad_rng) < TOL

    def test_transpose_concat(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((2, 3, 4)))
        other = Tensor(grad_rng.standard_normal((2, 1, 4)))
        assert check(lambda t: ops.transpose(t, (2, 0, 1)), x, grad_rng) < TOL
        assert check(lambda t: ops.concat([t, other], axis=1), x, grad_rng) < TOL

    def test_take_along_axis(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((2, 5, 3)))
        indices = np.stack([grad_rng.permutation(5)[:2] for _ in range(6)]).reshape(2, 3, 2).transpose(0, 2, 1)
        assert check(lambda t: ops.take_along_axis(t, indices, axis=1), x, grad_rng) < TOL

    def test_rows(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((6, 3)))
        rows = np.array([4, 0, 2])
        assert check(lambda t: ops.scatter_rows(ops.take_rows(t, rows), rows, 6), x, grad_rng) < TOL

    def test_pixel_shuffle_round_trip(self, rng):
        x = Tensor(rng.standard_normal((2, 3, 8, 4)))
        np.testing.assert_array_equal(ops.pixel_shuffle(ops.pixel_unshuffle(x)).data, x.data)

    def test_pixel_unshuffle_channel_order(self):
        x = Tensor(np.array([[[[0.0, 1.0], [2.0, 3.0]]]]))
        np.testing.assert_array_equal(ops.pixel_unshuffle(x).data.reshape(-1), [0.0, 1.0, 2.0, 3.0])

    def test_pixel_shuffle_gradients(self, grad_rng):
        x = Tensor(grad_rng.standard_normal((1, 4, 2, 2)))
        assert check(ops.pixel_shuffle, x, grad_rng) < TOL
        assert check(ops.pixel_unshuffle, Tensor(grad_rng.standard_normal((1, 1, 4, 4))), grad_rng) < TOL

    def test_unshuffle_needs_even_dims(self):
        with pytest.raises(ShapeError):
            ops.pixel_unshuffle(Tensor(np.ones((1, 1, 3, 4))))

    def test_reshape_error(self):
        with pytest.raises(ShapeError):
            ops.reshape(Tensor(np.ones(6)), (4, 2))
