import numpy as np
import pytest

import siam.tensor as T
from siam.conv import conv2d, conv2d_reference, conv3d, conv3d_reference, same_padding
from siam.errors import DivisibilityError, ShapeError
from siam.tensor import Tensor

from conftest import analytic_gradients, fd_gradient, max_rel_err


def t(arr, grad=False):
    return Tensor(np.asarray(arr, dtype=np.float64), requires_grad=grad)


class TestConv2d:
    def test_pointwise_scaling(self):
        x = t(np.ones((1, 1, 3, 3)))
        w = t(np.full((1, 1, 1, 1), 2.0))
        y = conv2d(x, w)
        assert y.shape == (1, 1, 3, 3)
        assert np.array_equal(y.data, np.full((1, 1, 3, 3), 2.0))

    def test_depthwise_matches_loop_reference(self, rng):
        x = rng.standard_normal((1, 2, 4, 4))
        w = rng.standard_normal((2, 1, 3, 3))
        y = conv2d(t(x), t(w), stride=1, padding=1, groups=2)
        ref = conv2d_reference(x, w, None, (1, 1), (1, 1), (1, 1), 2)
        assert np.abs(y.data - ref).max() < 1e-12

    def test_bias_broadcast_on_zero_input(self):
        x = t(np.zeros((2, 1, 4, 5)))
        w = t(np.zeros((3, 1, 3, 3)))
        b = t(np.array([0.5, 0.5, 0.5]))
        y = conv2d(x, w, b, padding=1)
        assert np.array_equal(y.data, np.full((2, 3, 4, 5), 0.5))

    def test_output_extent_formula(self, rng):
        x = t(rng.standard_normal((1, 1, 11, 9)))
        w = t(rng.standard_normal((1, 1, 3, 3)))
        y = conv2d(x, w, stride=(2, 3), padding=(1, 2), dilation=(2, 1))
        # H' = floor((11 + 2 - 2*2 - 1)/2) + 1, W' = floor((9 + 4 - 2 - 1)/3) + 1
        assert y.shape == (1, 1, 5, 4)

    def test_groups_divisibility_error(self, rng):
        x = t(rng.standard_normal((1, 3, 4, 4)))
        w = t(rng.standard_normal((2, 1, 3, 3)))
        with pytest.raises(DivisibilityError):
            conv2d(x, w, groups=2)

    def test_kernel_too_large_names_axis(self, rng):
        x = t(rng.standard_normal((1, 1, 3, 3)))
        w = t(rng.standard_normal((1, 1, 5, 5)))
        with pytest.raises(ShapeError, match="height"):
            conv2d(x, w)

    def test_linearity_bias_free(self, rng):
        x = rng.standard_normal((2, 3, 6, 6))
        y = rng.standard_normal((2, 3, 6, 6))
        w = t(rng.standard_normal((4, 3, 3, 3)))
        a, b = 1.7, -0.3
        lhs = conv2d(t(a * x + b * y), w, padding=1).data
        rhs = a * conv2d(t(x), w, padding=1).data \
            + b * conv2d(t(y), w, padding=1).data
        assert np.abs(lhs - rhs).max() < 1e-12


class TestConv3d:
    def test_pointwise_scaling(self):
        x = t(np.ones((1, 1, 2, 2, 2)))
        w = t(np.full((1, 1, 1, 1, 1), 3.0))
        y = conv3d(x, w)
        assert np.array_equal(y.data, np.full((1, 1, 2, 2, 2), 3.0))

    def test_temporal_depthwise_matches_loop_reference(self, rng):
        x = rng.standard_normal((1, 4, 3, 5, 5))
        w = rng.standard_normal((4, 1, 3, 1, 1))
        y = conv3d(t(x), t(w), padding=(1, 0, 0), groups=4)
        ref = conv3d_reference(x, w, None, (1, 1, 1), (1, 0, 0), (1, 1, 1), 4)
        assert np.abs(y.data - ref).max() < 1e-12

    def test_even_kernel_same_padding_rejected(self):
        with pytest.raises(ShapeError, match="odd"):
            same_padding(4)

    def test_same_padding_preserves_extent(self, rng):
        x = rng.standard_normal((1, 2, 4, 6, 5))
        k = (3, 1, 11)
        w = rng.standard_normal((2, 1) + k)
        pad = tuple(same_padding(kk) for kk in k)
        y = conv3d(t(x), t(w), padding=pad, groups=2)
        assert y.shape == x.shape


class TestLinear:
    def test_identity(self, rng):
        x = rng.standard_normal((3, 5))
        y = T.linear(t(x), t(np.eye(5)), t(np.zeros(5)))
        assert np.array_equal(y.data, x)

    def test_hand_example(self):
        y = T.linear(t([[1.0, 2.0]]), t([[1.0, 0.0], [1.0, 1.0]]),
                     t([0.0, 1.0]))
        assert np.array_equal(y.data, [[1.0, 4.0]])

    def test_against_transpose_reference(self, rng):
        x = rng.standard_normal((7, 5))
        w = rng.standard_normal((4, 5))
        b = rng.standard_normal(4)
        y = T.linear(t(x), t(w), t(b))
        ref = (w @ x.T).T + b  # independent formulation
        assert np.abs(y.data - ref).max() < 1e-12

    def test_dim_mismatch(self, rng):
        with pytest.raises(ShapeError):
            T.linear(t(rng.standard_normal((3, 4))),
                     t(rng.standard_normal((2, 5))))


class TestGroupNorm:
    def test_constant_input_gives_zeros(self):
        x = t(np.full((2, 4, 3, 3), 7.0))
        y = T.group_norm(x, 2, t(np.ones(4)), t(np.zeros(4)))
        assert np.abs(y.data).max() < 1e-6

    def test_zero_gain_gives_shift(self):
        x = t(np.random.default_rng(0).standard_normal((2, 4, 3, 3)))
        y = T.group_norm(x, 2, t(np.zeros(4)), t(np.full(4, 2.5)))
        assert np.array_equal(y.data, np.full((2, 4, 3, 3), 2.5))

    def test_moments_per_group(self, rng):
        x = rng.standard_normal((2, 4, 3, 3))
        y = T.group_norm(t(x), 2, t(np.ones(4)), t(np.zeros(4)),
                         eps=1e-12).data
        for n in range(2):
            for g in range(2):
                grp = y[n, 2 * g:2 * g + 2]
                assert abs(grp.mean()) < 1e-10
                assert abs(grp.var() - 1.0) < 1e-6

    def test_divisibility_and_eps_errors(self, rng):
        x = t(rng.standard_normal((1, 6, 2, 2)))
        with pytest.raises(DivisibilityError):
            T.group_norm(x, 4, t(np.ones(6)), t(np.zeros(6)))
        with pytest.raises(ValueError):
            T.group_norm(x, 2, t(np.ones(6)), t(np.zeros(6)), eps=0.0)


class TestRelu:
    def test_values(self):
        y = T.relu(t([-1.0, 0.0, 2.0]))
        assert np.array_equal(y.data, [0.0, 0.0, 2.0])

    def test_all_negative(self):
        y = T.relu(t([[-3.0, -0.5]]))
        assert np.array_equal(y.data, np.zeros((1, 2)))

    def test_subgradient_at_zero_is_zero(self):
        x = t([-1.0, 0.0, 2.0], grad=True)
        with T.Tape() as tape:
            loss = T.sum_all(T.relu(x))
            (g,) = tape.gradient(loss, [x])
        assert np.array_equal(g, [0.0, 0.0, 1.0])


class TestMovement:
    def test_permute_inverse_roundtrip(self, rng):
        x = t(rng.standard_normal((2, 3, 4, 5)))
        y = T.permute(T.permute(x, (3, 1, 0, 2)), (2, 1, 3, 0))
        assert np.array_equal(y.data, x.data)

    def test_split_concat_identity(self, rng):
        x = t(rng.standard_normal((2, 10, 3)))
        parts = T.split(x, [2, 2, 2, 2, 2], axis=1)
        y = T.concat(parts, axis=1)
        assert np.array_equal(y.data, x.data)

    def test_reshape_roundtrip_bytes(self, rng):
        x = t(rng.standard_normal((3, 4, 5, 6)))
        y = T.reshape(T.reshape(x, (12, 5, 6)), (3, 4, 5, 6))
        assert y.data.tobytes() == x.data.tobytes()

    def test_reshape_count_mismatch(self, rng):
        with pytest.raises(ShapeError):
            T.reshape(t(rng.standard_normal((2, 3))), (4, 2))

    def test_concat_extent_mismatch_names_axis(self, rng):
        a = t(rng.standard_normal((2, 3)))
        b = t(rng.standard_normal((3, 3)))
        with pytest.raises(ShapeError, match="axis 0"):
            T.concat([a, b], axis=1)

    def test_upsample_nearest(self):
        x = t([[[[1.0, 2.0], [3.0, 4.0]]]])
        y = T.upsample_nearest2d(x, 2)
        expect = [[[[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]]]]
        assert np.array_equal(y.data, np.asarray(expect, dtype=np.float64))


def _sq(x):
    return T.sum_all(T.mul(x, x))


class TestGradients:
    """Central finite differences (h=1e-5, float64) as the oracle."""

    def check(self, make_loss, tensors, tol=1e-5, sample=40):
        analytic = analytic_gradients(make_loss, tensors)
        fds = fd_gradient(make_loss, tensors, sample=sample)
        assert max_rel_err(analytic, fds) < tol

    def test_conv2d(self, rng):
        x = t(rng.standard_normal((2, 4, 6, 5)), grad=True)
        w = t(rng.standard_normal((6, 2, 3, 3)), grad=True)
        b = t(rng.standard_normal(6), grad=True)
        self.check(lambda: _sq(conv2d(x, w, b, stride=(2, 1), padding=1,
                                      dilation=(1, 2), groups=2)), [x, w, b])

    def test_conv2d_plain_path(self, rng):
        x = t(rng.standard_normal((2, 3, 6, 6)), grad=True)
        w = t(rng.standard_normal((4, 3, 3, 3)), grad=True)
        b = t(rng.standard_normal(4), grad=True)
        self.check(lambda: _sq(conv2d(x, w, b, padding=1)), [x, w, b])

    def test_conv3d(self, rng):
        x = t(rng.standard_normal((1, 4, 3, 4, 4)), grad=True)
        w = t(rng.standard_normal((4, 2, 3, 1, 3)), grad=True)
        b = t(rng.standard_normal(4), grad=True)
        self.check(lambda: _sq(conv3d(x, w, b, padding=(1, 0, 1), groups=2)),
                   [x, w, b])

    def test_linear(self, rng):
        x = t(rng.standard_normal((3, 7, 5)), grad=True)
        w = t(rng.standard_normal((4, 5)), grad=True)
        b = t(rng.standard_normal(4), grad=True)
        self.check(lambda: _sq(T.linear(x, w, b)), [x, w, b])

    def test_group_norm(self, rng):
        x = t(rng.standard_normal((2, 6, 3, 3)), grad=True)
        g = t(rng.standard_normal(6), grad=True)
        b = t(rng.standard_normal(6), grad=True)
        self.check(lambda: _sq(T.group_norm(x, 3, g, b)), [x, g, b])

    def test_relu(self, rng):
        x = t(rng.standard_normal(40) + 0.05, grad=True)  # avoid the kink
        self.check(lambda: _sq(T.relu(x)), [x])

    def test_add_mul_sub_mean(self, rng):
        x = t(rng.standard_normal((3, 4)), grad=True)
        y = t(rng.standard_normal((3, 4)), grad=True)
        self.check(lambda: T.mean_all(T.mul(T.add(x, y), T.sub(x, y))), [x, y])

    def test_movement_ops(self, rng):
        x = t(rng.standard_normal((2, 6, 4)), grad=True)

        def loss():
            a = T.permute(x, (1, 0, 2))
            b = T.reshape(a, (6, 8))
            parts = T.split(b, [2, 4], axis=0)
            c = T.concat([parts[1], parts[0]], axis=0)
            return _sq(c)

        self.check(loss, [x])

    def test_upsample(self, rng):
        x = t(rng.standard_normal((1, 2, 3, 3)), grad=True)
        self.check(lambda: _sq(T.upsample_nearest2d(x, 2)), [x])
