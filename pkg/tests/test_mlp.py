import mpmath
import numpy as np
import pytest

from hiprenet.mlp import (
    Mlp,
    MlpArchitecture,
    NonFiniteLossError,
    batch_forward,
    forward,
    init_params,
    loss_and_gradient,
)
from hiprenet.numeric import Rng
from hiprenet.objectives import LossSpec, residual_weights


def finite_difference_gradient(arch, params, X, y, loss, h=1e-6):
    """Central-difference oracle, independent of the reverse-mode path."""
    g = np.zeros_like(params)
    for i in range(params.size):
        up, down = params.copy(), params.copy()
        up[i] += h
        down[i] -= h
        fu, _ = loss_and_gradient(arch, up, X, y, loss)
        fd, _ = loss_and_gradient(arch, down, X, y, loss)
        g[i] = (fu - fd) / (2.0 * h)
    return g


def max_relative_error(analytic, numeric):
    denom = np.maximum(1e-8, np.abs(analytic))
    return float(np.max(np.abs(analytic - numeric) / denom))


class TestArchitecture:
    @pytest.mark.parametrize(
        "input_dim,widths,expected",
        [
            (2, (5, 5, 5, 5, 5), 141),
            (6, (5, 5, 5, 5, 5), 161),
            (2, (20, 20, 20, 20, 20), 1761),
            (2, (10, 10, 10, 10, 10), 481),
            (3, (5, 5, 5, 5, 5), 146),
            (1, (1,), 4),
            (1, (), 2),
        ],
    )
    def test_parameter_count(self, input_dim, widths, expected):
        assert MlpArchitecture(input_dim, widths).parameter_count == expected

    def test_invalid(self):
        with pytest.raises(ValueError):
            MlpArchitecture(0, (5,))
        with pytest.raises(ValueError):
            MlpArchitecture(2, (0,))
        with pytest.raises(ValueError):
            MlpArchitecture(2, (5,), activation="relu")


class TestInitParams:
    def test_length_tiny_net(self):
        arch = MlpArchitecture(1, (1,))
        assert init_params(arch, Rng(0)).shape == (4,)

    def test_determinism(self):
        arch = MlpArchitecture(2, (5, 5, 5, 5, 5))
        assert (init_params(arch, Rng(7)) == init_params(arch, Rng(7))).all()

    def test_paper_sized_net(self):
        arch = MlpArchitecture(2, (5, 5, 5, 5, 5))
        assert init_params(arch, Rng(0)).shape == (141,)

    def test_glorot_bounds_and_zero_biases(self):
        arch = MlpArchitecture(3, (4, 2))
        params = init_params(arch, Rng(3))
        net = Mlp(arch, params)
        off = 0
        for fo, fi in arch.layer_shapes:
            limit = np.sqrt(6.0 / (fi + fo))
            W = params[off : off + fo * fi]
            assert (np.abs(W) <= limit).all()
            assert (W != 0.0).any()
            b = params[off + fo * fi : off + fo * fi + fo]
            assert (b == 0.0).all()
            off += fo * fi + fo
        assert net.arch is arch


class TestForward:
    def test_zero_network(self):
        arch = MlpArchitecture(2, (3, 3))
        net = Mlp(arch, np.zeros(arch.parameter_count))
        assert forward(net, np.array([1.5, -2.0])) == 0.0

    def test_pure_affine_identity(self):
        arch = MlpArchitecture(1, ())
        net = Mlp(arch, np.array([1.0, 0.0]))  # w=1, b=0
        assert forward(net, np.array([0.7])) == 0.7

    def test_single_tanh_unit(self):
        # hidden w=1 b=0, output w=1 b=0: y = tanh(x)
        arch = MlpArchitecture(1, (1,))
        net = Mlp(arch, np.array([1.0, 0.0, 1.0, 0.0]))
        expected = float(mpmath.tanh(mpmath.mpf("0.5")))
        assert forward(net, np.array([0.5])) == pytest.approx(expected, abs=1e-15)

    def test_dimension_mismatch(self):
        arch = MlpArchitecture(2, (3,))
        net = Mlp(arch, np.zeros(arch.parameter_count))
        with pytest.raises(ValueError):
            forward(net, np.array([1.0]))


class TestBatchForward:
    def _random_net(self, seed, input_dim=3, widths=(4, 3)):
        arch = MlpArchitecture(input_dim, widths)
        return Mlp(arch, init_params(arch, Rng(seed)))

    def test_empty_batch(self):
        net = self._random_net(0)
        assert batch_forward(net, np.zeros((0, 3))).shape == (0,)

    def test_duplicate_rows_identical_outputs(self):
        net = self._random_net(1)
        rng = np.random.default_rng(5)
        X = rng.standard_normal((8, 3))
        Xdup = np.vstack([X, X[2:5]])
        out = batch_forward(net, Xdup)
        assert (out[8:] == out[2:5]).all()

    def test_matches_scalar_forward(self):
        net = self._random_net(2)
        X = np.random.default_rng(6).standard_normal((10, 3))
        out = batch_forward(net, X)
        for k in range(10):
            assert out[k] == forward(net, X[k])

    def test_permutation_equivariant(self):
        net = self._random_net(3)
        rng = np.random.default_rng(7)
        X = rng.standard_normal((50, 3))
        perm = rng.permutation(50)
        assert (batch_forward(net, X[perm]) == batch_forward(net, X)[perm]).all()


class TestLossAndGradient:
    def test_zero_at_exact_fit(self):
        # constant-output network: predictions equal targets exactly
        arch = MlpArchitecture(2, (3,))
        params = np.zeros(arch.parameter_count)
        params[-1] = 0.75  # output bias
        X = np.random.default_rng(0).standard_normal((6, 2))
        y = np.full(6, 0.75)
        value, grad = loss_and_gradient(arch, params, X, y)
        assert value == 0.0
        assert (grad == 0.0).all()

    def test_affine_hand_gradient(self):
        # (y - (w*x + b))^2 at w=b=0, x=1, y=2: dL/dw = dL/db = -4
        arch = MlpArchitecture(1, ())
        value, grad = loss_and_gradient(
            arch, np.zeros(2), np.array([[1.0]]), np.array([2.0])
        )
        assert value == 4.0
        np.testing.assert_allclose(grad, [-4.0, -4.0], rtol=0, atol=0)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(11)
        arch = MlpArchitecture(2, (3, 3))
        for _ in range(5):
            params = init_params(arch, Rng(int(rng.integers(1 << 30))))
            X = rng.standard_normal((8, 2))
            y = rng.standard_normal(8)
            _, grad = loss_and_gradient(arch, params, X, y)
            fd = finite_difference_gradient(arch, params, X, y, LossSpec())
            assert max_relative_error(grad, fd) < 1e-6

    def test_wmse_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(13)
        arch = MlpArchitecture(2, (3,))
        params = init_params(arch, Rng(99))
        X = rng.standard_normal((8, 2))
        y = rng.standard_normal(8)
        loss = LossSpec("wmse", residual_weights(rng.standard_normal(8)))
        _, grad = loss_and_gradient(arch, params, X, y, loss)
        fd = finite_difference_gradient(arch, params, X, y, loss)
        assert max_relative_error(grad, fd) < 1e-6

    def test_empty_batch_rejected(self):
        arch = MlpArchitecture(2, (3,))
        with pytest.raises(ValueError):
            loss_and_gradient(arch, np.zeros(arch.parameter_count), np.zeros((0, 2)), np.zeros(0))

    def test_weight_length_mismatch(self):
        arch = MlpArchitecture(2, (3,))
        with pytest.raises(ValueError):
            loss_and_gradient(
                arch,
                np.zeros(arch.parameter_count),
                np.zeros((4, 2)),
                np.zeros(4),
                LossSpec("wmse", np.ones(5)),
            )

    def test_params_length_mismatch(self):
        arch = MlpArchitecture(2, (3,))
        with pytest.raises(ValueError):
            loss_and_gradient(arch, np.zeros(7), np.zeros((4, 2)), np.zeros(4))

    def test_non_finite_reports_sample_index(self):
        arch = MlpArchitecture(1, ())
        params = np.array([np.inf, 0.0])  # inf*0 -> nan at row 0, inf at row 1
        X = np.array([[0.0], [1.0]])
        with pytest.raises(NonFiniteLossError) as exc:
            loss_and_gradient(arch, params, X, np.zeros(2))
        assert exc.value.sample_index == 0
