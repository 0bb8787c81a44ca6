import numpy as np
import pytest

from rpnforge.nn import (
    Activation,
    BatchNorm,
    Conv2d,
    Dropout,
    Linear,
    MaxPool2x2,
    Param,
    ResidualBlock,
    finite_difference_check,
    max_rel_error,
    sgd_step,
)


def conv_reference(x, weights, bias, stride, pad):
    """Naive quadruple-loop convolution, the independent oracle."""
    k = weights.shape[0]
    cin, cout = weights.shape[2], weights.shape[3]
    xp = np.pad(x, ((pad, pad), (pad, pad), (0, 0))) if pad else x
    oh = (xp.shape[0] - k) // stride + 1
    ow = (xp.shape[1] - k) // stride + 1
    out = np.zeros((oh, ow, cout))
    for i in range(oh):
        for j in range(ow):
            patch = xp[i * stride : i * stride + k, j * stride : j * stride + k, :]
            for f in range(cout):
                acc = 0.0
                for a in range(k):
                    for b in range(k):
                        for c in range(cin):
                            acc += patch[a, b, c] * weights[a, b, c, f]
                out[i, j, f] = acc + bias[f]
    return out


class TestConv2d:
    def test_paper_shape_32_to_28(self):
        rng = np.random.default_rng(0)
        layer = Conv2d(5, 3, 6, rng=rng)
        out = layer.forward(rng.standard_normal((32, 32, 3)))
        assert out.shape == (28, 28, 6)

    def test_identity_1x1(self):
        layer = Conv2d(1, 1, 1)
        layer.weights.value[...] = 1.0
        layer.bias.value[...] = 0.0
        x = np.array([[[3.5]]])
        assert layer.forward(x) == pytest.approx(x)

    def test_matches_naive_reference(self):
        rng = np.random.default_rng(3)
        for k, stride, pad in ((3, 1, 1), (3, 2, 0), (5, 1, 2), (1, 1, 0)):
            layer = Conv2d(k, 2, 3, stride=stride, pad=pad, rng=rng)
            x = rng.standard_normal((7, 8, 2))
            got = layer.forward(x)
            want = conv_reference(x, layer.weights.value, layer.bias.value, stride, pad)
            # summation order differs, so agreement is to rounding, not bitwise
            assert np.allclose(got, want, rtol=1e-12, atol=1e-12)

    def test_linearity_without_bias(self):
        rng = np.random.default_rng(5)
        layer = Conv2d(3, 2, 4, pad=1, rng=rng)
        layer.bias.value[...] = 0.0
        x = rng.standard_normal((6, 6, 2))
        for a in (2.0, -0.5, 3.25):
            assert np.allclose(layer.forward(a * x), a * layer.forward(x), atol=1e-12)

    def test_channel_mismatch_names_dims(self):
        layer = Conv2d(3, 2, 4)
        with pytest.raises(ValueError, match="3 channels.*expect 2"):
            layer.forward(np.zeros((6, 6, 3)))

    def test_kernel_too_large(self):
        layer = Conv2d(5, 1, 1)
        with pytest.raises(ValueError, match="5x5"):
            layer.forward(np.zeros((3, 3, 1)))

    def test_conv1x1_depth_mapping(self):
        rng = np.random.default_rng(9)
        layer = Conv2d(1, 8, 2, rng=rng)
        x = rng.standard_normal((4, 4, 8))
        out = layer.forward(x)
        assert out.shape == (4, 4, 2)
        # depth mapping only: every output pixel is x[i,j] @ W + b
        w = layer.weights.value.reshape(8, 2)
        assert np.allclose(out, x @ w + layer.bias.value, atol=1e-12)

    def test_conv1x1_identity(self):
        layer = Conv2d(1, 3, 3)
        layer.weights.value[...] = np.eye(3).reshape(1, 1, 3, 3)
        layer.bias.value[...] = 0.0
        x = np.random.default_rng(11).standard_normal((5, 5, 3))
        assert np.allclose(layer.forward(x), x, atol=0)

    def test_gradients(self):
        rng = np.random.default_rng(13)
        layer = Conv2d(3, 2, 3, stride=1, pad=1, rng=rng)
        x = rng.standard_normal((5, 5, 2))
        proj = rng.standard_normal((5, 5, 3))

        def func(v):
            y = layer.forward(v)
            return float((proj * y).sum()), layer.backward(proj)

        assert finite_difference_check(func, x) < 1e-6


class TestMaxPool:
    def test_constant_input(self):
        layer = MaxPool2x2()
        out = layer.forward(np.full((4, 4, 2), 3.25))
        assert out.shape == (2, 2, 2)
        assert np.all(out == 3.25)

    def test_block_maxima(self):
        # 4x4 single-channel pattern -> its 2x2 block maxima
        x = np.array(
            [
                [1, 3, 2, 1],
                [4, 2, 5, 6],
                [7, 0, 1, 1],
                [2, 8, 2, 3],
            ],
            dtype=float,
        )[..., None]
        out = MaxPool2x2().forward(x)
        assert out[..., 0].tolist() == [[4, 6], [8, 3]]

    def test_keeps_quarter_of_inputs(self):
        x = np.random.default_rng(1).standard_normal((8, 10, 3))
        out = MaxPool2x2().forward(x)
        assert out.size * 4 == x.size

    def test_odd_dims_rejected(self):
        with pytest.raises(ValueError, match="even"):
            MaxPool2x2().forward(np.zeros((5, 4, 1)))

    def test_backward_routes_to_first_max_on_ties(self):
        layer = MaxPool2x2()
        x = np.array([[5.0, 5.0], [3.0, 1.0]])[..., None]
        layer.forward(x)
        g = layer.backward(np.array([[[2.0]]]))
        assert g[..., 0].tolist() == [[2.0, 0.0], [0.0, 0.0]]

    def test_gradient(self):
        rng = np.random.default_rng(17)
        layer = MaxPool2x2()
        x = rng.standard_normal((6, 6, 2))
        proj = rng.standard_normal((3, 3, 2))

        def func(v):
            y = layer.forward(v)
            return float((proj * y).sum()), layer.backward(proj)

        assert finite_difference_check(func, x) < 1e-6


class TestActivations:
    def test_zero_points(self):
        z = np.zeros(3)
        assert Activation("sigmoid").forward(z) == pytest.approx([0.5] * 3)
        assert Activation("tanh").forward(z) == pytest.approx([0.0] * 3)
        assert Activation("relu").forward(z) == pytest.approx([0.0] * 3)

    def test_relu_clips_negatives(self):
        out = Activation("relu").forward(np.array([-3.0, 3.0]))
        assert out.tolist() == [0.0, 3.0]

    def test_output_ranges(self):
        x = np.random.default_rng(2).standard_normal(1000) * 5
        s = Activation("sigmoid").forward(x)
        t = Activation("tanh").forward(x)
        assert np.all((s > 0) & (s < 1))
        assert np.all((t > -1) & (t < 1))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            Activation("swish")

    @pytest.mark.parametrize("kind", ["sigmoid", "tanh", "relu"])
    def test_gradients(self, kind):
        rng = np.random.default_rng(19)
        layer = Activation(kind)
        x = rng.uniform(0.25, 1.5, (4, 4)) * np.where(rng.random((4, 4)) < 0.5, -1, 1)
        proj = rng.standard_normal((4, 4))

        def func(v):
            y = layer.forward(v)
            return float((proj * y).sum()), layer.backward(proj)

        assert finite_difference_check(func, x) < 1e-6


class TestLinear:
    def test_identity(self):
        layer = Linear(3, 3)
        layer.weights.value[...] = np.eye(3)
        layer.bias.value[...] = 0.0
        x = np.array([1.0, -2.0, 3.0])
        assert layer.forward(x) == pytest.approx(x)

    def test_constant_bias(self):
        layer = Linear(3, 2)
        layer.weights.value[...] = 0.0
        layer.bias.value[...] = 7.5
        assert layer.forward(np.ones(3)) == pytest.approx([7.5, 7.5])

    def test_batch_matches_rows(self):
        rng = np.random.default_rng(23)
        layer = Linear(4, 3, rng=rng)
        xs = rng.standard_normal((5, 4))
        batch = layer.forward(xs)
        for i in range(5):
            assert np.allclose(batch[i], layer.forward(xs[i]), atol=0)

    def test_shape_error(self):
        with pytest.raises(ValueError, match="5 features.*expect 4"):
            Linear(4, 3).forward(np.zeros(5))

    def test_gradients(self):
        rng = np.random.default_rng(29)
        layer = Linear(4, 3, rng=rng)
        x = rng.standard_normal(4)
        proj = rng.standard_normal(3)

        def func(v):
            y = layer.forward(v)
            return float((proj * y).sum()), layer.backward(proj)

        assert finite_difference_check(func, x) < 1e-6
        # parameter gradients via one explicit check
        layer.weights.zero_grad()
        layer.bias.zero_grad()
        layer.forward(x)
        layer.backward(proj)
        assert np.allclose(layer.weights.grad, np.outer(x, proj), atol=1e-12)
        assert np.allclose(layer.bias.grad, proj, atol=1e-12)


class TestBatchNorm:
    def test_three_point_batch_exact(self):
        bn = BatchNorm(1, epsilon=0.0)
        out = bn.forward(np.array([[1.0], [2.0], [3.0]]), train=True)
        expected = 1.224744871391589  # 1/sqrt(2/3)
        assert out[:, 0] == pytest.approx([-expected, 0.0, expected], abs=1e-12)

    def test_normalizes_mean_and_variance(self):
        rng = np.random.default_rng(31)
        bn = BatchNorm(4, epsilon=1e-12)
        x = rng.standard_normal((64, 4)) * 3 + 1
        out = bn.forward(x, train=True)
        assert np.abs(out.mean(axis=0)).max() < 1e-9
        assert np.abs(out.var(axis=0) - 1).max() < 1e-6

    def test_constant_batch_gives_beta(self):
        bn = BatchNorm(2, epsilon=1e-5)
        bn.beta.value[...] = [0.5, -1.0]
        out = bn.forward(np.full((8, 2), 7.0), train=True)
        assert np.allclose(out, [0.5, -1.0], atol=1e-9)

    def test_train_requires_two(self):
        with pytest.raises(ValueError, match="n >= 2"):
            BatchNorm(2).forward(np.zeros((1, 2)), train=True)

    def test_running_statistics_ema(self):
        bn = BatchNorm(1, momentum=0.9)
        x = np.array([[0.0], [2.0]])  # mean 1, biased var 1
        bn.forward(x, train=True)
        assert bn.running_mean[0] == pytest.approx(0.9 * 0.0 + 0.1 * 1.0)
        assert bn.running_var[0] == pytest.approx(0.9 * 1.0 + 0.1 * 1.0)

    def test_eval_uses_running_stats(self):
        bn = BatchNorm(1, epsilon=0.0)
        bn.running_mean[...] = 2.0
        bn.running_var[...] = 4.0
        out = bn.forward(np.array([[4.0]]), train=False)
        assert out[0, 0] == pytest.approx(1.0)

    def test_gradients_train_mode(self):
        rng = np.random.default_rng(37)
        bn = BatchNorm(3)
        x = rng.standard_normal((6, 3))
        proj = rng.standard_normal((6, 3))

        def func(v):
            y = bn.forward(v, train=True)
            return float((proj * y).sum()), bn.backward(proj)

        assert finite_difference_check(func, x) < 1e-6


class TestDropout:
    def test_p_zero_identity(self):
        x = np.random.default_rng(1).standard_normal((4, 4))
        layer = Dropout(0.0)
        assert np.array_equal(layer.forward(x, train=True, rng=np.random.default_rng(0)), x)
        assert np.array_equal(layer.forward(x, train=False), x)

    def test_eval_identity(self):
        x = np.random.default_rng(2).standard_normal((4, 4))
        assert np.array_equal(Dropout(0.7).forward(x, train=False), x)

    def test_monte_carlo_expectation(self):
        x = np.arange(1.0, 9.0)  # 8 distinct values
        trials = np.tile(x, (100_000, 1))
        out = Dropout(0.5).forward(trials, train=True, rng=np.random.default_rng(99))
        means = out.mean(axis=0)
        assert np.all(np.abs(means - x) / x < 0.01)

    def test_invalid_probability(self):
        with pytest.raises(ValueError):
            Dropout(1.0)


class TestResidualBlock:
    @staticmethod
    def zero_block(variant, use_bn=False):
        block = ResidualBlock(3, variant, rng=np.random.default_rng(0), use_batch_norm=use_bn)
        for p in block.params():
            if "conv" in p.name:
                p.value[...] = 0.0
        return block

    def test_identity_variant_zero_weights_is_identity(self):
        block = self.zero_block("identity")
        x = np.random.default_rng(3).standard_normal((4, 4, 3))
        assert np.array_equal(block.forward(x), x)

    def test_original_variant_zero_weights_is_relu(self):
        block = self.zero_block("original")
        x = np.random.default_rng(4).standard_normal((4, 4, 3))
        assert np.array_equal(block.forward(x), np.maximum(x, 0))

    def test_identity_stack_any_depth(self):
        x = np.random.default_rng(5).standard_normal((4, 4, 3))
        for depth in (1, 4, 16):
            y = x
            for _ in range(depth):
                y = self.zero_block("identity").forward(y)
            assert np.array_equal(y, x)

    def test_identity_zero_weights_with_batch_norm(self):
        block = self.zero_block("identity", use_bn=True)
        x = np.random.default_rng(6).standard_normal((4, 4, 3))
        assert np.array_equal(block.forward(x, train=True), x)

    def test_param_shapes_match_across_variants(self):
        a = ResidualBlock(4, "original", rng=np.random.default_rng(0))
        b = ResidualBlock(4, "identity", rng=np.random.default_rng(1))
        shapes_a = [(p.name, p.value.shape) for p in a.params()]
        shapes_b = [(p.name, p.value.shape) for p in b.params()]
        assert shapes_a == shapes_b

    def test_channel_mismatch_raises(self):
        block = ResidualBlock(3, "identity")
        with pytest.raises(ValueError):
            block.forward(np.zeros((4, 4, 2)))

    @pytest.mark.parametrize("variant", ["original", "identity"])
    def test_gradients(self, variant):
        rng = np.random.default_rng(41)
        block = ResidualBlock(2, variant, rng=rng)
        x = rng.standard_normal((4, 4, 2))
        proj = rng.standard_normal((4, 4, 2))

        def func(v):
            y = block.forward(v)
            return float((proj * y).sum()), block.backward(proj)

        assert finite_difference_check(func, x) < 1e-6


class TestSgd:
    def test_lr_zero_bitwise_no_change(self):
        p = Param(np.array([1.0, -2.0, 3.5]), name="w")
        before = p.value.copy()
        p.grad[...] = [10.0, -5.0, 2.0]
        sgd_step([p], lr=0.0)
        assert np.array_equal(p.value, before)
        assert np.all(p.grad == 0)

    def test_basic_step(self):
        p = Param(np.array([1.0]), name="v")
        p.grad[...] = 2.0
        sgd_step([p], lr=0.1)
        assert p.value[0] == pytest.approx(0.8)
        assert p.grad[0] == 0.0

    def test_descends_quadratic(self):
        # one step on f(w) = w^2 from w = 1 with lr 0.1
        p = Param(np.array([1.0]), name="w")
        p.grad[...] = 2.0 * p.value
        sgd_step([p], lr=0.1)
        assert p.value[0] == pytest.approx(0.8)
        assert p.value[0] ** 2 < 1.0

    def test_momentum_accumulates(self):
        p = Param(np.array([0.0]), name="w")
        p.grad[...] = 1.0
        sgd_step([p], lr=1.0, momentum=0.5)
        assert p.value[0] == pytest.approx(-1.0)
        p.grad[...] = 1.0
        sgd_step([p], lr=1.0, momentum=0.5)
        assert p.value[0] == pytest.approx(-2.5)  # velocity 0.5*1 + 1

    def test_non_finite_grad_names_param(self):
        p = Param(np.array([1.0]), name="head.fc1.weights")
        p.grad[...] = np.nan
        with pytest.raises(ValueError, match="head.fc1.weights"):
            sgd_step([p], lr=0.1)


class TestGradcheckHarness:
    def test_linear_map_noise_level(self):
        rng = np.random.default_rng(43)
        w = rng.standard_normal(6)

        def func(x):
            return float(w @ x), w.copy()

        assert finite_difference_check(func, rng.standard_normal(6)) < 1e-9

    def test_detects_corrupted_backward(self):
        rng = np.random.default_rng(47)
        w = rng.standard_normal(6)

        def corrupted(x):
            g = w.copy()
            g[2] *= 1.1  # +10% on one element
            return float(w @ x), g

        assert finite_difference_check(corrupted, rng.standard_normal(6)) > 1e-2

    def test_max_rel_error_denominator_floor(self):
        assert max_rel_error(np.zeros(3), np.zeros(3)) == 0.0
        assert max_rel_error(np.array([1e-12]), np.array([0.0])) < 1e-3
