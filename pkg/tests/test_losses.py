import math

import numpy as np
import pytest

from rpnforge.nn import finite_difference_check, smooth_l1, softmax, softmax_cross_entropy


class TestSoftmax:
    def test_sums_to_one_and_positive(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            p = softmax(rng.standard_normal(int(rng.integers(2, 9))) * 10)
            assert np.all(p > 0)
            assert abs(p.sum() - 1.0) < 1e-12

    def test_stable_for_large_logits(self):
        p = softmax(np.array([1000.0, 0.0]))
        assert p[0] == pytest.approx(1.0)
        assert np.isfinite(p).all()


class TestCrossEntropy:
    def test_uniform_two_classes(self):
        loss, _ = softmax_cross_entropy(np.zeros(2), 0)
        assert loss == pytest.approx(math.log(2), abs=1e-12)

    def test_confident_correct_approaches_zero(self):
        loss, _ = softmax_cross_entropy(np.array([30.0, 0.0, 0.0]), 0)
        assert loss < 1e-9

    def test_target_out_of_range(self):
        with pytest.raises(ValueError, match="out of range"):
            softmax_cross_entropy(np.zeros(3), 3)

    def test_needs_two_classes(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros(1), 0)

    def test_gradient(self):
        rng = np.random.default_rng(3)
        for seed in range(5):
            logits = rng.standard_normal(4)
            target = int(rng.integers(0, 4))
            err = finite_difference_check(lambda z: softmax_cross_entropy(z, target), logits)
            assert err < 1e-6

    def test_gradient_is_probs_minus_onehot(self):
        logits = np.array([0.5, -1.0, 2.0])
        _, grad = softmax_cross_entropy(logits, 1)
        p = softmax(logits)
        p[1] -= 1
        assert np.allclose(grad, p, atol=1e-12)


class TestSmoothL1:
    def test_zero_difference(self):
        loss, grad = smooth_l1(np.array([1.0, 2.0]), np.array([1.0, 2.0]))
        assert loss == 0.0
        assert np.all(grad == 0)

    @pytest.mark.parametrize(
        "d,expected",
        [(0.5, 0.125), (2.0, 1.5), (1.0, 0.5), (-0.5, 0.125), (-2.0, 1.5)],
    )
    def test_pointwise_values(self, d, expected):
        loss, _ = smooth_l1(np.array([d]), np.array([0.0]))
        assert loss == pytest.approx(expected, abs=1e-12)

    def test_continuous_at_branch_boundary(self):
        eps = 1e-9
        lo, _ = smooth_l1(np.array([1.0 - eps]), np.array([0.0]))
        hi, _ = smooth_l1(np.array([1.0 + eps]), np.array([0.0]))
        assert abs(lo - hi) < 1e-8

    def test_sums_over_components(self):
        loss, _ = smooth_l1(np.array([0.5, 2.0]), np.zeros(2))
        assert loss == pytest.approx(0.125 + 1.5, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="mismatch"):
            smooth_l1(np.zeros(3), np.zeros(4))

    def test_gradient_away_from_kink(self):
        rng = np.random.default_rng(7)
        for _ in range(5):
            pred = rng.uniform(0.2, 3.0, 6) * np.where(rng.random(6) < 0.5, -1, 1)
            pred = np.where(np.abs(np.abs(pred) - 1.0) < 0.05, pred * 1.3, pred)
            target = np.zeros(6)
            err = finite_difference_check(lambda v: smooth_l1(v, target), pred)
            assert err < 1e-6
