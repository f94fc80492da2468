import math

import numpy as np
import pytest

from errors import DimensionMismatchError, DomainError, KinkProximityError
from rank_loss import (KL, HingeConfig, RankPair, finite_difference_check,
                       hinge_gradient, hinge_gradient_batch, hinge_loss,
                       kl_gradient, kl_gradient_batch, kl_loss, random_pair,
                       sampling_probs, softmax_probs)


def worked_example_pair(l_i, l_j):
    # lhat_i = 6, lhat_j = 3, theta_i - theta_j = [0, 1, 0]
    return RankPair(l_i=l_i, l_j=l_j, theta_i=np.array([1.0, 2.0, 1.0]),
                    theta_j=np.array([1.0, 1.0, 1.0]), w=np.array([0.0, 3.0, 0.0]))


def swapped(pair):
    return RankPair(l_i=pair.l_j, l_j=pair.l_i, theta_i=pair.theta_j, theta_j=pair.theta_i, w=pair.w)


def test_sampling_probs():
    assert sampling_probs(3.0, 1.0) == (0.75, 0.25)
    assert sampling_probs(0.0, 0.0) == (0.5, 0.5)
    assert sampling_probs(0.0, 2.0) == (0.0, 1.0)
    with pytest.raises(DomainError):
        sampling_probs(-1.0, 1.0)


def test_softmax_probs():
    q_i, q_j = softmax_probs(math.log(3.0), 0.0)
    assert q_i == pytest.approx(0.75, abs=1e-15)
    assert q_j == pytest.approx(0.25, abs=1e-15)
    assert softmax_probs(1000.0, 0.0) == pytest.approx((1.0, 0.0), abs=1e-300)


def test_hinge_worked_example():
    config = HingeConfig(xi=1.0)
    assert hinge_loss(worked_example_pair(2.0, 1.0), config) == 0.0

    wrong_order = worked_example_pair(1.0, 2.0)
    gradient = hinge_gradient(wrong_order, config)
    assert gradient.loss_value == 4.0
    assert gradient.grad_w.tolist() == [0.0, 1.0, 0.0]


def test_hinge_gradient_takes_three_values():
    rng = np.random.default_rng(4)
    for _ in range(200):
        pair = random_pair(rng)
        gradient = hinge_gradient(pair, HingeConfig(0.1))
        diff = pair.theta_i - pair.theta_j
        assert any(np.array_equal(gradient.grad_w, candidate) for candidate in (np.zeros(4), diff, -diff))


def test_hinge_tied_losses_cost_xi():
    pair = RankPair(l_i=0.5, l_j=0.5, theta_i=[1.0, 0.0], theta_j=[0.0, 1.0], w=[2.0, -1.0])
    gradient = hinge_gradient(pair, HingeConfig(0.1))
    assert gradient.loss_value == pytest.approx(0.1)
    assert not gradient.grad_w.any()


def test_hinge_kink_returns_zero_subgradient():
    # -sign * gap + xi == 0 exactly
    pair = RankPair(l_i=2.0, l_j=1.0, theta_i=[0.5, 0.0], theta_j=[0.0, 0.0], w=[1.0, 0.0])
    gradient = hinge_gradient(pair, HingeConfig(0.5))
    assert gradient.loss_value == 0.0
    assert not gradient.grad_w.any()


def test_kl_worked_example():
    pair = RankPair(l_i=3.0, l_j=1.0, theta_i=[1.0, 0.0], theta_j=[0.0, 0.0], w=[0.0, 2.0])
    gradient = kl_gradient(pair)
    assert gradient.loss_value == pytest.approx(0.75 * math.log(1.5) + 0.25 * math.log(0.5), abs=1e-12)
    assert gradient.loss_value == pytest.approx(0.130812, abs=1e-6)
    np.testing.assert_allclose(gradient.grad_w, [-0.25, 0.0], atol=1e-15)
    np.testing.assert_allclose(gradient.grad_theta_i, [0.0, -0.5], atol=1e-15)
    np.testing.assert_allclose(gradient.grad_theta_j, [0.0, 0.5], atol=1e-15)


def test_kl_is_zero_when_prediction_matches():
    pair = RankPair(l_i=3.0, l_j=1.0, theta_i=[math.log(3.0)], theta_j=[0.0], w=[1.0])
    gradient = kl_gradient(pair)
    assert gradient.loss_value == pytest.approx(0.0, abs=1e-15)
    np.testing.assert_allclose(gradient.grad_w, [0.0], atol=1e-15)


def test_kl_equal_predictions_scale_with_feature_gap():
    pair = RankPair(l_i=3.0, l_j=1.0, theta_i=[2.0, 1.0], theta_j=[1.0, 3.0], w=[2.0, 1.0])
    gradient = kl_gradient(pair)
    np.testing.assert_allclose(gradient.grad_w, -0.25 * (pair.theta_i - pair.theta_j), atol=1e-15)


@pytest.mark.parametrize("objective", [KL, HingeConfig(0.1)])
def test_swapping_the_pair(objective):
    rng = np.random.default_rng(9)
    for _ in range(50):
        pair = random_pair(rng)
        forward = kl_gradient(pair) if objective == KL else hinge_gradient(pair, objective)
        backward = kl_gradient(swapped(pair)) if objective == KL else hinge_gradient(swapped(pair), objective)
        assert backward.loss_value == pytest.approx(forward.loss_value, abs=1e-12)
        np.testing.assert_allclose(backward.grad_w, forward.grad_w, atol=1e-12)
        np.testing.assert_allclose(backward.grad_theta_i, forward.grad_theta_j, atol=1e-12)
        np.testing.assert_allclose(backward.grad_theta_j, forward.grad_theta_i, atol=1e-12)


def test_kl_shift_invariance():
    pair = RankPair(l_i=0.7, l_j=0.2, theta_i=[1.0, 0.5, 1.0], theta_j=[0.2, -0.4, 1.0], w=[0.3, 1.2, 0.0])
    # Shift both predictions by 5 through the shared coordinate
    shifted = RankPair(l_i=0.7, l_j=0.2, theta_i=[1.0, 0.5, 5.0], theta_j=[0.2, -0.4, 5.0], w=[0.3, 1.2, 1.0])
    base, moved = kl_gradient(pair), kl_gradient(shifted)
    assert moved.loss_value == pytest.approx(base.loss_value, abs=1e-12)
    np.testing.assert_allclose(moved.grad_w, base.grad_w, atol=1e-12)
    assert kl_loss(shifted) == pytest.approx(kl_loss(pair), abs=1e-12)


def test_kl_never_negative():
    rng = np.random.default_rng(21)
    for _ in range(200):
        assert kl_loss(random_pair(rng)) >= 0.0


def test_batch_matches_single_pairs():
    rng = np.random.default_rng(2)
    pairs = [random_pair(rng) for _ in range(16)]
    w = pairs[0].w
    l_i = np.array([p.l_i for p in pairs])
    l_j = np.array([p.l_j for p in pairs])
    theta_i = np.stack([p.theta_i for p in pairs])
    theta_j = np.stack([p.theta_j for p in pairs])
    batch = kl_gradient_batch(l_i, l_j, theta_i, theta_j, w)
    hinge = hinge_gradient_batch(l_i, l_j, theta_i, theta_j, w, HingeConfig(0.1))
    for n, pair in enumerate(pairs):
        single = RankPair(l_i=pair.l_i, l_j=pair.l_j, theta_i=pair.theta_i, theta_j=pair.theta_j, w=w)
        np.testing.assert_allclose(batch.grad_w[n], kl_gradient(single).grad_w, atol=1e-15)
        np.testing.assert_allclose(hinge.grad_theta_i[n], hinge_gradient(single, HingeConfig(0.1)).grad_theta_i)


@pytest.mark.parametrize("objective", [KL, HingeConfig(0.1)], ids=["kl", "hinge"])
def test_finite_difference_check_over_random_pairs(objective):
    rng = np.random.default_rng(0)
    checked = 0
    for _ in range(1000):
        try:
            assert finite_difference_check(random_pair(rng), objective) <= 1e-6
            checked += 1
        except KinkProximityError:
            pass
    assert checked >= 990


def test_kl_coefficient_grows_with_true_loss_contrast():
    # Equal predictions give q_i = 0.5, so the coefficient is 0.5 - p_i
    coefficients = []
    for l_i in [1.0, 1.2, 1.5, 2.0, 3.0, 5.0, 10.0]:
        pair = RankPair(l_i=l_i, l_j=1.0, theta_i=[1.0, 0.0], theta_j=[0.0, 0.0], w=[0.0, 1.0])
        gradient = kl_gradient(pair)
        contrast = (l_i - 1.0) / (l_i + 1.0)
        assert gradient.grad_w[0] == pytest.approx(-contrast / 2, abs=1e-15)
        np.testing.assert_allclose(gradient.grad_theta_i, [0.0, -contrast / 2], atol=1e-15)
        coefficients.append(abs(gradient.grad_w[0]))
    assert coefficients[0] == pytest.approx(0.0, abs=1e-15)
    assert all(b > a for a, b in zip(coefficients, coefficients[1:]))


def test_finite_difference_check_refuses_the_kink():
    pair = RankPair(l_i=2.0, l_j=1.0, theta_i=[0.5, 0.0], theta_j=[0.0, 0.0], w=[1.0, 0.0])
    with pytest.raises(KinkProximityError):
        finite_difference_check(pair, HingeConfig(0.5))


def test_pair_validation():
    with pytest.raises(DimensionMismatchError):
        RankPair(l_i=1.0, l_j=0.5, theta_i=[1.0, 2.0], theta_j=[1.0], w=[1.0, 1.0])
    with pytest.raises(DimensionMismatchError):
        RankPair(l_i=1.0, l_j=0.5, theta_i=[1.0, 2.0], theta_j=[1.0, 0.0], w=[1.0])
    with pytest.raises(DomainError):
        RankPair(l_i=-1.0, l_j=0.5, theta_i=[1.0], theta_j=[0.0], w=[1.0])
    with pytest.raises(DomainError):
        HingeConfig(-0.1)
