"""
Pairwise ranking objectives for a linear loss-prediction head.

The predicted loss of sample i is theta_i . w. Two objectives compare a pair
of samples: the margin hinge and the KL divergence between the true-loss
sampling distribution p and the softmax q of the predicted losses. Each has
a batched form used in training and a single-pair form used in checks.
"""

import logging
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import log_softmax, softmax, xlogy

from config import GRADCHECK_DIM, GRADCHECK_STEP, TRAIN_HINGE_MARGIN
from errors import DimensionMismatchError, DomainError, KinkProximityError

logger = logging.getLogger(__name__)

KL = "kl"
GRADIENT_BLOCKS = ("w", "theta_i", "theta_j")


@dataclass(frozen=True)
class HingeConfig:
    xi: float = TRAIN_HINGE_MARGIN

    def __post_init__(self):
        if not math.isfinite(self.xi) or self.xi < 0:
            raise DomainError(f"hinge margin xi must be finite and >= 0, got {self.xi!r}")


@dataclass(frozen=True, eq=False)
class RankPair:
    """True losses, penultimate features and loss-head weights of one pair"""

    l_i: float
    l_j: float
    theta_i: np.ndarray
    theta_j: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        for name in GRADIENT_BLOCKS:
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if self.theta_i.ndim != 1 or self.theta_i.shape != self.theta_j.shape or self.w.shape != self.theta_i.shape:
            raise DimensionMismatchError(
                f"theta_i {self.theta_i.shape}, theta_j {self.theta_j.shape} and w {self.w.shape} must match")
        if not (self.l_i >= 0 and self.l_j >= 0):
            raise DomainError(f"true losses must be >= 0, got ({self.l_i}, {self.l_j})")


@dataclass(frozen=True, eq=False)
class RankGradient:
    """Gradients for every pair of a batch (leading axis) or one pair (no leading axis)"""

    grad_w: np.ndarray
    grad_theta_i: np.ndarray
    grad_theta_j: np.ndarray
    loss_value: np.ndarray


def sampling_probs_batch(l_i, l_j):
    """(p_i, p_j) = (l_i, l_j) / (l_i + l_j); a pair of zero losses gives (0.5, 0.5)"""
    total = l_i + l_j
    p_i = np.divide(l_i, total, out=np.full_like(total, 0.5), where=total > 0)
    return p_i, 1.0 - p_i


def sampling_probs(l_i, l_j):
    if not (l_i >= 0 and l_j >= 0):
        raise DomainError(f"true losses must be >= 0, got ({l_i}, {l_j})")
    p_i, p_j = sampling_probs_batch(np.array([l_i], dtype=float), np.array([l_j], dtype=float))
    return float(p_i[0]), float(p_j[0])


def softmax_probs(lhat_i, lhat_j):
    q = softmax(np.array([lhat_i, lhat_j], dtype=float))
    return float(q[0]), float(q[1])


def _check_batch(l_i, l_j, theta_i, theta_j, w):
    l_i = np.asarray(l_i, dtype=float)
    l_j = np.asarray(l_j, dtype=float)
    theta_i = np.asarray(theta_i, dtype=float)
    theta_j = np.asarray(theta_j, dtype=float)
    w = np.asarray(w, dtype=float)
    if (theta_i.ndim != 2 or theta_i.shape != theta_j.shape or w.shape != (theta_i.shape[1],)
            or l_i.shape != (theta_i.shape[0],) or l_j.shape != l_i.shape):
        raise DimensionMismatchError(
            f"batch shapes disagree: l {l_i.shape}/{l_j.shape}, theta {theta_i.shape}/{theta_j.shape}, w {w.shape}")
    if np.any(l_i < 0) or np.any(l_j < 0):
        raise DomainError("true losses must be >= 0")
    return l_i, l_j, theta_i, theta_j, w


def hinge_gradient_batch(l_i, l_j, theta_i, theta_j, w, config):
    """max(0, -sign(l_i - l_j)(lhat_i - lhat_j) + xi) and its subgradient, zero at the kink"""
    l_i, l_j, theta_i, theta_j, w = _check_batch(l_i, l_j, theta_i, theta_j, w)
    sign = np.sign(l_i - l_j)
    margin = -sign * (theta_i @ w - theta_j @ w) + config.xi
    coef = np.where(margin > 0.0, -sign, 0.0)
    grad_theta_i = coef[:, None] * w
    return RankGradient(grad_w=coef[:, None] * (theta_i - theta_j),
                        grad_theta_i=grad_theta_i,
                        grad_theta_j=-grad_theta_i,
                        loss_value=np.maximum(margin, 0.0))


def kl_gradient_batch(l_i, l_j, theta_i, theta_j, w):
    """KL(p || q) with q = softmax(lhat_i, lhat_j); dKL/dlhat_i = q_i - p_i"""
    l_i, l_j, theta_i, theta_j, w = _check_batch(l_i, l_j, theta_i, theta_j, w)
    p_i, p_j = sampling_probs_batch(l_i, l_j)
    log_q = log_softmax(np.stack([theta_i @ w, theta_j @ w], axis=-1), axis=-1)
    loss = xlogy(p_i, p_i) - p_i * log_q[:, 0] + xlogy(p_j, p_j) - p_j * log_q[:, 1]
    coef = np.exp(log_q[:, 0]) - p_i
    grad_theta_i = coef[:, None] * w
    return RankGradient(grad_w=coef[:, None] * (theta_i - theta_j),
                        grad_theta_i=grad_theta_i,
                        grad_theta_j=-grad_theta_i,
                        loss_value=np.maximum(loss, 0.0))


def pair_gradient_batch(l_i, l_j, theta_i, theta_j, w, objective):
    """Dispatch on the objective: a HingeConfig or KL"""
    if isinstance(objective, HingeConfig):
        return hinge_gradient_batch(l_i, l_j, theta_i, theta_j, w, objective)
    if objective == KL:
        return kl_gradient_batch(l_i, l_j, theta_i, theta_j, w)
    raise DomainError(f"unknown ranking objective {objective!r}")


def pair_gradient(pair, objective):
    batch = pair_gradient_batch(np.array([pair.l_i], dtype=float), np.array([pair.l_j], dtype=float),
                                pair.theta_i[None, :], pair.theta_j[None, :], pair.w, objective)
    return RankGradient(grad_w=batch.grad_w[0],
                        grad_theta_i=batch.grad_theta_i[0],
                        grad_theta_j=batch.grad_theta_j[0],
                        loss_value=float(batch.loss_value[0]))


def hinge_gradient(pair, config):
    return pair_gradient(pair, config)


def kl_gradient(pair):
    return pair_gradient(pair, KL)


def hinge_loss(pair, config):
    return pair_gradient(pair, config).loss_value


def kl_loss(pair):
    return pair_gradient(pair, KL).loss_value


def _guard_kink(pair, config, h):
    sign = np.sign(pair.l_i - pair.l_j)
    if sign == 0:
        return
    margin = -sign * (pair.theta_i @ pair.w - pair.theta_j @ pair.w) + config.xi
    reach = 10.0 * h * max(1.0, float(np.max(np.abs(pair.theta_i - pair.theta_j))), float(np.max(np.abs(pair.w))))
    if abs(margin) <= reach:
        raise KinkProximityError(f"hinge margin {margin:.3g} is within {reach:.3g} of the kink")


def finite_difference_check(pair, objective, h=GRADCHECK_STEP):
    """
    Largest per-block error of central differences against the analytic gradient

    Each block's error is ||fd - analytic||_inf / max(||analytic||_inf, 1).
    """
    if isinstance(objective, HingeConfig):
        _guard_kink(pair, objective, h)
    analytic = pair_gradient(pair, objective)
    worst = 0.0
    for name in GRADIENT_BLOCKS:
        base = getattr(pair, name)
        numeric = np.empty_like(base)
        for c in range(base.size):
            up, down = base.copy(), base.copy()
            up[c] += h
            down[c] -= h
            upper = pair_gradient(replace(pair, **{name: up}), objective).loss_value
            lower = pair_gradient(replace(pair, **{name: down}), objective).loss_value
            numeric[c] = (upper - lower) / (2.0 * h)
        exact = getattr(analytic, f"grad_{name}")
        scale = max(float(np.max(np.abs(exact))), 1.0)
        worst = max(worst, float(np.max(np.abs(numeric - exact))) / scale)
    return worst


def random_pair(rng, dim=GRADCHECK_DIM):
    """Random pair for gradient checks: losses in (0.01, 1), standard normal features and weights"""
    l_i, l_j = rng.uniform(0.01, 1.0, size=2)
    theta_i, theta_j, w = rng.standard_normal(size=(3, dim))
    return RankPair(l_i=float(l_i), l_j=float(l_j), theta_i=theta_i, theta_j=theta_j, w=w)
