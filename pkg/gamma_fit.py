"""
Integer-shape gamma fits of observed loss samples.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from config import FIT_MIN_SAMPLES, FIT_ZERO_CLIP, K_MAX
from errors import DomainError, SampleSizeError, ShapeRangeError
from specfun import GammaParams, erlang_cdf

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FitCandidate:
    k: int
    theta: float
    log_likelihood: float


@dataclass(frozen=True)
class FitResult:
    params: GammaParams
    log_likelihood: float
    candidates: list = field(default_factory=list)


def _prepare(samples):
    values = np.asarray(samples, dtype=float).ravel()
    if values.size < FIT_MIN_SAMPLES:
        raise SampleSizeError(f"need at least {FIT_MIN_SAMPLES} samples to fit, got {values.size}")
    if not np.all(np.isfinite(values)):
        raise DomainError("loss samples must be finite")
    if np.any(values < 0):
        raise DomainError(f"loss samples must be >= 0, found {int(np.sum(values < 0))} negative")
    zeros = int(np.sum(values == 0))
    if zeros:
        logger.warning(f"Clipping {zeros} zero losses to {FIT_ZERO_CLIP}")
        values = np.where(values == 0, FIT_ZERO_CLIP, values)
    return values


def fit_integer_gamma(samples, k_max=K_MAX):
    """
    Profile maximum likelihood over k = 1..k_max with theta_k = mean / k.

    Ties go to the smaller k.
    """
    if isinstance(k_max, bool) or int(k_max) != k_max or k_max < 1:
        raise DomainError(f"k_max must be a positive integer, got {k_max!r}")
    if k_max > K_MAX:
        raise ShapeRangeError(f"k_max={k_max} exceeds the supported maximum {K_MAX}")
    values = _prepare(samples)
    mean = float(np.mean(values))

    candidates = []
    best = None
    for k in range(1, int(k_max) + 1):
        theta = mean / k
        log_likelihood = float(np.sum(stats.gamma.logpdf(values, a=k, scale=theta)))
        candidate = FitCandidate(k=k, theta=theta, log_likelihood=log_likelihood)
        candidates.append(candidate)
        if best is None or candidate.log_likelihood > best.log_likelihood:
            best = candidate

    logger.info(f"Fitted gamma(k={best.k}, theta={best.theta:.6g}) to {values.size} losses")
    return FitResult(params=GammaParams(best.k, best.theta), log_likelihood=best.log_likelihood,
                     candidates=candidates)


def squared_residual_samples(n_gaussians, sigma, count, seed):
    """Sums of n_gaussians squared N(0, sigma^2) draws, gamma(n/2, 2 sigma^2) distributed"""
    if isinstance(n_gaussians, bool) or int(n_gaussians) != n_gaussians or n_gaussians < 2 or n_gaussians % 2:
        raise DomainError(f"n_gaussians must be an even integer >= 2, got {n_gaussians!r}")
    if not sigma > 0:
        raise DomainError(f"sigma must be positive, got {sigma!r}")
    rng = np.random.default_rng(seed)
    draws = rng.normal(0.0, sigma, size=(int(count), int(n_gaussians)))
    return np.sum(draws * draws, axis=1)


def ks_statistic(samples, params):
    """Kolmogorov-Smirnov distance between the samples and gamma(params)"""
    values = np.asarray(samples, dtype=float).ravel()
    cdf = np.vectorize(lambda x: erlang_cdf(max(float(x), 0.0), params))
    return float(stats.kstest(values, cdf).statistic)
