"""
Probability that two i.i.d. gamma(k, theta) losses lie within a margin delta
of each other.

margin_probability_closed is the record value, built from the four integral
pieces A, B, C and D of the split over |X - Y| <= delta.
margin_probability_compact regroups the same series and acts as a
cross-check. Both alternate in sign and lose digits as k grows, so they
raise NumericInstabilityError once their rounding estimate passes
MARGIN_CANCELLATION_TOL. margin_probability_series sums only positive terms
and covers every supported k. margin_probability_quad is the numerical
arbiter and margin_probability_mc an independent sampling check.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import integrate

from config import (MARGIN_CANCELLATION_TOL, MC_SHARD_SIZE, QUAD_EPSABS,
                    QUAD_EPSREL, QUAD_LIMIT, QUAD_TAIL_SIGMAS)
from errors import DomainError, NumericInstabilityError, SampleSizeError
from specfun import (GammaParams, SignedLogValue, erlang_lower_regularized,
                     gamma_density, log_binomial, log_erlang_survival,
                     log_permutation, require_supported_shape,
                     rounding_error_bound, signed_logsumexp)

logger = logging.getLogger(__name__)

MC_MIN_SAMPLES = 1000
_LOG2 = math.log(2.0)


@dataclass(frozen=True)
class MarginQuery:
    delta: float
    params: GammaParams

    def __post_init__(self):
        delta = float(self.delta)
        if not math.isfinite(delta) or delta < 0:
            raise DomainError(f"margin delta must be finite and >= 0, got {self.delta!r}")
        object.__setattr__(self, "delta", delta)


@dataclass(frozen=True)
class MarginBreakdown:
    termA: float
    termB: float
    termC: float
    termD: float
    total: float


def f_coefficient(i, n, k, delta, theta):
    """
    Series coefficient of the integral of x^(n-1) e^(-x/theta) gamma(x + delta; k, theta)

    f = e^(-delta/theta) C(n-1, i) P(k+i-1, i) delta^(n-1-i) / (2^(k+i) theta^(n-i)),
    returned in signed log form. delta may be negative; the sign follows
    the parity of n - 1 - i.
    """
    for name, value in (("i", i), ("n", n), ("k", k)):
        if isinstance(value, bool) or int(value) != value:
            raise DomainError(f"{name} must be an integer, got {value!r}")
    if not (0 <= i <= n - 1 <= k - 1):
        raise DomainError(f"need 0 <= i <= n-1 <= k-1, got i={i}, n={n}, k={k}")
    if not math.isfinite(delta):
        raise DomainError(f"delta must be finite, got {delta!r}")
    if not math.isfinite(theta) or theta <= 0:
        raise DomainError(f"theta must be positive, got {theta!r}")

    power = n - 1 - i
    if power > 0 and delta == 0:
        return SignedLogValue.zero()
    log_magnitude = (-delta / theta
                     + log_binomial(n - 1, i)
                     + log_permutation(k + i - 1, i)
                     - (k + i) * _LOG2
                     - (n - i) * math.log(theta))
    if power > 0:
        log_magnitude += power * math.log(abs(delta))
    sign = -1 if (delta < 0 and power % 2 == 1) else 1
    return SignedLogValue(log_magnitude, sign)


def series_coefficient(i, n, k, delta, theta):
    """theta * f(i, n, k, delta, theta) / Gamma(n), the weight every double sum uses"""
    weight = SignedLogValue(math.log(theta) - math.lgamma(n), 1)
    return f_coefficient(i, n, k, delta, theta) * weight


def _index_pairs(k):
    for n in range(1, k + 1):
        for i in range(n):
            yield n, i


def series_log_scale(k, delta, theta):
    """Bound on the absolute sum of the log-space pieces behind one series term"""
    z = delta / theta
    logs = 1.0 + abs(math.log(theta)) + (abs(math.log(delta)) if delta > 0 else 0.0)
    return 3.0 * z + 6.0 * math.lgamma(2 * k + 1) + 6.0 * k * logs


def _check_cancellation(name, terms, query, value):
    k, theta, delta = query.params.k, query.params.theta, query.delta
    bound = rounding_error_bound(terms, series_log_scale(k, delta, theta))
    if bound > MARGIN_CANCELLATION_TOL:
        raise NumericInstabilityError(
            f"{name} margin series lost its digits at k={k} theta={theta} delta={delta}: "
            f"value {value:.6g}, rounding estimate {bound:.2e}")
    return bound


def margin_probability_closed(query):
    """
    Closed-form P(|X - Y| <= delta) as the sum of the A, B, C and D pieces

    Raises NumericInstabilityError where the signed sums cancel past
    MARGIN_CANCELLATION_TOL; margin_probability_series is the stable route there.
    """
    k, theta = query.params.k, query.params.theta
    require_supported_shape(k)
    delta = query.delta
    # Shape k+i terms are gamma CDFs at scale theta/2
    z_half = 2.0 * delta / theta

    a_terms, c_terms, d_terms = [], [], []
    for n, i in _index_pairs(k):
        shape = k + i
        plus = series_coefficient(i, n, k, delta, theta)
        minus = series_coefficient(i, n, k, -delta, theta)
        lower = SignedLogValue.from_float(erlang_lower_regularized(z_half, shape))
        upper = SignedLogValue(log_erlang_survival(z_half, shape), 1)
        a_terms.append(-(plus * lower))
        c_terms.append(-(plus * upper))
        d_terms.append(minus * upper)

    term_a = signed_logsumexp(a_terms).to_float()
    term_b = erlang_lower_regularized(delta / theta, k)
    term_c = signed_logsumexp(c_terms).to_float()
    term_d = signed_logsumexp(d_terms).to_float()
    if delta == 0:
        total = 0.0
    else:
        total = math.fsum([term_a, term_b, term_c, term_d])
        _check_cancellation("closed", a_terms + c_terms + d_terms + [SignedLogValue.from_float(term_b)],
                            query, total)
    logger.debug(f"margin k={k} theta={theta} delta={delta}: A={term_a} B={term_b} C={term_c} D={term_d}")
    return MarginBreakdown(termA=term_a, termB=term_b, termC=term_c, termD=term_d, total=total)


def margin_probability_compact(query):
    """
    The same probability regrouped as
    1 + G(delta; k, theta) - sum c(delta) + sum c(-delta) Q(k+i, 2 delta / theta)
    """
    k, theta = query.params.k, query.params.theta
    require_supported_shape(k)
    delta = query.delta
    if delta == 0:
        return 0.0
    z_half = 2.0 * delta / theta

    plus_terms, minus_terms = [], []
    for n, i in _index_pairs(k):
        plus_terms.append(-series_coefficient(i, n, k, delta, theta))
        upper = SignedLogValue(log_erlang_survival(z_half, k + i), 1)
        minus_terms.append(series_coefficient(i, n, k, -delta, theta) * upper)

    head = -math.expm1(log_erlang_survival(delta / theta, k))
    total = math.fsum([head,
                       signed_logsumexp(plus_terms).to_float(),
                       signed_logsumexp(minus_terms).to_float()])
    _check_cancellation("compact", plus_terms + minus_terms + [SignedLogValue.from_float(head)], query, total)
    return total


def margin_probability_series(query):
    """
    P(|X - Y| <= delta) from the density of X - Y:
    sum_{j<k} 2^(1-k-j) C(k+j-1, j) P(k-j, delta / theta), every term positive
    """
    k, theta = query.params.k, query.params.theta
    require_supported_shape(k)
    z = query.delta / theta
    if z == 0:
        return 0.0
    terms = [math.exp((1 - k - j) * _LOG2 + log_binomial(k + j - 1, j)) * erlang_lower_regularized(z, k - j)
             for j in range(k)]
    return math.fsum(terms)


def quad_upper_limit(k):
    """Integration cutoff in units of theta"""
    return k + QUAD_TAIL_SIGMAS * math.sqrt(k)


def margin_probability_quad(query):
    """Integral of gamma(x)[F(x + delta) - F(max(x - delta, 0))] by adaptive quadrature"""
    k = query.params.k
    d = query.delta / query.params.theta
    if d == 0:
        return 0.0
    unit = GammaParams(k, 1.0)
    upper = quad_upper_limit(k)

    def integrand(u):
        window = erlang_lower_regularized(u + d, k) - erlang_lower_regularized(max(u - d, 0.0), k)
        return gamma_density(u, unit) * window

    points = [d] if d < upper else None
    value, abserr = integrate.quad(integrand, 0.0, upper, points=points,
                                   epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    logger.debug(f"margin quadrature k={k} d={d}: {value} (abserr {abserr:.2e})")
    return value


def draw_erlang(rng, params, size):
    """Gamma(k, theta) draws as sums of k exponentials"""
    return rng.exponential(params.theta, size=(size, params.k)).sum(axis=1)


def shard_sizes(samples, shard_size=MC_SHARD_SIZE):
    full, rest = divmod(samples, shard_size)
    return [shard_size] * full + ([rest] if rest else [])


def run_shards(task, samples, seed, workers=1, shard_size=MC_SHARD_SIZE):
    """
    Run task(rng, size) over independently seeded shards.

    Shard streams come from SeedSequence(seed).spawn, and results are
    returned in shard order, so the outcome does not depend on workers.
    """
    sizes = shard_sizes(samples, shard_size)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def run(job):
        size, stream = job
        return task(np.random.default_rng(stream), size)

    jobs = list(zip(sizes, streams))
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, jobs))
    return [run(job) for job in jobs]


def margin_probability_mc(query, samples, seed, workers=1):
    """Monte Carlo estimate and binomial standard error of P(|X - Y| <= delta)"""
    if samples < MC_MIN_SAMPLES:
        raise SampleSizeError(f"Monte Carlo needs at least {MC_MIN_SAMPLES} samples, got {samples}")
    params, delta = query.params, query.delta

    def count_hits(rng, size):
        first = draw_erlang(rng, params, size)
        second = draw_erlang(rng, params, size)
        return int(np.count_nonzero(np.abs(first - second) <= delta))

    hits = sum(run_shards(count_hits, samples, seed, workers))
    estimate = hits / samples
    stderr = math.sqrt(estimate * (1.0 - estimate) / samples)
    logger.debug(f"margin MC delta={delta}: {hits}/{samples} hits")
    return estimate, stderr
