"""
Expected pairwise ranking gradient under i.i.d. gamma losses.

For a pair whose losses differ by delta_2, phi is the mean of the
true-loss sampling probability p_i = x / (x + y) given y - x = delta_2.
The expected gradient of the KL objective is (q_i - phi) (theta_i - theta_j).
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate

from config import (MC_MIN_ACCEPTED, PHI_EPSILON_REL, PHI_INSTABILITY_TOL,
                    QUAD_EPSABS, QUAD_EPSREL, QUAD_LIMIT)
from errors import (DimensionMismatchError, DomainError, SampleSizeError,
                    InsufficientAcceptanceError, NumericInstabilityError)
from margin_prob import (MC_MIN_SAMPLES, draw_erlang, quad_upper_limit,
                         run_shards, series_coefficient, series_log_scale)
from specfun import (GammaParams, SignedLogValue, gamma_density,
                     log_erlang_survival, log_upper_incomplete_gamma_zero,
                     require_supported_shape, rounding_error_bound,
                     signed_logsumexp)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ExpectedGradQuery:
    delta2: float
    params: GammaParams
    epsilon_rel: float = PHI_EPSILON_REL

    def __post_init__(self):
        delta2 = float(self.delta2)
        if not math.isfinite(delta2) or delta2 <= 0:
            raise DomainError(f"delta_2 must be positive and finite, got {self.delta2!r}")
        if not (0 < self.epsilon_rel <= 1e-3):
            raise DomainError(f"epsilon_rel must lie in (0, 1e-3], got {self.epsilon_rel!r}")
        object.__setattr__(self, "delta2", delta2)

    @property
    def delta1(self):
        return self.delta2 * (1.0 - self.epsilon_rel)


@dataclass(frozen=True)
class ExpectedGradResult:
    phi: float
    normalizer_D: float  # per unit band width
    i_terms: dict = field(default_factory=dict)


def _index_pairs(k):
    for n in range(1, k + 1):
        for i in range(n):
            yield n, i


def pair_density_normalizer(query):
    """
    Probability mass of delta_1 <= Y - X <= delta_2

    theta * sum_n sum_i [f(delta_1) - f(delta_2)] / Gamma(n)
    """
    k, theta = query.params.k, query.params.theta
    require_supported_shape(k)
    terms = []
    for n, i in _index_pairs(k):
        terms.append(series_coefficient(i, n, k, query.delta1, theta))
        terms.append(-series_coefficient(i, n, k, query.delta2, theta))
    return max(signed_logsumexp(terms).to_float(), 0.0)


def _check_kernel_args(u, delta2, theta):
    if isinstance(u, bool) or int(u) != u or u < 1:
        raise DomainError(f"shape u must be a positive integer, got {u!r}")
    if not math.isfinite(delta2) or delta2 <= 0:
        raise DomainError(f"delta_2 must be positive, got {delta2!r}")
    if not math.isfinite(theta) or theta <= 0:
        raise DomainError(f"theta must be positive, got {theta!r}")


def _kernel_terms(u, delta2, theta):
    z = 2.0 * delta2 / theta
    log_z = math.log(z)
    terms = [SignedLogValue(z + u * log_z - math.lgamma(u) + log_upper_incomplete_gamma_zero(z),
                            (-1) ** (u - 1))]
    for j in range(1, u):
        log_magnitude = (z + (u - j) * log_z - math.log(j) - math.lgamma(u - j)
                         + log_erlang_survival(z, j))
        terms.append(SignedLogValue(log_magnitude, (-1) ** (u - 1 - j)))
    log_scale = 3.0 * z + 2.0 * u * abs(log_z) + 3.0 * math.lgamma(u + 1)
    return terms, log_scale


def i_term(u, delta2, theta):
    """
    I_u = integral_0^inf gamma(s; u, theta/2) delta_2 / (s + delta_2) ds

    Closed form with z = 2 delta_2 / theta:
    sum_{j=0}^{u-1} (-1)^(u-1-j) e^z z^(u-j) / (j! (u-j-1)!) Gamma(j, z),
    where Gamma(j, z) = (j-1)! Q(j, z) for j >= 1 and E1(z) for j = 0.
    The alternating sum loses digits once z is much larger than u;
    i_term_error estimates how many.
    """
    _check_kernel_args(u, delta2, theta)
    terms, _ = _kernel_terms(int(u), delta2, theta)
    return signed_logsumexp(terms).to_float()


def i_term_error(u, delta2, theta):
    """Rounding estimate for i_term(u, delta2, theta)"""
    _check_kernel_args(u, delta2, theta)
    terms, log_scale = _kernel_terms(int(u), delta2, theta)
    return rounding_error_bound(terms, log_scale)


def i_term_quad(u, delta2, theta):
    """Quadrature of the same integral"""
    _check_kernel_args(u, delta2, theta)
    u = int(u)
    z = 2.0 * delta2 / theta
    unit = GammaParams(u, 1.0)
    value, _ = integrate.quad(lambda s: gamma_density(s, unit) * z / (s + z), 0.0, quad_upper_limit(u),
                              epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return value


def difference_density_quad(delta, params):
    """Density of Y - X at delta >= 0, integral_0^inf gamma(x) gamma(x + delta) dx"""
    if not math.isfinite(delta) or delta < 0:
        raise DomainError(f"delta must be finite and >= 0, got {delta!r}")
    k, theta = params.k, params.theta
    d = delta / theta
    unit = GammaParams(k, 1.0)
    value, _ = integrate.quad(lambda u: gamma_density(u, unit) * gamma_density(u + d, unit),
                              0.0, quad_upper_limit(k),
                              epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    return value / theta


def _phi_band(query):
    """phi over [delta_1, delta_2] with an estimate of its rounding error"""
    k, theta = query.params.k, query.params.theta
    require_supported_shape(k)
    # Kernel of the conditional mean: I at scale theta evaluated at delta_2
    kernels, kernel_errors = {}, {}
    for shape in range(k, 2 * k):
        terms, log_scale = _kernel_terms(shape, query.delta2, 2.0 * theta)
        kernels[shape] = signed_logsumexp(terms).to_float()
        kernel_errors[shape] = rounding_error_bound(terms, log_scale)

    numerator, denominator = [], []
    kernel_spread = []
    for n, i in _index_pairs(k):
        band = [series_coefficient(i, n, k, query.delta1, theta),
                -series_coefficient(i, n, k, query.delta2, theta)]
        denominator.extend(band)
        kernel = SignedLogValue.from_float(kernels[k + i])
        numerator.extend(kernel * term for term in band)
        kernel_spread.append(kernel_errors[k + i] * abs(signed_logsumexp(band).to_float()))

    mass = signed_logsumexp(denominator).to_float()
    if mass <= 0:
        raise NumericInstabilityError(
            f"band mass {mass} is not positive at delta_2={query.delta2}, k={k}, theta={theta}")
    weighted = signed_logsumexp(numerator).to_float()
    log_scale = series_log_scale(k, query.delta2, theta)
    error = (rounding_error_bound(numerator, log_scale) + math.fsum(kernel_spread)
             + rounding_error_bound(denominator, log_scale)) / (2.0 * mass)
    return 0.5 - weighted / (2.0 * mass), mass, kernels, error


def phi_closed_at(query):
    """phi over the single band [delta_1, delta_2]; returns (phi, band mass, kernels)"""
    phi, mass, kernels, _ = _phi_band(query)
    return phi, mass, kernels


def phi_closed(query):
    """
    Closed-form phi, Richardson-extrapolated over epsilon and epsilon / 2.

    Raises NumericInstabilityError when the rounding estimate of the
    extrapolated value or the gap between the two band evaluations passes
    PHI_INSTABILITY_TOL, which is where the alternating kernels and the
    band differences have lost their digits.
    """
    phi_wide, mass, kernels, error_wide = _phi_band(query)
    phi_narrow, _, _, error_narrow = _phi_band(replace(query, epsilon_rel=query.epsilon_rel / 2.0))
    error = 2.0 * error_narrow + error_wide
    gap = abs(phi_wide - phi_narrow)
    if not math.isfinite(gap) or gap > PHI_INSTABILITY_TOL or not error <= PHI_INSTABILITY_TOL:
        raise NumericInstabilityError(
            f"phi closed form unstable at delta_2={query.delta2}, k={query.params.k}: "
            f"{phi_wide} vs {phi_narrow}, rounding estimate {error:.2e}")
    width = query.delta2 - query.delta1
    return ExpectedGradResult(phi=2.0 * phi_narrow - phi_wide, normalizer_D=mass / width, i_terms=kernels)


def phi_quad(delta2, params):
    """
    phi from the conditional mean by quadrature; the record value

    E[x / (2x + delta) | y = x + delta] with weight
    x^(k-1) (x + delta)^(k-1) e^(-2x / theta).
    """
    if not math.isfinite(delta2) or delta2 < 0:
        raise DomainError(f"delta_2 must be finite and >= 0, got {delta2!r}")
    if delta2 == 0:
        return 0.5
    k = params.k
    d = delta2 / params.theta
    shift = (k - 1) * math.log1p(d)

    def weight(u):
        if u == 0:
            return 1.0 if k == 1 else 0.0
        return math.exp((k - 1) * (math.log(u) + math.log(u + d)) - shift - 2.0 * u)

    upper = quad_upper_limit(k)
    points = [d] if d < upper else None
    options = dict(points=points, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=QUAD_LIMIT)
    numerator, _ = integrate.quad(lambda u: u / (2.0 * u + d) * weight(u), 0.0, upper, **options)
    denominator, _ = integrate.quad(weight, 0.0, upper, **options)
    return numerator / denominator


def phi_mc(delta2, band_width, params, samples, seed, workers=1):
    """
    Rejection estimate of phi: keep draws with |Y - X - delta_2| <= band_width / 2

    Returns (estimate, standard error).
    """
    if not math.isfinite(delta2) or delta2 < 0:
        raise DomainError(f"delta_2 must be finite and >= 0, got {delta2!r}")
    if not band_width > 0:
        raise DomainError(f"band width must be positive, got {band_width!r}")
    if delta2 > 0 and band_width > delta2 / 10.0:
        raise DomainError(f"band width {band_width} exceeds delta_2 / 10 = {delta2 / 10.0}")
    if samples < MC_MIN_SAMPLES:
        raise SampleSizeError(f"Monte Carlo needs at least {MC_MIN_SAMPLES} samples, got {samples}")
    half = band_width / 2.0

    def accepted_moments(rng, size):
        first = draw_erlang(rng, params, size)
        second = draw_erlang(rng, params, size)
        keep = np.abs(second - first - delta2) <= half
        ratio = first[keep] / (first[keep] + second[keep])
        return int(ratio.size), float(ratio.sum()), float(np.square(ratio).sum())

    shards = run_shards(accepted_moments, samples, seed, workers)
    accepted = sum(shard[0] for shard in shards)
    if accepted < MC_MIN_ACCEPTED:
        raise InsufficientAcceptanceError(
            f"only {accepted} of {samples} draws landed in the band around delta_2={delta2}")
    total = math.fsum(shard[1] for shard in shards)
    total_sq = math.fsum(shard[2] for shard in shards)
    mean = total / accepted
    variance = max(total_sq / accepted - mean * mean, 0.0)
    logger.debug(f"phi MC delta_2={delta2}: {accepted} accepted of {samples}")
    return mean, math.sqrt(variance / accepted)


def expected_gradient_vector(q_i, theta_i, theta_j, delta, params):
    """Expected KL gradient w.r.t. the loss-head weights, (q_i - phi)(theta_i - theta_j)"""
    theta_i = np.asarray(theta_i, dtype=float)
    theta_j = np.asarray(theta_j, dtype=float)
    if theta_i.shape != theta_j.shape:
        raise DimensionMismatchError(f"feature shapes differ: {theta_i.shape} vs {theta_j.shape}")
    if not 0.0 <= q_i <= 1.0:
        raise DomainError(f"q_i must lie in [0, 1], got {q_i!r}")
    return (q_i - phi_quad(delta, params)) * (theta_i - theta_j)
