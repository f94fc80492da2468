"""
Scalar special functions for integer-shape gamma (Erlang) distributions.

Everything here is a pure function of its arguments. Series whose terms
alternate in sign or overflow are carried in signed log space
(SignedLogValue) and only materialized once summed.
"""

import logging
import math
from dataclasses import dataclass

from scipy.special import gammaln

from config import CANCELLATION_ULPS, K_MAX
from errors import DomainError, NumericInstabilityError, ShapeRangeError

logger = logging.getLogger(__name__)

EULER_GAMMA = 0.5772156649015329
_ULP = 2.0 ** -52
_E1_EPS = 1e-15
_E1_MAX_ITERATIONS = 1000
_TINY = 1e-300


@dataclass(frozen=True)
class GammaParams:
    """Integer shape k and scale theta of the loss distribution gamma(k, theta)"""

    k: int
    theta: float

    def __post_init__(self):
        if isinstance(self.k, bool) or not _is_integral(self.k) or self.k < 1:
            raise DomainError(f"shape k must be a positive integer, got {self.k!r}")
        theta = float(self.theta)
        if not math.isfinite(theta) or theta <= 0:
            raise DomainError(f"scale theta must be positive and finite, got {self.theta!r}")
        object.__setattr__(self, "k", int(self.k))
        object.__setattr__(self, "theta", theta)


@dataclass(frozen=True)
class SignedLogValue:
    """A real number stored as (ln|v|, sign); sign 0 means exactly zero"""

    log_magnitude: float
    sign: int

    def __post_init__(self):
        if self.sign not in (-1, 0, 1):
            raise DomainError(f"sign must be -1, 0 or +1, got {self.sign!r}")
        if self.sign == 0 or self.log_magnitude == -math.inf:
            object.__setattr__(self, "sign", 0)
            object.__setattr__(self, "log_magnitude", -math.inf)

    @classmethod
    def zero(cls):
        return cls(-math.inf, 0)

    @classmethod
    def from_float(cls, value):
        if value == 0:
            return cls.zero()
        return cls(math.log(abs(value)), 1 if value > 0 else -1)

    @property
    def is_zero(self):
        return self.sign == 0

    def to_float(self):
        if self.sign == 0:
            return 0.0
        return self.sign * math.exp(self.log_magnitude)

    def __mul__(self, other):
        if self.sign == 0 or other.sign == 0:
            return SignedLogValue.zero()
        return SignedLogValue(self.log_magnitude + other.log_magnitude, self.sign * other.sign)

    def __neg__(self):
        return SignedLogValue(self.log_magnitude, -self.sign)


def _is_integral(value):
    try:
        return int(value) == value
    except (TypeError, ValueError, OverflowError):
        return False


def _check_count(name, value):
    if isinstance(value, bool) or not _is_integral(value) or value < 0:
        raise DomainError(f"{name} must be a nonnegative integer, got {value!r}")
    return int(value)


def _check_nonnegative(name, value):
    if not math.isfinite(value) or value < 0:
        raise DomainError(f"{name} must be finite and >= 0, got {value!r}")


def require_supported_shape(k):
    """Reject shapes the closed forms are not trusted for"""
    if k > K_MAX:
        raise ShapeRangeError(f"shape k={k} exceeds the supported maximum {K_MAX}")


def log_gamma(x):
    if not math.isfinite(x) or x <= 0:
        raise DomainError(f"log_gamma needs a positive finite argument, got {x!r}")
    return float(gammaln(x))


def log_binomial(n, r):
    n = _check_count("n", n)
    r = _check_count("r", r)
    if r > n:
        raise DomainError(f"binomial C({n}, {r}) needs r <= n")
    return log_gamma(n + 1) - log_gamma(r + 1) - log_gamma(n - r + 1)


def log_permutation(n, r):
    """ln P(n, r) = ln(n! / (n - r)!)"""
    n = _check_count("n", n)
    r = _check_count("r", r)
    if r > n:
        raise DomainError(f"permutation P({n}, {r}) needs r <= n")
    return log_gamma(n + 1) - log_gamma(n - r + 1)


def signed_logsumexp(terms):
    """Sum signed-log values; math.fsum keeps the result independent of term order"""
    live = [term for term in terms if term.sign != 0]
    if not live:
        return SignedLogValue.zero()
    peak = max(term.log_magnitude for term in live)
    if not math.isfinite(peak):
        raise NumericInstabilityError(f"non-finite term in signed sum (peak {peak})")
    total = math.fsum(term.sign * math.exp(term.log_magnitude - peak) for term in live)
    if total == 0.0:
        return SignedLogValue.zero()
    return SignedLogValue(peak + math.log(abs(total)), 1 if total > 0 else -1)


def rounding_error_bound(terms, log_scale):
    """
    Absolute error estimate for signed_logsumexp(terms)

    A term exp(l) whose exponent l was built from pieces with absolute sum
    log_scale carries a relative error of a few ulps of log_scale. The bound
    is that error summed over |terms|, padded by CANCELLATION_ULPS.
    """
    live = [term for term in terms if term.sign != 0]
    if not live:
        return 0.0
    peak = max(term.log_magnitude for term in live)
    if not math.isfinite(peak):
        raise NumericInstabilityError(f"non-finite term in signed sum (peak {peak})")
    magnitude = math.fsum(math.exp(term.log_magnitude - peak) for term in live)
    return math.exp(peak) * magnitude * (CANCELLATION_ULPS + 4.0 * log_scale) * _ULP


def log_erlang_survival(z, k):
    """ln Q(k, z), the regularized upper tail e^-z sum_{n<k} z^n / n!, for any k >= 1"""
    if z == 0:
        return 0.0
    log_z = math.log(z)
    logs = [(n - 1) * log_z - math.lgamma(n) for n in range(1, k + 1)]
    peak = max(logs)
    return -z + peak + math.log(math.fsum(math.exp(value - peak) for value in logs))


def erlang_lower_regularized(z, k):
    """Regularized lower incomplete gamma P(k, z) for integer k >= 1"""
    if z == 0:
        return 0.0
    if z < k:
        # P(k, z) = e^-z z^k / k! * sum_m z^m / ((k+1)...(k+m)), all terms positive
        term = 1.0
        total = 1.0
        m = 0
        while term > total * 1e-17:
            m += 1
            term *= z / (k + m)
            total += term
        return math.exp(-z + k * math.log(z) - math.lgamma(k + 1) + math.log(total))
    return -math.expm1(log_erlang_survival(z, k))


def gamma_density(x, params):
    _check_nonnegative("x", x)
    k, theta = params.k, params.theta
    if x == 0:
        return 1.0 / theta if k == 1 else 0.0
    return math.exp((k - 1) * math.log(x) - x / theta - k * math.log(theta) - math.lgamma(k))


def gamma_antiderivative_G(x, params):
    """
    G(x, k, theta) = -e^(-x/theta) sum_{n=1..k} (x/theta)^(n-1) / (n-1)!

    The antiderivative of the gamma density with G(0) = -1 and G(inf) = 0.
    """
    _check_nonnegative("x", x)
    require_supported_shape(params.k)
    return -math.exp(log_erlang_survival(x / params.theta, params.k))


def erlang_cdf(x, params):
    """G(x) - G(0); evaluated by the lower series below the mode to keep small values exact"""
    _check_nonnegative("x", x)
    require_supported_shape(params.k)
    return erlang_lower_regularized(x / params.theta, params.k)


def _exp1_series(x):
    # E1(x) = -gamma - ln x - sum_{n>=1} (-x)^n / (n * n!)
    total = 0.0
    term = 1.0
    for n in range(1, _E1_MAX_ITERATIONS + 1):
        term *= -x / n
        piece = term / n
        total += piece
        if abs(piece) <= _E1_EPS * abs(total):
            return -EULER_GAMMA - math.log(x) - total
    raise NumericInstabilityError(f"E1 power series did not converge at x={x}")


def _exp1_fraction_scaled(x):
    # Modified Lentz evaluation of e^x E1(x)
    b = x + 1.0
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _E1_MAX_ITERATIONS + 1):
        a = -float(i * i)
        b += 2.0
        d = 1.0 / (a * d + b)
        c = b + a / c
        step = c * d
        h *= step
        if abs(step - 1.0) <= _E1_EPS:
            return h
    raise NumericInstabilityError(f"E1 continued fraction did not converge at x={x}")


def log_upper_incomplete_gamma_zero(x):
    """ln E1(x); stays finite where E1 itself underflows"""
    if not math.isfinite(x) or x <= 0:
        raise DomainError(f"Gamma(0, x) diverges for x <= 0, got {x!r}")
    if x < 1.0:
        return math.log(_exp1_series(x))
    return math.log(_exp1_fraction_scaled(x)) - x


def upper_incomplete_gamma_zero(x):
    """Gamma(0, x) = E1(x) = integral_x^inf e^-t / t dt"""
    return math.exp(log_upper_incomplete_gamma_zero(x))
