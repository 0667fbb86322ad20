"""Credible intervals for the average fidelity of the unsampled pairs.

All radii are in fidelity units: the QBER-to-fidelity slope of 3/2 is
applied here and never by callers.
"""

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache

from .numerics import inv_reg_inc_beta, std_normal_quantile
from .posterior import (
    DIRECT_MAX_ORDER,
    SampleSummary,
    central_moments_direct,
    posterior_mean,
    variance_closed_form,
)

__all__ = [
    "CredibleInterval",
    "RadiusDecomposition",
    "ROUNDING_OFFSET",
    "optimal_moment_order",
    "center_estimate",
    "moment_radii",
    "radius_general",
    "credible_interval_general",
    "credible_interval",
    "radius_2_closed_form",
    "radius_2_at_center",
    "exact_optimal_order",
    "iid_interval_exact",
    "iid_interval_asymptotic",
    "standard_error_interval",
    "radius_decomposition",
    "excessive_measurement_threshold",
]

FIDELITY_SLOPE = 1.5
ROUNDING_OFFSET = 0.8
ASYMPTOTIC_MIN_MEASURED = 100


@dataclass(frozen=True)
class CredibleInterval:
    """An interval estimate of the unsampled average fidelity.

    ``raw_lower``/``raw_upper`` are the unclamped endpoints that the radius
    formulas produce; ``lower``/``upper`` are clamped to [0, 1] for
    presentation. For the asymmetric i.i.d. exact interval ``radius`` is
    half the raw width and ``center`` the posterior mean.
    """

    center: float
    radius: float
    credible_level: float
    moment_order_used: object
    raw_lower: float
    raw_upper: float

    @classmethod
    def symmetric(cls, center, radius, credible_level, moment_order_used):
        return cls(
            center=center,
            radius=radius,
            credible_level=credible_level,
            moment_order_used=moment_order_used,
            raw_lower=center - radius,
            raw_upper=center + radius,
        )

    @property
    def lower(self):
        return min(1.0, max(0.0, self.raw_lower))

    @property
    def upper(self):
        return min(1.0, max(0.0, self.raw_upper))

    @property
    def width(self):
        return self.raw_upper - self.raw_lower

    def contains(self, value):
        return self.raw_lower <= value <= self.raw_upper

    def to_dict(self):
        return {
            "center": self.center,
            "radius": self.radius,
            "credible_level": self.credible_level,
            "moment_order_used": self.moment_order_used,
            "raw_lower": self.raw_lower,
            "raw_upper": self.raw_upper,
            "lower": self.lower,
            "upper": self.upper,
        }


@dataclass(frozen=True)
class RadiusDecomposition:
    measurement_term: float
    tail_term_general: float
    tail_term_iid: float
    atypicality_term: float
    cramer_rao_reference: float

    @property
    def radius_2(self):
        return self.measurement_term * self.tail_term_general * self.atypicality_term

    @property
    def radius_iid(self):
        return self.measurement_term * self.tail_term_iid

    def to_dict(self):
        return {
            "measurement_term": self.measurement_term,
            "tail_term_general": self.tail_term_general,
            "tail_term_iid": self.tail_term_iid,
            "atypicality_term": self.atypicality_term,
            "cramer_rao_reference": self.cramer_rao_reference,
        }


def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1), got {alpha}")


def _check_order(order):
    if int(order) != order or order % 2 or not 2 <= order <= DIRECT_MAX_ORDER:
        raise ValueError(f"moment order must be an even integer in [2, {DIRECT_MAX_ORDER}]")
    return int(order)


def optimal_moment_order(alpha):
    """Largest moment order worth computing at credible level ``alpha``.

    ``2 * round((-2 ln(1 - alpha) + 0.8) / 2)``, rounding halves up and
    never returning less than 2.
    """
    _check_alpha(alpha)
    half = (-2.0 * math.log1p(-alpha) + ROUNDING_OFFSET) / 2.0
    return max(2, 2 * math.floor(half + 0.5))


def center_estimate(summary):
    """Posterior mean fidelity ``1 - 3/2 * eps_E``."""
    return 1.0 - FIDELITY_SLOPE * posterior_mean(summary)


@lru_cache(maxsize=4096)
def _central_moments(summary, max_order):
    return central_moments_direct(summary, max_order).central_moments


def moment_radii(summary, alpha, max_order):
    """Per-moment radii ``3/2 (M_2t / (1 - alpha))^(1/2t)``, t = 1 .. max_order/2."""
    _check_alpha(alpha)
    max_order = _check_order(max_order)
    out = []
    for t, m in enumerate(_central_moments(summary, max_order), start=1):
        out.append(FIDELITY_SLOPE * (m / (1.0 - alpha)) ** (1.0 / (2 * t)))
    return out


def radius_general(summary, alpha, max_order):
    """Radius valid under arbitrary noise using even moments up to ``max_order``."""
    return min(moment_radii(summary, alpha, max_order))


def credible_interval(summary, alpha, max_order):
    """The general-noise interval with an explicit maximum moment order."""
    center = center_estimate(summary)
    radius = radius_general(summary, alpha, max_order)
    return CredibleInterval.symmetric(center, radius, alpha, int(max_order))


def credible_interval_general(summary, alpha):
    """The general-noise interval at the optimal computed moment order."""
    return credible_interval(summary, alpha, optimal_moment_order(alpha))


def radius_2_closed_form(summary, alpha):
    """Second-moment radius in closed form.

    ``sqrt(1/(1-alpha)) * sqrt((N+1)/(N-M)) * sqrt((2f+1)(1-f) / (2(M+2)))``
    with ``f`` the center estimate.
    """
    _check_alpha(alpha)
    d = radius_decomposition(summary, alpha)
    return d.radius_2


def radius_2_at_center(n_total, n_measured, center, alpha):
    """Second-moment radius as a function of ``(N, M)`` at a given center fidelity."""
    _check_alpha(alpha)
    if not 1 <= n_measured < n_total:
        raise ValueError("need 1 <= n_measured < n_total")
    return _terms(center, n_total, n_measured, alpha).radius_2


def exact_optimal_order(summary, alpha, search_limit=DIRECT_MAX_ORDER):
    """Smallest even order whose radius equals the best radius up to ``search_limit``."""
    radii = moment_radii(summary, alpha, search_limit)
    best = min(radii)
    return 2 * (radii.index(best) + 1)


def iid_interval_exact(summary, alpha):
    """Equal-tail Beta-posterior interval assuming i.i.d. noise.

    Endpoints are ``1 - 3/2 * I^-1_z(e_M + 1/2, M - e_M + 1/2)`` at
    ``z = (1 + alpha)/2`` (lower) and ``z = (1 - alpha)/2`` (upper).
    """
    _check_alpha(alpha)
    a, b = summary.shape_a, summary.shape_b
    lower = 1.0 - FIDELITY_SLOPE * inv_reg_inc_beta((1.0 + alpha) / 2.0, a, b)
    upper = 1.0 - FIDELITY_SLOPE * inv_reg_inc_beta((1.0 - alpha) / 2.0, a, b)
    return CredibleInterval(
        center=center_estimate(summary),
        radius=(upper - lower) / 2.0,
        credible_level=alpha,
        moment_order_used="iid-exact",
        raw_lower=lower,
        raw_upper=upper,
    )


def iid_interval_asymptotic(summary, alpha):
    """Normal-approximation i.i.d. interval ``f +/- Q((1+alpha)/2) * sigma``."""
    _check_alpha(alpha)
    if summary.n_measured < ASYMPTOTIC_MIN_MEASURED:
        warnings.warn(
            f"asymptotic i.i.d. interval with only M={summary.n_measured} measurements",
            RuntimeWarning,
            stacklevel=2,
        )
    d = radius_decomposition(summary, alpha)
    return CredibleInterval.symmetric(
        center_estimate(summary), d.radius_iid, alpha, "iid-asymptotic"
    )


def standard_error_interval(summary):
    """Posterior mean plus-minus one i.i.d. posterior standard deviation."""
    f = center_estimate(summary)
    sigma = _measurement_term(f, summary.n_measured)
    return CredibleInterval.symmetric(f, sigma, math.erf(1.0 / math.sqrt(2.0)), "standard-error")


def _measurement_term(f, m):
    return math.sqrt((2.0 * f + 1.0) * (1.0 - f) / (2.0 * (m + 2)))


def radius_decomposition(summary, alpha):
    """Factors of the second-moment and i.i.d. radii."""
    _check_alpha(alpha)
    return _terms(center_estimate(summary), summary.n_total, summary.n_measured, alpha)


def _terms(f, n, m, alpha):
    return RadiusDecomposition(
        measurement_term=_measurement_term(f, m),
        tail_term_general=math.sqrt(1.0 / (1.0 - alpha)),
        tail_term_iid=std_normal_quantile((1.0 + alpha) / 2.0),
        atypicality_term=math.sqrt((n + 1) / (n - m)),
        cramer_rao_reference=math.sqrt((2.0 * f + 1.0) * (1.0 - f) / (2.0 * m)),
    )


def excessive_measurement_threshold(n_total):
    """Number of measurements at and above which the second-moment radius grows."""
    if n_total < 2:
        raise ValueError("n_total must be >= 2")
    return n_total // 2
