"""Beta-binomial posterior of the unsampled error count.

Given ``M`` sampled pairs out of ``N`` with ``e_M`` observed errors, and a
Jeffreys hyperprior on the error rate, the number of errors ``e`` among the
``N - M`` unsampled pairs is beta-binomial with shapes
``(e_M + 1/2, M - e_M + 1/2)``. The unsampled error rate is
``E_U = e / (N - M)``.

Two routes to the central moments of ``E_U`` are provided:

* ``central_moments_direct`` sums nonnegative terms over the full pmf and is
  the production path at any scale;
* ``raw_moment_analytic`` / ``central_moment_analytic`` use Stirling numbers
  of the second kind and exact rational arithmetic. They are only intended
  for cross-checking at small ``N - M``.
"""

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import comb

import numpy as np

from .numerics import falling_factorial, ln_beta, ln_choose, stirling2

__all__ = [
    "SampleSummary",
    "PosteriorMoments",
    "posterior_pmf",
    "posterior_pmf_all",
    "posterior_mean",
    "central_moments_direct",
    "raw_moment_analytic",
    "central_moment_analytic",
    "variance_closed_form",
]

ANALYTIC_MAX_ORDER = 10
ANALYTIC_MAX_UNSAMPLED = 10_000
DIRECT_MAX_ORDER = 64


@dataclass(frozen=True)
class SampleSummary:
    """Sufficient statistic of one measurement round.

    Attributes:
        n_total: number of qubit pairs shared, ``N``.
        n_measured: number of pairs sampled and measured, ``M``.
        errors_measured: number of sampled pairs whose outcomes matched, ``e_M``.
    """

    n_total: int
    n_measured: int
    errors_measured: int

    def __post_init__(self):
        for name in ("n_total", "n_measured", "errors_measured"):
            value = getattr(self, name)
            if isinstance(value, bool) or int(value) != value:
                raise ValueError(f"{name} must be an integer, got {value!r}")
            object.__setattr__(self, name, int(value))
        if self.n_measured < 1:
            raise ValueError("n_measured must be >= 1")
        if self.n_measured >= self.n_total:
            raise ValueError("n_measured must be < n_total (no unsampled pairs left)")
        if not 0 <= self.errors_measured <= self.n_measured:
            raise ValueError("errors_measured must satisfy 0 <= errors_measured <= n_measured")

    @classmethod
    def from_qber(cls, n_total, n_measured, qber):
        """Build a summary from a measured QBER, rounding ``qber * M`` to a count."""
        if not 0.0 <= qber <= 1.0:
            raise ValueError("qber must lie in [0, 1]")
        return cls(n_total, n_measured, int(round(qber * n_measured)))

    @property
    def n_unsampled(self):
        return self.n_total - self.n_measured

    @property
    def qber(self):
        """Measured QBER ``e_M / M``."""
        return self.errors_measured / self.n_measured

    @property
    def shape_a(self):
        return self.errors_measured + 0.5

    @property
    def shape_b(self):
        return self.n_measured - self.errors_measured + 0.5

    @cached_property
    def log_normalizer(self):
        """ln B(e_M + 1/2, M - e_M + 1/2), shared by every pmf value."""
        return ln_beta(self.shape_a, self.shape_b)

    @cached_property
    def _pmf(self):
        e = np.arange(self.n_unsampled + 1, dtype=float)
        log_p = (
            ln_choose(float(self.n_unsampled), e)
            + ln_beta(e + self.shape_a, self.n_unsampled - e + self.shape_b)
            - self.log_normalizer
        )
        pmf = np.exp(log_p)
        pmf.setflags(write=False)
        return pmf


@dataclass(frozen=True)
class PosteriorMoments:
    """Mean and even central moments of the unsampled QBER posterior.

    ``central_moments[t - 1]`` holds the ``2t``-th central moment, for
    ``t = 1 .. max_order // 2``.
    """

    mean_unsampled_qber: float
    central_moments: tuple = field(default_factory=tuple)
    max_order: int = 2

    def moment(self, order):
        """The central moment of the given even order."""
        if order % 2 or not 2 <= order <= self.max_order:
            raise ValueError(f"order must be even in [2, {self.max_order}]")
        return self.central_moments[order // 2 - 1]

    def to_dict(self):
        return {
            "mean_unsampled_qber": self.mean_unsampled_qber,
            "max_order": self.max_order,
            "central_moments": {
                str(2 * (i + 1)): m for i, m in enumerate(self.central_moments)
            },
        }


def posterior_pmf(summary, e):
    """Posterior probability that ``e`` of the unsampled pairs are errors."""
    e_arr = np.asarray(e)
    if np.any((e_arr < 0) | (e_arr > summary.n_unsampled)) or np.any(e_arr != np.floor(e_arr)):
        raise ValueError(f"e must be an integer in [0, {summary.n_unsampled}], got {e!r}")
    values = summary._pmf[e_arr.astype(int)]
    if e_arr.ndim == 0:
        return float(values)
    return values


def posterior_pmf_all(summary):
    """The full pmf over ``e = 0 .. N - M`` as a read-only array."""
    return summary._pmf


def posterior_mean(summary):
    """Posterior mean of the unsampled QBER, ``eps_M + (1/2 - eps_M)/(M + 1)``."""
    eps = summary.qber
    return eps + (0.5 - eps) / (summary.n_measured + 1)


def _direct_moments(summary, max_order):
    pmf = summary._pmf
    dev = np.arange(summary.n_unsampled + 1) / summary.n_unsampled - posterior_mean(summary)
    sq = dev * dev
    power = np.ones_like(sq)
    out = []
    for _ in range(max_order // 2):
        power = power * sq
        out.append(float(np.dot(pmf, power)))
    return tuple(out)


def central_moments_direct(summary, max_order):
    """Even central moments of the unsampled QBER by direct summation.

    Cost is ``O(max_order * (N - M))``. All summands are nonnegative, so
    there is no cancellation at any ``N``.
    """
    max_order = int(max_order)
    if max_order % 2 or not 2 <= max_order <= DIRECT_MAX_ORDER:
        raise ValueError(f"max_order must be even in [2, {DIRECT_MAX_ORDER}]")
    return PosteriorMoments(
        mean_unsampled_qber=posterior_mean(summary),
        central_moments=_direct_moments(summary, max_order),
        max_order=max_order,
    )


def _check_analytic_envelope(summary, order):
    if not 0 <= order <= ANALYTIC_MAX_ORDER:
        raise ValueError(f"analytic moments are limited to order <= {ANALYTIC_MAX_ORDER}")
    if summary.n_unsampled > ANALYTIC_MAX_UNSAMPLED:
        raise ValueError(
            f"analytic moments are limited to N - M <= {ANALYTIC_MAX_UNSAMPLED}"
        )


def _raw_moment_exact(summary, j):
    # a = (M+1) eps_E = e_M + 1/2 and b = (M+1)(1 - eps_E) = M - e_M + 1/2 exactly.
    a = Fraction(2 * summary.errors_measured + 1, 2)
    b = Fraction(2 * (summary.n_measured - summary.errors_measured) + 1, 2)
    total = Fraction(0)
    ratio = Fraction(1)  # B(l + a, b) / B(a, b)
    for l in range(j + 1):
        if l:
            ratio *= (a + l - 1) / (a + b + l - 1)
        total += stirling2(j, l) * falling_factorial(summary.n_unsampled, l) * ratio
    return total


def raw_moment_analytic(summary, j):
    """j-th raw moment of the unsampled error count ``S_U`` (Stirling-number form)."""
    _check_analytic_envelope(summary, j)
    return float(_raw_moment_exact(summary, j))


def central_moment_analytic(summary, order):
    """Central moment of the unsampled QBER of the given order, from raw moments.

    Evaluated in exact rational arithmetic, so the alternating binomial
    sum does not lose precision.
    """
    _check_analytic_envelope(summary, order)
    if order < 1:
        raise ValueError("order must be a positive integer")
    u = summary.n_unsampled
    eps_e = Fraction(2 * summary.errors_measured + 1, 2 * (summary.n_measured + 1))
    total = Fraction(0)
    for j in range(order + 1):
        raw = _raw_moment_exact(summary, order - j)
        total += (-1) ** j * comb(order, j) * eps_e**j * raw / Fraction(u) ** (order - j)
    return float(total)


def variance_closed_form(summary):
    """Posterior variance ``(N+1) / ((N-M)(M+2)) * eps_E (1 - eps_E)``."""
    eps_e = posterior_mean(summary)
    n, m = summary.n_total, summary.n_measured
    return (n + 1) / ((n - m) * (m + 2)) * eps_e * (1.0 - eps_e)
