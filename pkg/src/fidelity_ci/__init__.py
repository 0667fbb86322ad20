"""Credible intervals for the average fidelity of unsampled entangled pairs."""

from .interval import (
    CredibleInterval,
    RadiusDecomposition,
    center_estimate,
    credible_interval,
    credible_interval_general,
    iid_interval_asymptotic,
    iid_interval_exact,
    optimal_moment_order,
    radius_decomposition,
    radius_general,
)
from .posterior import PosteriorMoments, SampleSummary, central_moments_direct, posterior_pmf

__version__ = "0.1.0"

__all__ = [
    "CredibleInterval",
    "PosteriorMoments",
    "RadiusDecomposition",
    "SampleSummary",
    "center_estimate",
    "central_moments_direct",
    "credible_interval",
    "credible_interval_general",
    "iid_interval_asymptotic",
    "iid_interval_exact",
    "optimal_moment_order",
    "posterior_pmf",
    "radius_decomposition",
    "radius_general",
]
