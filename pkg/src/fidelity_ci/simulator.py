"""Monte Carlo engine for the measurement protocol.

Every noise model handled here is a uniform mixture of *branches*, and each
branch is a product state: the first ``n_good`` pairs hold ``good_state``
and the rest hold ``bad_state``. Measuring a pair of a product state in a
Pauli basis is then a Bernoulli draw with that pair's match probability in
that basis, and conditioning on the outcomes changes the unsampled pairs
only through the posterior weights of the branches. No density matrices
are needed.

Randomness: trial ``i`` of a run with seed ``s`` draws from
``numpy.random.default_rng([s, i])`` (PCG64 keyed by a SeedSequence), in the
order branch, sample permutation, bases, outcome uniforms. Results depend
only on ``(s, i)``, never on scheduling.
"""

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from . import interval as iv
from .posterior import SampleSummary

__all__ = [
    "PairState",
    "werner",
    "psi_minus",
    "zero_zero",
    "state_library",
    "Branch",
    "NoiseModel",
    "IIDProduct",
    "IIDWerner",
    "HeterogeneousBlock",
    "CorrelatedMixture",
    "TrialRecord",
    "TrialBatch",
    "InsufficientDataError",
    "ESTIMATORS",
    "run_trial",
    "true_unsampled_fidelity",
    "simulate_trials",
    "simulate_summaries",
    "coverage_experiment",
    "conditional_percentile_interval",
    "error_distribution",
]

BASES = ("x", "y", "z")
ESTIMATORS = ("general", "iid-exact", "iid-asymptotic", "standard-error")
THREADS_ENV = "FIDELITY_CI_THREADS"


class InsufficientDataError(ValueError):
    """Too few Monte Carlo trials satisfied a conditioning event."""


@dataclass(frozen=True)
class PairState:
    """Singlet fidelity and per-basis match probabilities of one qubit pair.

    A match (equal outcomes at both nodes) is an error, since the singlet
    anticorrelates in every Pauli basis.
    """

    fidelity: float
    match_prob_x: float
    match_prob_y: float
    match_prob_z: float

    def __post_init__(self):
        for name in ("fidelity", "match_prob_x", "match_prob_y", "match_prob_z"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {value}")
        if abs(self.error_prob - 2.0 / 3.0 * (1.0 - self.fidelity)) > 1e-12:
            raise ValueError(
                "average match probability must equal 2/3 (1 - fidelity) for a "
                "state diagonal in the relevant bases"
            )

    @property
    def match_probs(self):
        return (self.match_prob_x, self.match_prob_y, self.match_prob_z)

    @property
    def error_prob(self):
        """Match probability averaged over a uniformly random basis."""
        return sum(self.match_probs) / 3.0

    @classmethod
    def mixture(cls, components):
        """Convex mixture of states given as ``[(weight, state), ...]``."""
        total = sum(w for w, _ in components)
        if total <= 0 or any(w < 0 for w, _ in components):
            raise ValueError("mixture weights must be nonnegative with a positive sum")
        def avg(attr):
            return sum(w * getattr(s, attr) for w, s in components) / total
        return cls(avg("fidelity"), avg("match_prob_x"), avg("match_prob_y"), avg("match_prob_z"))

    def to_dict(self):
        return {
            "fidelity": self.fidelity,
            "match_prob_x": self.match_prob_x,
            "match_prob_y": self.match_prob_y,
            "match_prob_z": self.match_prob_z,
        }


def werner(p):
    """``p I/4 + (1 - p)|Psi-><Psi-|``: fidelity 1 - 3p/4, match p/2 in every basis."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"depolarizing probability must lie in [0, 1], got {p}")
    return PairState(1.0 - 0.75 * p, 0.5 * p, 0.5 * p, 0.5 * p)


def psi_minus():
    return PairState(1.0, 0.0, 0.0, 0.0)


def zero_zero():
    """Product state |00>: random in x and y, always matching in z."""
    return PairState(0.0, 0.5, 0.5, 1.0)


def state_library(name, p=None):
    """Look up a named pair state (``werner`` needs ``p``)."""
    if name == "werner":
        if p is None:
            raise ValueError("werner state requires p")
        return werner(p)
    if name == "psi_minus":
        return psi_minus()
    if name == "zero_zero":
        return zero_zero()
    raise ValueError(f"unknown state {name!r}")


@dataclass(frozen=True)
class Branch:
    n_good: int
    good_state: PairState
    bad_state: PairState

    def mean_fidelity(self, n_total):
        return (
            self.n_good * self.good_state.fidelity
            + (n_total - self.n_good) * self.bad_state.fidelity
        ) / n_total


def _block_count(n_total, fraction):
    # Round half up; the remainder N*q - count is exposed on the models.
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"fractions must lie in [0, 1], got {fraction}")
    return int(math.floor(n_total * fraction + 0.5))


class NoiseModel:
    """Joint state of ``n_total`` pairs as an equal-weight mixture of branches."""

    n_total: int

    def branches(self):
        raise NotImplementedError

    def mean_fidelity(self):
        bs = self.branches()
        return sum(b.mean_fidelity(self.n_total) for b in bs) / len(bs)

    def _check_n_total(self):
        if int(self.n_total) != self.n_total or self.n_total < 2:
            raise ValueError("n_total must be an integer >= 2")


@dataclass(frozen=True)
class IIDProduct(NoiseModel):
    """Every pair in the same state."""

    n_total: int
    state: PairState

    def __post_init__(self):
        self._check_n_total()

    def branches(self):
        return (Branch(self.n_total, self.state, self.state),)


@dataclass(frozen=True)
class IIDWerner(NoiseModel):
    """Every pair depolarized with the same probability."""

    n_total: int
    error_prob: float

    def __post_init__(self):
        self._check_n_total()
        werner(self.error_prob)

    def branches(self):
        s = werner(self.error_prob)
        return (Branch(self.n_total, s, s),)


@dataclass(frozen=True)
class HeterogeneousBlock(NoiseModel):
    """A block of good pairs followed by a block of bad pairs."""

    n_total: int
    good_fraction: float
    good_state: PairState
    bad_state: PairState

    def __post_init__(self):
        self._check_n_total()
        _block_count(self.n_total, self.good_fraction)

    @property
    def n_good(self):
        return _block_count(self.n_total, self.good_fraction)

    @property
    def rounding_remainder(self):
        return self.n_total * self.good_fraction - self.n_good

    def branches(self):
        return (Branch(self.n_good, self.good_state, self.bad_state),)


@dataclass(frozen=True)
class CorrelatedMixture(NoiseModel):
    """Equal mixture of two block states with different good-channel rates.

    Good pairs are depolarized with ``p_good`` and bad pairs with ``p_bad``;
    branch ``h`` has a fraction ``q_high`` of good pairs, branch ``l`` a
    fraction ``q_low``.
    """

    n_total: int
    p_good: float
    p_bad: float
    q_high: float
    q_low: float

    def __post_init__(self):
        self._check_n_total()
        if not 0.0 <= self.p_good <= self.p_bad <= 1.0:
            raise ValueError("need 0 <= p_good <= p_bad <= 1")
        _block_count(self.n_total, self.q_high)
        _block_count(self.n_total, self.q_low)

    @classmethod
    def from_heterogeneity(cls, n_total, d, base_error=0.2, q_high=0.81, q_low=0.79):
        """Family indexed by the heterogeneity ``d = p_bad - p_good``.

        ``p_good = base_error (1 - d)`` and ``p_bad = p_good + d``. With the
        default rates the population-average depolarizing probability is
        0.2 for every ``d``, so the expected QBER stays at 0.1.
        """
        if not 0.0 <= d <= 1.0:
            raise ValueError("d must lie in [0, 1]")
        p_good = base_error * (1.0 - d)
        return cls(n_total, p_good, min(1.0, p_good + d), q_high, q_low)

    @property
    def heterogeneity(self):
        return self.p_bad - self.p_good

    def branches(self):
        g, b = werner(self.p_good), werner(self.p_bad)
        return (
            Branch(_block_count(self.n_total, self.q_high), g, b),
            Branch(_block_count(self.n_total, self.q_low), g, b),
        )


@dataclass(frozen=True, eq=False)
class TrialRecord:
    """One simulated measurement round."""

    branch: int
    sample_set: np.ndarray
    bases: np.ndarray
    outcomes: np.ndarray
    n_total: int
    true_fidelity_unsampled: float = float("nan")

    @property
    def n_measured(self):
        return int(self.sample_set.size)

    @property
    def errors_measured(self):
        return int(self.outcomes.sum())

    @property
    def qber_measured(self):
        return self.errors_measured / self.n_measured

    def summary(self):
        return SampleSummary(self.n_total, self.n_measured, self.errors_measured)

    def __eq__(self, other):
        if not isinstance(other, TrialRecord):
            return NotImplemented
        return (
            self.branch == other.branch
            and self.n_total == other.n_total
            and np.array_equal(self.sample_set, other.sample_set)
            and np.array_equal(self.bases, other.bases)
            and np.array_equal(self.outcomes, other.outcomes)
            and self.true_fidelity_unsampled == other.true_fidelity_unsampled
        )


def _match_table(branch):
    return np.array([branch.good_state.match_probs, branch.bad_state.match_probs])


def _check_measured(model, n_measured):
    if int(n_measured) != n_measured or not 1 <= n_measured < model.n_total:
        raise ValueError("n_measured must be an integer with 1 <= n_measured < n_total")


def run_trial(model, n_measured, seed, trial_index):
    """Simulate one round: draw a branch, sample set, bases and outcomes."""
    _check_measured(model, n_measured)
    rng = np.random.default_rng([int(seed), int(trial_index)])
    branches = model.branches()
    k = int(rng.integers(len(branches)))
    sample = rng.permutation(model.n_total)[: int(n_measured)]
    bases = rng.integers(0, 3, size=sample.size).astype(np.int8)
    u = rng.random(sample.size)
    br = branches[k]
    is_bad = (sample >= br.n_good).astype(np.int8)
    probs = _match_table(br)[is_bad, bases]
    outcomes = (u < probs).astype(np.int8)
    record = TrialRecord(k, sample, bases, outcomes, model.n_total)
    f = true_unsampled_fidelity(model, record)
    return TrialRecord(k, sample, bases, outcomes, model.n_total, f)


def true_unsampled_fidelity(model, record):
    """Average singlet fidelity of the unsampled pairs given the outcomes.

    For a mixture the branch weights are updated by the likelihood of the
    recorded outcomes before averaging the per-branch fidelities.
    """
    sample = record.sample_set
    if record.n_total != model.n_total or sample.size >= model.n_total:
        raise ValueError("record does not belong to this model")
    if sample.size and (sample.min() < 0 or sample.max() >= model.n_total):
        raise ValueError("record sample indices out of range")
    unsampled = model.n_total - sample.size
    branches = model.branches()
    per_branch = []
    log_like = []
    outcome = record.outcomes.astype(bool)
    for br in branches:
        good_sampled = int(np.count_nonzero(sample < br.n_good))
        good_left = br.n_good - good_sampled
        per_branch.append(
            (good_left * br.good_state.fidelity + (unsampled - good_left) * br.bad_state.fidelity)
            / unsampled
        )
        if len(branches) > 1:
            probs = _match_table(br)[(sample >= br.n_good).astype(np.int8), record.bases]
            with np.errstate(divide="ignore"):
                ll = np.where(outcome, np.log(probs), np.log1p(-probs)).sum()
            log_like.append(ll)
    if len(branches) == 1:
        return float(per_branch[0])
    log_like = np.array(log_like)
    if not np.isfinite(log_like).any():
        raise ValueError("record outcomes are impossible under every branch of the model")
    w = np.exp(log_like - log_like.max())
    w /= w.sum()
    return float(np.dot(w, per_branch))


@dataclass(frozen=True, eq=False)
class TrialBatch:
    """Per-trial sufficient statistics of a Monte Carlo run."""

    n_total: int
    n_measured: int
    errors: np.ndarray
    true_fidelity: np.ndarray

    @property
    def n_trials(self):
        return int(self.errors.size)

    def summaries(self):
        return [SampleSummary(self.n_total, self.n_measured, int(e)) for e in self.errors]


def _trial_block(args):
    model, n_measured, seed, start, stop = args
    errors = np.empty(stop - start, dtype=np.int64)
    fid = np.empty(stop - start)
    for j, i in enumerate(range(start, stop)):
        rec = run_trial(model, n_measured, seed, i)
        errors[j] = rec.errors_measured
        fid[j] = rec.true_fidelity_unsampled
    return errors, fid


def _thread_count(threads):
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    return max(1, int(threads))


def simulate_trials(model, n_measured, n_trials, seed, threads=None):
    """Run trials ``0 .. n_trials - 1`` and collect ``e_M`` and the true fidelity.

    With ``threads > 1`` contiguous blocks of trial indices run in worker
    processes; the output is identical to a serial run.
    """
    _check_measured(model, n_measured)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    workers = min(_thread_count(threads), n_trials)
    if workers == 1:
        errors, fid = _trial_block((model, n_measured, seed, 0, n_trials))
    else:
        bounds = np.linspace(0, n_trials, workers + 1).astype(int)
        jobs = [(model, n_measured, seed, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:])]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_trial_block, jobs))
        errors = np.concatenate([p[0] for p in parts])
        fid = np.concatenate([p[1] for p in parts])
    return TrialBatch(model.n_total, int(n_measured), errors, fid)


AGGREGATE_CHUNK = 50_000


def _block_layout(model):
    # Cut the index range wherever any branch switches from good to bad.
    branches = model.branches()
    cuts = sorted({0, model.n_total, *(b.n_good for b in branches)})
    sizes = np.diff(cuts)
    keep = sizes > 0
    starts = np.array(cuts[:-1])[keep]
    sizes = sizes[keep]
    states = [[b.good_state if st < b.n_good else b.bad_state for st in starts] for b in branches]
    for j in range(len(starts)):
        column = [row[j] for row in states]
        if len(set(column)) > 1 and any(len(set(st.match_probs)) > 1 for st in column):
            raise ValueError(
                "aggregate sampling needs basis-independent states wherever branches differ; "
                "use simulate_trials"
            )
    return sizes, states


def simulate_summaries(model, n_measured, n_trials, seed):
    """Vectorized sampler of ``(e_M, f_bar)`` without per-pair records.

    Draws the number of sampled pairs in each block (multivariate
    hypergeometric) and the errors in each block (binomial with the
    basis-averaged match probability). For block models this has the same
    joint law of ``(e_M, f_bar)`` as ``simulate_trials`` but a different
    random stream. Chunk ``k`` of ``AGGREGATE_CHUNK`` trials uses
    ``default_rng([seed, k])``.
    """
    _check_measured(model, n_measured)
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    sizes, states = _block_layout(model)
    n_branches = len(states)
    err = np.array([[st.error_prob for st in row] for row in states])
    fid = np.array([[st.fidelity for st in row] for row in states])
    # Finite logs plus explicit masks, so 0 * log(0) contributes 0.
    safe_log_m = np.log(np.where(err > 0, err, 1.0))
    safe_log_1m = np.log(np.where(err < 1, 1.0 - err, 1.0))
    never_err = (err == 0).astype(np.int64)
    always_err = (err == 1).astype(np.int64)
    unsampled = model.n_total - n_measured
    errors_out, fid_out = [], []
    for k, start in enumerate(range(0, n_trials, AGGREGATE_CHUNK)):
        size = min(AGGREGATE_CHUNK, n_trials - start)
        rng = np.random.default_rng([int(seed), k])
        branch = rng.integers(n_branches, size=size)
        counts = rng.multivariate_hypergeometric(sizes, n_measured, size=size)
        errs = rng.binomial(counts, err[branch])
        left = sizes - counts
        per_branch = left @ fid.T / unsampled
        if n_branches == 1:
            f_bar = per_branch[:, 0]
        else:
            ll = errs @ safe_log_m.T + (counts - errs) @ safe_log_1m.T
            impossible = (errs @ never_err.T + (counts - errs) @ always_err.T) > 0
            ll[impossible] = -np.inf
            ll -= ll.max(axis=1, keepdims=True)
            w = np.exp(ll)
            f_bar = (w * per_branch).sum(axis=1) / w.sum(axis=1)
        errors_out.append(errs.sum(axis=1))
        fid_out.append(f_bar)
    return TrialBatch(
        model.n_total, int(n_measured), np.concatenate(errors_out), np.concatenate(fid_out)
    )


@lru_cache(maxsize=65536)
def _interval_for(estimator, summary, alpha):
    if estimator == "general":
        return iv.credible_interval_general(summary, alpha)
    if estimator == "iid-exact":
        return iv.iid_interval_exact(summary, alpha)
    if estimator == "iid-asymptotic":
        return iv.iid_interval_asymptotic(summary, alpha)
    if estimator == "standard-error":
        return iv.standard_error_interval(summary)
    raise ValueError(f"unknown estimator {estimator!r}; choose from {ESTIMATORS}")


def interval_for(estimator, summary, alpha):
    """Interval of the named estimator; cached because only ``e_M`` varies across trials."""
    return _interval_for(estimator, summary, float(alpha))


def batch_coverage(batch, estimator, alpha):
    """Fraction of trials whose true fidelity lies in the estimator's interval."""
    hits = 0
    for e, f in zip(batch.errors, batch.true_fidelity):
        ci = interval_for(estimator, SampleSummary(batch.n_total, batch.n_measured, int(e)), alpha)
        hits += ci.contains(f)
    return float(hits) / batch.n_trials


@dataclass(frozen=True)
class CoverageResult:
    n_trials: int
    alpha: float
    coverage: dict = field(default_factory=dict)

    def stderr(self, estimator):
        """Binomial Monte Carlo standard error of a coverage frequency."""
        c = self.coverage[estimator]
        return math.sqrt(c * (1.0 - c) / self.n_trials)

    def to_dict(self):
        return {
            "n_trials": self.n_trials,
            "alpha": self.alpha,
            "estimators": {
                k: {"coverage": v, "stderr": self.stderr(k)} for k, v in self.coverage.items()
            },
        }


def _check_estimators(estimators):
    est = tuple(estimators)
    for e in est:
        if e not in ESTIMATORS:
            raise ValueError(f"unknown estimator {e!r}; choose from {ESTIMATORS}")
    return est


def coverage_experiment(
    model, n_measured, alpha, estimators=ESTIMATORS, n_trials=10_000, seed=0, threads=None
):
    """Empirical coverage of each estimator's interval over independent trials."""
    iv._check_alpha(alpha)
    est = _check_estimators(estimators)
    if n_trials < 1000:
        raise ValueError("coverage experiments need n_trials >= 1000")
    batch = simulate_trials(model, n_measured, n_trials, seed, threads)
    return CoverageResult(
        n_trials=batch.n_trials,
        alpha=alpha,
        coverage={e: batch_coverage(batch, e, alpha) for e in est},
    )


@dataclass(frozen=True)
class ConditionalInterval:
    lower: float
    upper: float
    n_accepted: int
    target_errors: int
    tolerance: int

    @property
    def approximate(self):
        return self.tolerance > 0

    @property
    def width(self):
        return self.upper - self.lower


def conditional_percentile_interval(
    model,
    n_measured,
    target_e_M,
    alpha,
    n_trials,
    seed,
    tolerance=0,
    min_accepted=100,
    threads=None,
    batch=None,
    engine="aggregate",
):
    """Equal-tail percentile interval of the true fidelity given ``e_M``.

    Trials are accepted when ``|e_M - target_e_M| <= tolerance``; the exact
    mode (``tolerance=0``) conditions on equality and any positive tolerance
    is an approximation. ``engine`` selects ``simulate_summaries``
    ("aggregate", the default, cheap enough for rejection sampling) or
    ``simulate_trials`` ("per-trial"). A precomputed ``batch`` may be
    supplied to reuse trials across targets.
    """
    iv._check_alpha(alpha)
    if batch is None:
        if engine == "aggregate":
            batch = simulate_summaries(model, n_measured, n_trials, seed)
        elif engine == "per-trial":
            batch = simulate_trials(model, n_measured, n_trials, seed, threads)
        else:
            raise ValueError("engine must be 'aggregate' or 'per-trial'")
    accepted = batch.true_fidelity[np.abs(batch.errors - target_e_M) <= tolerance]
    if accepted.size < min_accepted:
        raise InsufficientDataError(
            f"only {accepted.size} of {batch.n_trials} trials had e_M within {tolerance} "
            f"of {target_e_M}; increase n_trials (need {min_accepted})"
        )
    lo, hi = np.percentile(accepted, [50.0 * (1.0 - alpha), 50.0 * (1.0 + alpha)])
    return ConditionalInterval(float(lo), float(hi), int(accepted.size), int(target_e_M), int(tolerance))


@dataclass(frozen=True, eq=False)
class ErrorDistribution:
    """Histogram of ``f_tilde - f_bar`` and interval coverage over a run."""

    bin_edges: np.ndarray
    counts: np.ndarray
    errors: np.ndarray
    standard_error_coverage: float
    general_coverage: float
    alpha: float

    @property
    def n_trials(self):
        return int(self.errors.size)


def error_distribution(model, n_measured, n_trials, seed, alpha=0.95, bins=60, threads=None):
    """Estimation errors of the center estimate, binned, with coverage of the
    plus-minus-one-sigma interval and of the general-noise interval."""
    iv._check_alpha(alpha)
    if n_trials < 1000:
        raise ValueError("error distributions need n_trials >= 1000")
    batch = simulate_trials(model, n_measured, n_trials, seed, threads)
    centers = np.array(
        [iv.center_estimate(SampleSummary(batch.n_total, batch.n_measured, int(e))) for e in batch.errors]
    )
    errors = centers - batch.true_fidelity
    span = float(np.max(np.abs(errors))) or 1e-12
    counts, edges = np.histogram(errors, bins=bins, range=(-span, span))
    return ErrorDistribution(
        bin_edges=edges,
        counts=counts,
        errors=errors,
        standard_error_coverage=batch_coverage(batch, "standard-error", alpha),
        general_coverage=batch_coverage(batch, "general", alpha),
        alpha=alpha,
    )
