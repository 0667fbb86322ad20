import math

import numpy as np
import pytest
from scipy import stats

from fidelity_ci import interval as iv
from fidelity_ci import simulator as sim
from fidelity_ci.posterior import SampleSummary


# ---------------------------------------------------------------- states

def test_state_library():
    assert sim.psi_minus().error_prob == 0.0
    assert sim.psi_minus().fidelity == 1.0
    zz = sim.zero_zero()
    assert zz.match_probs == (0.5, 0.5, 1.0)
    assert zz.error_prob == pytest.approx(2 / 3, abs=1e-15)
    assert sim.state_library("werner", 0.2) == sim.werner(0.2)
    assert sim.state_library("zero_zero") == zz
    with pytest.raises(ValueError):
        sim.state_library("werner")
    with pytest.raises(ValueError):
        sim.state_library("ghz")


@pytest.mark.parametrize("p", [0.0, 0.13, 0.2, 0.5, 1.0])
def test_werner_state(p):
    s = sim.werner(p)
    assert s.fidelity == pytest.approx(1 - 0.75 * p, abs=1e-15)
    assert s.match_probs == (p / 2, p / 2, p / 2)
    assert s.error_prob == pytest.approx(2 / 3 * (1 - s.fidelity), abs=1e-15)


def test_pair_state_invariant_enforced():
    with pytest.raises(ValueError):
        sim.PairState(0.9, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        sim.PairState(1.2, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        sim.werner(-0.1)


def test_mixture_of_states():
    mixed = sim.PairState.mixture([(1, sim.psi_minus()), (3, sim.zero_zero())])
    assert mixed.fidelity == pytest.approx(0.25)
    assert mixed.match_probs == pytest.approx((0.375, 0.375, 0.75))
    with pytest.raises(ValueError):
        sim.PairState.mixture([(0, sim.psi_minus())])


# ---------------------------------------------------------------- models

def test_block_rounding_half_up():
    model = sim.HeterogeneousBlock(10, 0.25, sim.psi_minus(), sim.zero_zero())
    assert model.n_good == 3
    assert model.rounding_remainder == pytest.approx(-0.5)
    assert sim.HeterogeneousBlock(10, 0.24, sim.psi_minus(), sim.zero_zero()).n_good == 2


def test_model_validation():
    with pytest.raises(ValueError):
        sim.IIDWerner(1, 0.1)
    with pytest.raises(ValueError):
        sim.IIDWerner(100, 1.5)
    with pytest.raises(ValueError):
        sim.CorrelatedMixture(100, 0.5, 0.2, 0.8, 0.7)
    with pytest.raises(ValueError):
        sim.HeterogeneousBlock(100, 1.1, sim.psi_minus(), sim.zero_zero())


@pytest.mark.parametrize("d", [0.0, 0.3, 0.7, 1.0])
def test_heterogeneity_family(d):
    m = sim.CorrelatedMixture.from_heterogeneity(10000, d)
    assert m.heterogeneity == pytest.approx(d)
    assert m.p_good == pytest.approx(0.2 * (1 - d))
    # Population-average depolarizing rate 0.2, so the mean fidelity is 0.85.
    assert m.mean_fidelity() == pytest.approx(0.85, abs=1e-12)


def test_mixture_branches():
    m = sim.CorrelatedMixture(10000, 0.0, 1.0, 0.81, 0.79)
    hi, lo = m.branches()
    assert (hi.n_good, lo.n_good) == (8100, 7900)
    assert m.mean_fidelity() == pytest.approx(0.5 * (hi.mean_fidelity(10000) + lo.mean_fidelity(10000)))


# ---------------------------------------------------------------- single trials

def test_run_trial_shape_and_determinism():
    model = sim.CorrelatedMixture.from_heterogeneity(500, 0.5)
    a = sim.run_trial(model, 120, seed=11, trial_index=4)
    b = sim.run_trial(model, 120, seed=11, trial_index=4)
    c = sim.run_trial(model, 120, seed=11, trial_index=5)
    assert a == b
    assert a != c
    assert a.sample_set.size == 120 and np.unique(a.sample_set).size == 120
    assert a.sample_set.min() >= 0 and a.sample_set.max() < 500
    assert set(np.unique(a.bases)) <= {0, 1, 2}
    assert a.qber_measured == a.outcomes.mean()
    assert a.summary() == SampleSummary(500, 120, a.errors_measured)


def test_run_trial_validation():
    model = sim.IIDWerner(100, 0.1)
    for m in (0, 100, 2.5):
        with pytest.raises(ValueError):
            sim.run_trial(model, m, 0, 0)


def test_perfect_pairs_never_err():
    model = sim.IIDProduct(300, sim.psi_minus())
    assert all(sim.run_trial(model, 100, 3, i).errors_measured == 0 for i in range(50))


def test_expected_errors_iid_werner():
    p, m, n_trials = 0.2, 100, 10_000
    batch = sim.simulate_trials(sim.IIDWerner(400, p), m, n_trials, seed=1)
    mean = batch.errors.mean()
    sigma = math.sqrt(m * (p / 2) * (1 - p / 2) / n_trials)
    assert abs(mean - m * p / 2) <= 4 * sigma


def test_sample_set_uniform():
    # Each index is sampled with probability M/N.
    n, m, trials = 20, 5, 4000
    model = sim.IIDWerner(n, 0.1)
    counts = np.zeros(n)
    for i in range(trials):
        counts[sim.run_trial(model, m, 9, i).sample_set] += 1
    expected = trials * m / n
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert stats.chi2.sf(chi2, n - 1) > 1e-4


def test_bases_uniform():
    rec = [sim.run_trial(sim.IIDWerner(2000, 0.1), 1500, 2, i) for i in range(4)]
    counts = np.bincount(np.concatenate([r.bases for r in rec]), minlength=3)
    assert stats.chisquare(counts).pvalue > 1e-4


# ---------------------------------------------------------------- true fidelity

def test_true_fidelity_iid_werner():
    model = sim.IIDWerner(300, 0.2)
    for i in range(20):
        assert sim.run_trial(model, 100, 0, i).true_fidelity_unsampled == pytest.approx(0.85, abs=1e-15)


def test_true_fidelity_block_counts_good_pairs():
    model = sim.HeterogeneousBlock(200, 0.6, sim.psi_minus(), sim.zero_zero())
    for i in range(20):
        rec = sim.run_trial(model, 70, 5, i)
        good_left = 120 - np.count_nonzero(rec.sample_set < 120)
        assert rec.true_fidelity_unsampled == pytest.approx(good_left / 130, abs=1e-15)


def test_true_fidelity_identical_branches():
    model = sim.CorrelatedMixture(400, 0.2, 0.2, 0.81, 0.79)
    for i in range(20):
        assert sim.run_trial(model, 150, 1, i).true_fidelity_unsampled == pytest.approx(0.85, abs=1e-14)


def _brute_force_fidelity(model, rec):
    # Product of per-outcome likelihoods, branch by branch, in plain Python.
    weights, values = [], []
    unsampled = [k for k in range(model.n_total) if k not in set(rec.sample_set.tolist())]
    for br in model.branches():
        like = 1.0
        for idx, basis, r in zip(rec.sample_set, rec.bases, rec.outcomes):
            state = br.good_state if idx < br.n_good else br.bad_state
            q = state.match_probs[basis]
            like *= q if r else 1 - q
        weights.append(like)
        values.append(
            sum((br.good_state if k < br.n_good else br.bad_state).fidelity for k in unsampled) / len(unsampled)
        )
    total = sum(weights)
    return sum(w * v for w, v in zip(weights, values)) / total


@pytest.mark.parametrize("trial", range(6))
def test_true_fidelity_mixture_matches_brute_force(trial):
    model = sim.CorrelatedMixture(60, 0.05, 0.6, 0.7, 0.3)
    rec = sim.run_trial(model, 25, 17, trial)
    assert rec.true_fidelity_unsampled == pytest.approx(_brute_force_fidelity(model, rec), rel=1e-12)


def test_true_fidelity_rejects_foreign_record():
    rec = sim.run_trial(sim.IIDWerner(100, 0.1), 10, 0, 0)
    with pytest.raises(ValueError):
        sim.true_unsampled_fidelity(sim.IIDWerner(50, 0.1), rec)


def test_law_of_total_probability():
    model = sim.CorrelatedMixture.from_heterogeneity(1000, 1.0)
    batch = sim.simulate_trials(model, 300, 4000, seed=2)
    se = batch.true_fidelity.std(ddof=1) / math.sqrt(batch.n_trials)
    assert abs(batch.true_fidelity.mean() - model.mean_fidelity()) <= 4 * se


# ---------------------------------------------------------------- batches

def test_parallel_run_is_bit_identical():
    model = sim.CorrelatedMixture.from_heterogeneity(800, 0.8)
    serial = sim.simulate_trials(model, 200, 600, seed=4, threads=1)
    parallel = sim.simulate_trials(model, 200, 600, seed=4, threads=3)
    assert np.array_equal(serial.errors, parallel.errors)
    assert np.array_equal(serial.true_fidelity, parallel.true_fidelity)


def test_threads_from_environment(monkeypatch):
    model = sim.IIDWerner(200, 0.3)
    monkeypatch.setenv(sim.THREADS_ENV, "2")
    a = sim.simulate_trials(model, 50, 100, seed=0)
    monkeypatch.delenv(sim.THREADS_ENV)
    b = sim.simulate_trials(model, 50, 100, seed=0)
    assert np.array_equal(a.errors, b.errors)


def test_batch_matches_single_trials():
    model = sim.CorrelatedMixture.from_heterogeneity(300, 1.0)
    batch = sim.simulate_trials(model, 90, 20, seed=8)
    for i in range(20):
        rec = sim.run_trial(model, 90, 8, i)
        assert batch.errors[i] == rec.errors_measured
        assert batch.true_fidelity[i] == rec.true_fidelity_unsampled


def test_aggregate_sampler_deterministic():
    model = sim.CorrelatedMixture.from_heterogeneity(2000, 1.0)
    a = sim.simulate_summaries(model, 500, 120_000, seed=3)
    b = sim.simulate_summaries(model, 500, 120_000, seed=3)
    assert a.n_trials == 120_000
    assert np.array_equal(a.errors, b.errors) and np.array_equal(a.true_fidelity, b.true_fidelity)


@pytest.mark.parametrize(
    "model",
    [
        sim.CorrelatedMixture.from_heterogeneity(1000, 1.0),
        sim.CorrelatedMixture.from_heterogeneity(1000, 0.4),
        sim.HeterogeneousBlock(1000, 0.5, sim.werner(0.1), sim.werner(0.6)),
    ],
    ids=["mixture-d1", "mixture-d04", "block"],
)
def test_aggregate_sampler_matches_per_trial_law(model):
    m = 400
    slow = sim.simulate_trials(model, m, 4000, seed=5)
    fast = sim.simulate_summaries(model, m, 20_000, seed=6)
    assert stats.ks_2samp(slow.errors, fast.errors).pvalue > 1e-3
    # f_bar lives on a lattice; the engines may land an ulp apart on the same point.
    slow_f, fast_f = np.round(slow.true_fidelity, 12), np.round(fast.true_fidelity, 12)
    assert stats.ks_2samp(slow_f, fast_f).pvalue > 1e-3


def test_aggregate_sampler_rejects_basis_dependent_branch_difference():
    model = sim.HeterogeneousBlock(100, 0.5, sim.psi_minus(), sim.zero_zero())
    batch = sim.simulate_summaries(model, 30, 2000, seed=0)  # one branch: fine
    assert batch.n_trials == 2000

    class TwoBranch(sim.NoiseModel):
        n_total = 100

        def branches(self):
            return (
                sim.Branch(50, sim.psi_minus(), sim.zero_zero()),
                sim.Branch(30, sim.psi_minus(), sim.zero_zero()),
            )

    with pytest.raises(ValueError):
        sim.simulate_summaries(TwoBranch(), 30, 100, seed=0)


# ---------------------------------------------------------------- coverage

def test_coverage_validation():
    model = sim.IIDWerner(1000, 0.2)
    with pytest.raises(ValueError):
        sim.coverage_experiment(model, 100, 0.95, n_trials=999)
    with pytest.raises(ValueError):
        sim.coverage_experiment(model, 100, 0.95, estimators=["bogus"], n_trials=1000)
    with pytest.raises(ValueError):
        sim.coverage_experiment(model, 100, 1.0, n_trials=1000)


def test_coverage_iid_model():
    result = sim.coverage_experiment(sim.IIDWerner(2000, 0.2), 200, 0.9, n_trials=5000, seed=3)
    se = math.sqrt(0.9 * 0.1 / 5000)
    assert abs(result.coverage["iid-exact"] - 0.9) <= 4 * se
    assert result.coverage["general"] >= 0.9 - 3 * se
    assert isinstance(result.coverage["general"], float)
    d = result.to_dict()
    assert set(d["estimators"]) == set(sim.ESTIMATORS)
    assert d["estimators"]["general"]["stderr"] == pytest.approx(result.stderr("general"))


def test_interval_for_dispatch():
    s = SampleSummary(1000, 100, 10)
    assert sim.interval_for("general", s, 0.95) == iv.credible_interval_general(s, 0.95)
    assert sim.interval_for("iid-exact", s, 0.95) == iv.iid_interval_exact(s, 0.95)
    assert sim.interval_for("standard-error", s, 0.95) == iv.standard_error_interval(s)
    with pytest.raises(ValueError):
        sim.interval_for("nope", s, 0.95)


# ---------------------------------------------------------------- conditional intervals

def test_conditional_interval_degenerate_without_heterogeneity():
    model = sim.CorrelatedMixture.from_heterogeneity(10000, 0.0)
    ci = sim.conditional_percentile_interval(model, 1000, 100, 0.95, 50_000, seed=1)
    assert ci.lower == pytest.approx(0.85) and ci.upper == pytest.approx(0.85)
    assert not ci.approximate


def test_conditional_interval_widens_with_m_when_heterogeneous():
    model = sim.CorrelatedMixture.from_heterogeneity(10000, 1.0)
    widths = [
        sim.conditional_percentile_interval(model, m, m // 10, 0.95, 200_000, seed=2).width
        for m in (5000, 7000, 9000)
    ]
    assert widths[0] < widths[1] < widths[2]


def test_general_interval_covers_conditional_interval():
    model = sim.CorrelatedMixture.from_heterogeneity(10000, 1.0)
    for m in (1000, 5000, 9000):
        cond = sim.conditional_percentile_interval(model, m, m // 10, 0.95, 200_000, seed=3)
        general = iv.credible_interval_general(SampleSummary(10000, m, m // 10), 0.95)
        assert general.raw_lower <= cond.lower and cond.upper <= general.raw_upper


def test_conditional_interval_insufficient_data():
    model = sim.CorrelatedMixture.from_heterogeneity(10000, 1.0)
    with pytest.raises(sim.InsufficientDataError, match="increase n_trials"):
        sim.conditional_percentile_interval(model, 9000, 900, 0.95, 1000, seed=0)


def test_conditional_interval_tolerance_and_engines():
    model = sim.CorrelatedMixture.from_heterogeneity(1000, 1.0)
    batch = sim.simulate_trials(model, 300, 5000, seed=4)
    exact = sim.conditional_percentile_interval(model, 300, 30, 0.9, None, seed=None, batch=batch)
    loose = sim.conditional_percentile_interval(model, 300, 30, 0.9, None, seed=None, tolerance=1, batch=batch)
    per_trial = sim.conditional_percentile_interval(model, 300, 30, 0.9, 5000, seed=4, engine="per-trial")
    assert per_trial == exact
    assert loose.approximate and loose.n_accepted > exact.n_accepted
    with pytest.raises(ValueError):
        sim.conditional_percentile_interval(model, 300, 30, 0.9, 1000, seed=4, engine="gpu")


# ---------------------------------------------------------------- error distribution

def test_error_distribution_perfect_pairs_degenerate():
    model = sim.IIDProduct(1000, sim.psi_minus())
    dist = sim.error_distribution(model, 100, 1000, seed=0)
    expected = iv.center_estimate(SampleSummary(1000, 100, 0)) - 1.0
    assert expected < 0
    assert np.all(dist.errors == expected)
    assert dist.counts.sum() == 1000


def test_error_distribution_histogram():
    dist = sim.error_distribution(sim.IIDWerner(2000, 0.2), 500, 2000, seed=1, bins=30)
    assert dist.counts.sum() == dist.n_trials == 2000
    assert dist.bin_edges.size == 31
    assert abs(dist.standard_error_coverage - 0.68) < 0.05
    with pytest.raises(ValueError):
        sim.error_distribution(sim.IIDWerner(2000, 0.2), 500, 10, seed=1)
