"""Drivers that regenerate the data series behind each figure and table.

Each driver takes a parameter dict (defaults in ``EXPERIMENTS``) plus
``n_trials``/``seed`` and returns an ``ExperimentResult``: column names,
rows of numbers or strings, and a small summary dict.
"""

import csv
import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import interval as iv
from . import simulator as sim
from .posterior import SampleSummary, posterior_pmf_all, variance_closed_form

__all__ = [
    "ExperimentResult",
    "EXPERIMENTS",
    "DEFAULT_TRIALS",
    "parameter_schema",
    "run_experiment",
    "format_value",
    "to_csv",
    "to_json",
    "read_csv",
    "round_floats",
]

SIG_DIGITS = 12


@dataclass
class ExperimentResult:
    experiment: str
    parameters: dict
    columns: list
    rows: list
    summary: dict = field(default_factory=dict)

    def column(self, name):
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def format_value(v):
    """Numbers as 12 significant digits; everything else via ``str``."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.{SIG_DIGITS}g}"
    return str(v)


def round_floats(v):
    if isinstance(v, (float, np.floating)):
        return float(format_value(v))
    if isinstance(v, np.integer):
        return int(v)
    if isinstance(v, dict):
        return {k: round_floats(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [round_floats(x) for x in v]
    return v


def to_csv(result):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(result.columns)
    for row in result.rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def read_csv(text):
    """Parse CSV written by ``to_csv``; numeric cells become floats."""
    reader = csv.reader(io.StringIO(text))
    columns = next(reader)
    rows = []
    for raw in reader:
        row = []
        for cell in raw:
            try:
                row.append(float(cell))
            except ValueError:
                row.append(cell)
        rows.append(row)
    return columns, rows


def to_json(result):
    doc = {
        "experiment": result.experiment,
        "parameters": round_floats(result.parameters),
        "columns": result.columns,
        "rows": [round_floats(list(r)) for r in result.rows],
        "summary": round_floats(result.summary),
    }
    return json.dumps(doc, indent=2)


def _qber_summary(n_total, n_measured, qber):
    return SampleSummary.from_qber(n_total, n_measured, qber)


def _fig1(p, n_trials, seed, threads):
    n, m, f_all, alpha = p["n_total"], p["n_measured"], p["f_all"], p["alpha"]
    if abs(n * f_all - round(n * f_all)) > 1e-9:
        raise ValueError("n_total * f_all must be an integer")
    good, bad = sim.psi_minus(), sim.zero_zero()
    models = {
        "iid": sim.IIDProduct(n, sim.PairState.mixture([(f_all, good), (1.0 - f_all, bad)])),
        "heterogeneous": sim.HeterogeneousBlock(n, f_all, good, bad),
    }
    rows, summary = [], {}
    for name, model in models.items():
        dist = sim.error_distribution(model, m, n_trials, seed, alpha, p["bins"], threads)
        summary[name] = {
            "standard_error_coverage": dist.standard_error_coverage,
            "general_coverage": dist.general_coverage,
        }
        density = dist.counts / (dist.n_trials * np.diff(dist.bin_edges))
        for lo, hi, c, dens in zip(dist.bin_edges[:-1], dist.bin_edges[1:], dist.counts, density):
            rows.append([name, lo, hi, int(c), dens])
    cols = ["noise", "bin_lower", "bin_upper", "count", "density"]
    return cols, rows, summary


def _fig2(p, n_trials, seed, threads):
    s = _qber_summary(p["n_total"], p["n_measured"], p["qber"])
    orders = p["orders"]
    cols = ["alpha", "T_star"] + [f"radius_{t}" for t in orders] + [
        "radius_T_star",
        "iid_exact_lower",
        "iid_exact_upper",
        "radius_iid_asymptotic",
        "ratio_2_over_T_star",
    ]
    rows = []
    for a in np.round(np.arange(p["alpha_min"], p["alpha_max"] + 1e-12, p["alpha_step"]), 10):
        a = float(a)
        t_star = iv.optimal_moment_order(a)
        radii = [iv.radius_general(s, a, t) for t in orders]
        r_star = iv.radius_general(s, a, t_star)
        ex = iv.iid_interval_exact(s, a)
        asym = iv.radius_decomposition(s, a).radius_iid
        r2 = iv.radius_general(s, a, 2)
        rows.append([a, t_star, *radii, r_star, ex.raw_lower, ex.raw_upper, asym, r2 / r_star])
    a = p["headline_alpha"]
    summary = {
        "center": iv.center_estimate(s),
        "headline_alpha": a,
        "ratio_2_over_T_star": iv.radius_general(s, a, 2)
        / iv.radius_general(s, a, iv.optimal_moment_order(a)),
    }
    return cols, rows, summary


def _fig3(p, n_trials, seed, threads):
    m, e_m = p["n_measured"], p["errors_measured"]
    rows, summary = [], {}
    for n in p["n_totals"]:
        s = SampleSummary(n, m, e_m)
        pmf = posterior_pmf_all(s)
        u = s.n_unsampled
        for e, pr in enumerate(pmf):
            rows.append([n, e, e / u, float(pr), float(pr) * u])
        summary[f"N={n}"] = {"variance": variance_closed_form(s)}
    cols = ["N", "e", "qber_unsampled", "pmf", "density"]
    return cols, rows, summary


def _fig4(p, n_trials, seed, threads):
    ratios = p["ratios"]
    rows, summary = [], {}
    for n in p["n_totals"]:
        for a in p["alphas"]:
            t_star = iv.optimal_moment_order(a)
            for q in p["qbers"]:
                radii = []
                for r in ratios:
                    m = int(round(r * n))
                    radii.append(iv.radius_general(_qber_summary(n, m, q), a, t_star))
                ref = radii[ratios.index(0.5)] if 0.5 in ratios else 1.0
                for r, rad in zip(ratios, radii):
                    rows.append([n, a, q, r, rad, rad / ref])
                summary[f"N={n},alpha={a},qber={q}"] = {"argmin_M_over_N": ratios[int(np.argmin(radii))]}
    cols = ["N", "alpha", "qber", "M_over_N", "radius", "normalized_radius"]
    return cols, rows, summary


def _fig5(p, n_trials, seed, threads):
    n, a, q = p["n_total"], p["alpha"], p["expected_qber"]
    cols = ["M", "errors_measured", "iid_lower", "iid_upper", "general_lower", "general_upper"]
    for d in p["heterogeneities"]:
        cols += [f"exa_{d:g}_lower", f"exa_{d:g}_upper", f"exa_{d:g}_accepted"]
    rows = []
    for m in p["n_measured"]:
        e_m = int(round(q * m))
        s = SampleSummary(n, m, e_m)
        ex = iv.iid_interval_exact(s, a)
        gen = iv.credible_interval_general(s, a)
        row = [m, e_m, ex.raw_lower, ex.raw_upper, gen.raw_lower, gen.raw_upper]
        for d in p["heterogeneities"]:
            model = sim.CorrelatedMixture.from_heterogeneity(n, d, p["base_error"], p["q_high"], p["q_low"])
            ci = sim.conditional_percentile_interval(
                model, m, e_m, a, n_trials, seed, tolerance=p["tolerance"], threads=threads
            )
            row += [ci.lower, ci.upper, ci.n_accepted]
        rows.append(row)
    return cols, rows, {"approximate_conditioning": p["tolerance"] > 0}


def _coverage_row(batch, alpha):
    gen = sim.batch_coverage(batch, "general", alpha)
    iid = sim.batch_coverage(batch, "iid-exact", alpha)
    asym = sim.batch_coverage(batch, "iid-asymptotic", alpha)
    se = math.sqrt(alpha * (1.0 - alpha) / batch.n_trials)
    return [gen, iid, asym, se]


_COVERAGE_COLS = ["coverage_general", "coverage_iid", "coverage_iid_asymptotic", "mc_stderr"]


def _mixture(p, n, d):
    return sim.CorrelatedMixture.from_heterogeneity(n, d, p["base_error"], p["q_high"], p["q_low"])


def _fig6a(p, n_trials, seed, threads):
    model = _mixture(p, p["n_total"], p["d"])
    rows = []
    for m in p["n_measured"]:
        batch = sim.simulate_trials(model, m, n_trials, seed, threads)
        rows.append([m, *_coverage_row(batch, p["alpha"])])
    return ["M"] + _COVERAGE_COLS, rows, {}


def _fig6b(p, n_trials, seed, threads):
    rows = []
    for d in p["heterogeneities"]:
        batch = sim.simulate_trials(_mixture(p, p["n_total"], d), p["n_measured"], n_trials, seed, threads)
        rows.append([d, *_coverage_row(batch, p["alpha"])])
    return ["d"] + _COVERAGE_COLS, rows, {}


def _fig6c(p, n_trials, seed, threads):
    # Trials do not depend on alpha, so one batch serves every credible level.
    batch = sim.simulate_trials(_mixture(p, p["n_total"], p["d"]), p["n_measured"], n_trials, seed, threads)
    rows = [[a, *_coverage_row(batch, a)] for a in p["alphas"]]
    return ["alpha"] + _COVERAGE_COLS, rows, {}


def _fig7(p, n_trials, seed, threads):
    rows = []
    violations = 0
    for n, m in p["sizes"]:
        for q in np.round(np.arange(0.0, p["qber_max"] + 1e-12, p["qber_step"]), 10):
            s = _qber_summary(n, m, float(q))
            for a in np.round(np.arange(p["alpha_min"], p["alpha_max"] + 1e-12, p["alpha_step"]), 10):
                a = float(a)
                exact = iv.exact_optimal_order(s, a, p["search_limit"])
                t_star = iv.optimal_moment_order(a)
                violations += exact > t_star
                rows.append([n, m, float(q), a, exact, t_star])
    cols = ["N", "M", "qber", "alpha", "T_exact", "T_star"]
    return cols, rows, {"cells": len(rows), "cells_exact_above_T_star": int(violations)}


def _table2(p, n_trials, seed, threads):
    rows = [[a, iv.optimal_moment_order(a)] for a in p["alphas"]]
    return ["alpha", "T_star"], rows, {}


_MIXTURE = {"base_error": 0.2, "q_high": 0.81, "q_low": 0.79}

EXPERIMENTS = {
    "fig1": (_fig1, {"n_total": 10000, "n_measured": 9000, "f_all": 0.9, "alpha": 0.95, "bins": 60}),
    "fig2": (
        _fig2,
        {
            "n_total": 10000,
            "n_measured": 1000,
            "qber": 0.1,
            "orders": [2, 4, 6],
            "alpha_min": 0.7,
            "alpha_max": 0.995,
            "alpha_step": 0.005,
            "headline_alpha": 0.99,
        },
    ),
    "fig3": (_fig3, {"n_measured": 300, "errors_measured": 30, "n_totals": [400, 600, 1000, 10000]}),
    "fig4": (
        _fig4,
        {
            "n_totals": [5000, 10000],
            "alphas": [0.9, 0.95, 0.99],
            "qbers": [0.02, 0.1, 0.3],
            "ratios": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9],
        },
    ),
    "fig5": (
        _fig5,
        {
            "n_total": 10000,
            "alpha": 0.95,
            "expected_qber": 0.1,
            "n_measured": [1000, 2000, 3000, 4000, 5000, 6000, 7000, 8000, 9000],
            "heterogeneities": [0.0, 0.5, 1.0],
            "tolerance": 0,
            **_MIXTURE,
        },
    ),
    "fig6a": (
        _fig6a,
        {
            "n_total": 10000,
            "alpha": 0.95,
            "d": 1.0,
            "n_measured": [1000, 2000, 3000, 4000, 5000, 6000, 7000, 8000, 9000],
            **_MIXTURE,
        },
    ),
    "fig6b": (
        _fig6b,
        {
            "n_total": 10000,
            "alpha": 0.95,
            "n_measured": 9000,
            "heterogeneities": [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0],
            **_MIXTURE,
        },
    ),
    "fig6c": (
        _fig6c,
        {
            "n_total": 10000,
            "n_measured": 5000,
            "d": 1.0,
            "alphas": [0.7, 0.75, 0.8, 0.85, 0.9, 0.95, 0.99],
            **_MIXTURE,
        },
    ),
    "fig7": (
        _fig7,
        {
            "sizes": [[2000, 1000], [10000, 1000], [10000, 5000], [200000, 100000]],
            "qber_max": 0.66,
            "qber_step": 0.02,
            "alpha_min": 0.5,
            "alpha_max": 0.99,
            "alpha_step": 0.01,
            "search_limit": 40,
        },
    ),
    "table2": (_table2, {"alphas": [0.8, 0.9, 0.95, 0.98, 0.99]}),
}

DEFAULT_TRIALS = {"fig1": 10_000, "fig5": 200_000, "fig6a": 10_000, "fig6b": 10_000, "fig6c": 10_000}


def _schema_for(value):
    if isinstance(value, bool):
        return {"type": "boolean"}
    if isinstance(value, int):
        return {"type": "integer"}
    if isinstance(value, float):
        return {"type": "number"}
    if isinstance(value, list):
        return {"type": "array", "minItems": 1, "items": _schema_for(value[0])}
    raise TypeError(f"no schema for {value!r}")


def parameter_schema(experiment):
    """JSON schema of the experiment's overridable parameters, derived from its defaults."""
    _, defaults = EXPERIMENTS[experiment]
    return {
        "type": "object",
        "properties": {k: _schema_for(v) for k, v in defaults.items()},
        "additionalProperties": False,
    }


def run_experiment(experiment, overrides=None, n_trials=None, seed=0, threads=None):
    """Run a named experiment with optional parameter overrides."""
    if experiment not in EXPERIMENTS:
        raise ValueError(f"unknown experiment {experiment!r}; choose from {sorted(EXPERIMENTS)}")
    driver, defaults = EXPERIMENTS[experiment]
    params = {**defaults, **(overrides or {})}
    if n_trials is None:
        n_trials = DEFAULT_TRIALS.get(experiment, 0)
    cols, rows, summary = driver(params, n_trials, seed, threads)
    if experiment in DEFAULT_TRIALS:
        params = {**params, "n_trials": n_trials, "seed": seed}
    return ExperimentResult(experiment, params, cols, rows, summary)
