import copy

import pytest

from fidelity_ci import simulator as sim
from fidelity_ci.config import ConfigError, model_from_config, validate_config

BASE = {
    "variant": "heterogeneous_block",
    "n_total": 1000,
    "n_measured": 900,
    "parameters": {
        "good_fraction": 0.9,
        "good_state": {"name": "psi_minus"},
        "bad_state": {"name": "zero_zero"},
    },
}


def test_each_variant_builds():
    assert model_from_config({"variant": "iid_werner", "n_total": 100, "parameters": {"error_prob": 0.2}}) == sim.IIDWerner(100, 0.2)
    product = model_from_config(
        {"variant": "iid_product", "n_total": 100, "parameters": {"state": {"name": "werner", "p": 0.4}}}
    )
    assert product == sim.IIDProduct(100, sim.werner(0.4))
    block = model_from_config(BASE)
    assert block == sim.HeterogeneousBlock(1000, 0.9, sim.psi_minus(), sim.zero_zero())
    explicit = model_from_config(
        {
            "variant": "correlated_mixture",
            "n_total": 10000,
            "parameters": {"p_good": 0.0, "p_bad": 1.0, "q_high": 0.81, "q_low": 0.79},
        }
    )
    assert explicit == sim.CorrelatedMixture(10000, 0.0, 1.0, 0.81, 0.79)
    by_d = model_from_config({"variant": "correlated_mixture", "n_total": 10000, "parameters": {"d": 1.0}})
    assert by_d == explicit


def test_mixture_state():
    doc = copy.deepcopy(BASE)
    doc["parameters"]["good_state"] = {"mixture": [[0.9, {"name": "psi_minus"}], [0.1, {"name": "zero_zero"}]]}
    model = model_from_config(doc)
    assert model.good_state.fidelity == pytest.approx(0.9)


@pytest.mark.parametrize(
    "mutate,path,fragment",
    [
        (lambda d: d["parameters"]["good_state"].update(name="werner", p=2), "/parameters/good_state/p", "maximum"),
        (lambda d: d.update(variant="nope"), "/variant", "nope"),
        (lambda d: d.update(n_total=1), "/n_total", "minimum"),
        (lambda d: d["parameters"].update(good_fraction=-0.1), "/parameters/good_fraction", "minimum"),
        (lambda d: d["parameters"].pop("bad_state"), "/parameters", "bad_state"),
        (lambda d: d.update(n_trials=10), "/n_trials", "minimum"),
        (lambda d: d.update(extra=1), "", "extra"),
        (lambda d: d.update(estimators=["general", "fancy"]), "/estimators/1", "fancy"),
    ],
)
def test_errors_point_at_field(mutate, path, fragment):
    doc = copy.deepcopy(BASE)
    mutate(doc)
    with pytest.raises(ConfigError) as info:
        validate_config(doc)
    assert info.value.path == path
    assert fragment in str(info.value)


def test_semantic_error_after_schema():
    doc = {
        "variant": "correlated_mixture",
        "n_total": 100,
        "parameters": {"p_good": 0.5, "p_bad": 0.2, "q_high": 0.8, "q_low": 0.7},
    }
    validate_config(doc)
    with pytest.raises(ValueError):
        model_from_config(doc)
