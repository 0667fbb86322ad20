"""JSON noise-model configs for the ``simulate`` command.

A config looks like::

    {
      "variant": "correlated_mixture",
      "n_total": 10000,
      "n_measured": 9000,
      "parameters": {"p_good": 0.0, "p_bad": 1.0, "q_high": 0.81, "q_low": 0.79},
      "alpha": 0.95,
      "seed": 7,
      "n_trials": 10000
    }

Variants and their ``parameters``:

* ``iid_werner``: ``{"error_prob": p}``
* ``iid_product``: ``{"state": STATE}``
* ``heterogeneous_block``: ``{"good_fraction": q, "good_state": STATE, "bad_state": STATE}``
* ``correlated_mixture``: ``{"p_good", "p_bad", "q_high", "q_low"}`` or
  ``{"d"}`` with optional ``base_error``, ``q_high``, ``q_low``

where ``STATE`` is ``{"name": "werner", "p": 0.2}``, ``{"name": "psi_minus"}``,
``{"name": "zero_zero"}`` or a mixture ``{"mixture": [[weight, STATE], ...]}``.
"""

import jsonschema

from . import simulator as sim

__all__ = ["CONFIG_SCHEMA", "ConfigError", "validate_config", "model_from_config", "json_pointer"]

_PROB = {"type": "number", "minimum": 0, "maximum": 1}

_STATE = {
    "oneOf": [
        {
            "type": "object",
            "properties": {"name": {"const": "werner"}, "p": _PROB},
            "required": ["name", "p"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {"name": {"enum": ["psi_minus", "zero_zero"]}},
            "required": ["name"],
            "additionalProperties": False,
        },
        {
            "type": "object",
            "properties": {
                "mixture": {
                    "type": "array",
                    "minItems": 1,
                    "items": {
                        "type": "array",
                        "prefixItems": [{"type": "number", "minimum": 0}, {"$ref": "#/$defs/state"}],
                        "minItems": 2,
                        "maxItems": 2,
                    },
                }
            },
            "required": ["mixture"],
            "additionalProperties": False,
        },
    ]
}


def _params(props, required):
    return {
        "type": "object",
        "properties": props,
        "required": required,
        "additionalProperties": False,
    }


_VARIANT_PARAMS = {
    "iid_werner": _params({"error_prob": _PROB}, ["error_prob"]),
    "iid_product": _params({"state": {"$ref": "#/$defs/state"}}, ["state"]),
    "heterogeneous_block": _params(
        {
            "good_fraction": _PROB,
            "good_state": {"$ref": "#/$defs/state"},
            "bad_state": {"$ref": "#/$defs/state"},
        },
        ["good_fraction", "good_state", "bad_state"],
    ),
    "correlated_mixture": {
        "oneOf": [
            _params(
                {"p_good": _PROB, "p_bad": _PROB, "q_high": _PROB, "q_low": _PROB},
                ["p_good", "p_bad", "q_high", "q_low"],
            ),
            _params(
                {"d": _PROB, "base_error": _PROB, "q_high": _PROB, "q_low": _PROB},
                ["d"],
            ),
        ]
    },
}

CONFIG_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "$defs": {"state": _STATE},
    "type": "object",
    "properties": {
        "variant": {"enum": sorted(_VARIANT_PARAMS)},
        "n_total": {"type": "integer", "minimum": 2},
        "n_measured": {"type": "integer", "minimum": 1},
        "parameters": {"type": "object"},
        "alpha": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "n_trials": {"type": "integer", "minimum": 1000},
        "estimators": {
            "type": "array",
            "items": {"enum": list(sim.ESTIMATORS)},
            "minItems": 1,
            "uniqueItems": True,
        },
    },
    "required": ["variant", "n_total", "parameters"],
    "additionalProperties": False,
    "allOf": [
        {
            "if": {"properties": {"variant": {"const": v}}, "required": ["variant"]},
            "then": {"properties": {"parameters": schema}},
        }
        for v, schema in _VARIANT_PARAMS.items()
    ],
}

_VALIDATOR = jsonschema.Draft202012Validator(CONFIG_SCHEMA)


class ConfigError(ValueError):
    """Schema violation; ``path`` is a JSON pointer to the offending field."""

    def __init__(self, message, path):
        super().__init__(message)
        self.path = path


def json_pointer(parts):
    # RFC 6901: the whole document is "", not "/".
    return "".join("/" + str(p).replace("~", "~0").replace("/", "~1") for p in parts)


def _leaves(error):
    if not error.context:
        yield error
    for sub in error.context:
        yield from _leaves(sub)


def _rank(error):
    # Deepest field first; among equals, skip the branch-selector keywords.
    selector = error.validator in ("const", "enum", "required", "additionalProperties")
    return (len(error.absolute_path), not selector)


def validate_config(doc):
    """Raise ``ConfigError`` for the most specific schema violation in ``doc``."""
    errors = list(_VALIDATOR.iter_errors(doc))
    if not errors:
        return doc
    best = max((leaf for e in errors for leaf in _leaves(e)), key=_rank)
    raise ConfigError(best.message, json_pointer(best.absolute_path))


def _state(spec):
    if "mixture" in spec:
        return sim.PairState.mixture([(w, _state(s)) for w, s in spec["mixture"]])
    return sim.state_library(spec["name"], spec.get("p"))


def model_from_config(doc):
    """Validate ``doc`` and build its noise model."""
    validate_config(doc)
    n = doc["n_total"]
    p = doc["parameters"]
    variant = doc["variant"]
    if variant == "iid_werner":
        return sim.IIDWerner(n, p["error_prob"])
    if variant == "iid_product":
        return sim.IIDProduct(n, _state(p["state"]))
    if variant == "heterogeneous_block":
        return sim.HeterogeneousBlock(n, p["good_fraction"], _state(p["good_state"]), _state(p["bad_state"]))
    if "d" in p:
        return sim.CorrelatedMixture.from_heterogeneity(
            n, p["d"], p.get("base_error", 0.2), p.get("q_high", 0.81), p.get("q_low", 0.79)
        )
    return sim.CorrelatedMixture(n, p["p_good"], p["p_bad"], p["q_high"], p["q_low"])
