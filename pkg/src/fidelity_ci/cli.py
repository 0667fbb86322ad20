"""Command-line front end.

Exit codes: 0 success, 2 validation error, 3 insufficient data. Errors are
written to stderr as one line of JSON; data goes to stdout or ``--out``.
Floats are written with 12 significant digits.
"""

import argparse
import json
import sys
from pathlib import Path

import jsonschema

from . import experiments as ex
from . import interval as iv
from .config import ConfigError, json_pointer, model_from_config
from .posterior import SampleSummary, central_moments_direct
from .simulator import ESTIMATORS, InsufficientDataError, coverage_experiment

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_INSUFFICIENT = 3


class UsageError(Exception):
    def __init__(self, message, path=None, code=EXIT_VALIDATION, kind="validation"):
        super().__init__(message)
        self.path = path
        self.code = code
        self.kind = kind


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _summary_args(p):
    p.add_argument("--n", type=int, required=True, help="total number of pairs N")
    p.add_argument("--m", type=int, required=True, help="number of measured pairs M")
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--errors", type=int, help="number of errors among measured pairs")
    g.add_argument("--qber", type=float, help="measured QBER (rounded to a count)")


def _output_args(p, formats=("json", "csv")):
    p.add_argument("--out", type=Path, help="write data here instead of stdout")
    p.add_argument("--format", choices=formats, default=formats[0])


def build_parser():
    parser = _Parser(prog="fidelity-ci", description="Credible intervals for the fidelity of unsampled pairs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("estimate", help="full interval report for one measurement round")
    _summary_args(p)
    p.add_argument("--alpha", type=float, default=0.95)
    p.add_argument("--T", type=int, dest="max_order", help="override the maximum moment order")
    _output_args(p)

    p = sub.add_parser("iid", help="i.i.d. baseline intervals only")
    _summary_args(p)
    p.add_argument("--alpha", type=float, default=0.95)
    _output_args(p)

    p = sub.add_parser("moments", help="posterior mean and even central moments")
    _summary_args(p)
    p.add_argument("--T", type=int, dest="max_order", default=10)
    _output_args(p)

    p = sub.add_parser("figure", help="regenerate a figure's data series")
    p.add_argument("experiment", choices=sorted(ex.EXPERIMENTS))
    p.add_argument("--set", action="append", default=[], metavar="KEY=JSON", help="override a parameter")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--plot", action="store_true", help="also render a PNG next to --out")
    _output_args(p, ("csv", "json"))

    p = sub.add_parser("simulate", help="coverage of each estimator under a noise model")
    p.add_argument("config", type=Path, help="noise-model JSON config")
    p.add_argument("--m", type=int, help="number of measured pairs (overrides config)")
    p.add_argument("--alpha", type=float)
    p.add_argument("--estimators", nargs="+", choices=ESTIMATORS)
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    _output_args(p, ("json",))
    return parser


def _summary(args):
    if args.errors is not None:
        return SampleSummary(args.n, args.m, args.errors)
    return SampleSummary.from_qber(args.n, args.m, args.qber)


def _iid_report(s, alpha):
    exact = iv.iid_interval_exact(s, alpha)
    report = {"iid_exact": exact.to_dict()}
    if s.n_measured >= iv.ASYMPTOTIC_MIN_MEASURED:
        report["iid_asymptotic"] = iv.iid_interval_asymptotic(s, alpha).to_dict()
    else:
        report["iid_asymptotic"] = None
        report["warnings"] = [f"asymptotic interval omitted: M < {iv.ASYMPTOTIC_MIN_MEASURED}"]
    return report


def _summary_dict(s):
    return {"n_total": s.n_total, "n_measured": s.n_measured, "errors_measured": s.errors_measured, "qber": s.qber}


def cmd_estimate(args):
    s = _summary(args)
    t_star = iv.optimal_moment_order(args.alpha)
    order = t_star if args.max_order is None else args.max_order
    general = iv.credible_interval(s, args.alpha, order)
    report = {
        "summary": _summary_dict(s),
        "alpha": args.alpha,
        "center": iv.center_estimate(s),
        "T_star": t_star,
        "T_used": order,
        "radius": general.radius,
        "general": general.to_dict(),
        "second_moment": iv.credible_interval(s, args.alpha, 2).to_dict(),
        "decomposition": iv.radius_decomposition(s, args.alpha).to_dict(),
        "excessive_measurement_threshold": iv.excessive_measurement_threshold(s.n_total),
    }
    report.update(_iid_report(s, args.alpha))
    return report


def cmd_iid(args):
    s = _summary(args)
    return {"summary": _summary_dict(s), "alpha": args.alpha, **_iid_report(s, args.alpha)}


def cmd_moments(args):
    s = _summary(args)
    return {"summary": _summary_dict(s), **central_moments_direct(s, args.max_order).to_dict()}


def _overrides(experiment, items):
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise UsageError(f"--set expects KEY=JSON, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError as err:
            raise UsageError(f"--set {key}: value is not valid JSON ({err.msg})", path=f"/{key}") from err
    validator = jsonschema.Draft202012Validator(ex.parameter_schema(experiment))
    for err in validator.iter_errors(out):
        raise UsageError(err.message, path=json_pointer(err.absolute_path))
    return out


def cmd_figure(args):
    if args.plot and args.out is None:
        raise UsageError("--plot needs --out (the image is written next to it)")
    if args.trials is not None and args.trials < 1:
        raise UsageError("--trials must be >= 1")
    overrides = _overrides(args.experiment, args.set)
    result = ex.run_experiment(args.experiment, overrides, args.trials, args.seed)
    text = ex.to_csv(result) if args.format == "csv" else ex.to_json(result) + "\n"
    extra = {}
    if args.out is not None and args.format == "csv":
        extra[args.out.with_suffix(".summary.json")] = json.dumps(
            {"experiment": result.experiment, "summary": ex.round_floats(result.summary)}, indent=2
        ) + "\n"
    if args.plot:
        from . import plotting

        image = args.out.with_suffix(".png")
        args.out.parent.mkdir(parents=True, exist_ok=True)
        plotting.render(result, image)
    return text, extra


def cmd_simulate(args):
    try:
        doc = json.loads(args.config.read_text())
    except OSError as err:
        raise UsageError(f"cannot read config: {err.strerror}") from err
    except json.JSONDecodeError as err:
        raise UsageError(f"config is not valid JSON: {err.msg} (line {err.lineno})", path="") from err
    try:
        model = model_from_config(doc)
    except ConfigError as err:
        raise UsageError(str(err), path=err.path) from err
    m = args.m if args.m is not None else doc.get("n_measured")
    if m is None:
        raise UsageError("n_measured missing: give --m or set it in the config", path="/n_measured")
    alpha = args.alpha if args.alpha is not None else doc.get("alpha", 0.95)
    trials = args.trials if args.trials is not None else doc.get("n_trials", 10_000)
    seed = args.seed if args.seed is not None else doc.get("seed", 0)
    estimators = args.estimators or doc.get("estimators") or ESTIMATORS
    result = coverage_experiment(model, m, alpha, estimators, trials, seed)
    return {
        "variant": doc["variant"],
        "n_total": model.n_total,
        "n_measured": m,
        "seed": seed,
        **result.to_dict(),
    }


_COMMANDS = {
    "estimate": cmd_estimate,
    "iid": cmd_iid,
    "moments": cmd_moments,
    "figure": cmd_figure,
    "simulate": cmd_simulate,
}


def _flatten(doc, prefix=""):
    for k, v in doc.items():
        key = f"{prefix}{k}"
        if isinstance(v, dict):
            yield from _flatten(v, key + ".")
        elif isinstance(v, list):
            yield key, ";".join(ex.format_value(x) for x in v)
        else:
            yield key, "" if v is None else ex.format_value(v)


def _render_report(report, fmt):
    if fmt == "json":
        return json.dumps(ex.round_floats(report), indent=2) + "\n"
    lines = ["key,value"] + [f"{k},{v}" for k, v in _flatten(report)]
    return "\n".join(lines) + "\n"


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
    else:
        out.parent.mkdir(parents=True, exist_ok=True)
        out.write_text(text)


def _fail(kind, message, code, path=None):
    doc = {"error": kind, "message": message}
    if path is not None:
        doc["path"] = path
    sys.stderr.write(json.dumps(doc) + "\n")
    return code


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        out = _COMMANDS[args.command](args)
        if args.command == "figure":
            text, extra = out
            for path, body in extra.items():
                _emit(body, path)
        else:
            text = _render_report(out, args.format)
        _emit(text, args.out)
    except UsageError as err:
        return _fail(err.kind, str(err), err.code, err.path)
    except InsufficientDataError as err:
        return _fail("insufficient-data", str(err), EXIT_INSUFFICIENT)
    except ValueError as err:
        return _fail("validation", str(err), EXIT_VALIDATION)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
