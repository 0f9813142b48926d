"""Command-line harness: generate | run | verify | sweep.

Exit codes: 0 success, 1 a verification or run failure, 2 a configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import complexity, verify
from .errors import ConfigError, FedLabError
from .fedave import FedAveConfig, run_fedave
from .fedave import run_record as fedave_record
from .fedlrgd import FedLRGDConfig, choose_iterations, iteration_numerator, run_fedlrgd
from .fedlrgd import run_record as fedlrgd_record
from .problem import (
    Dataset,
    QuadraticModel,
    SeparableModel,
    SoftLabelLogistic,
    empirical_risk,
    estimate_gradient_bound,
    reference_minimum,
)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(",", " ").split()]


_DATA_KEYS = {"d": int, "m": int, "s": int, "r": int, "seed": int}
_MODEL_KEYS = {"dataset": str, "model": str, "mu": float, "p": int, "rank": int, "model_seed": int, "phi": _floats}

SCHEMAS = {
    "generate": dict(_DATA_KEYS),
    "fedlrgd": {**_DATA_KEYS, **_MODEL_KEYS, "S": int, "epsilon": float, "B": float, "L1": float,
                "singular_tol": float, "max_retries": int},
    "fedave": {**_DATA_KEYS, **_MODEL_KEYS, "b": int, "T": int, "tau": float, "step_scale": float,
               "schedule": str},
    "verify": {"seed": int, "bound_scale": float, "trials": int, "points": int},
    "sweep": {"m0": int, "points": int, "s": int, "p": int, "phi": float, "beta": float, "c1": float,
              "kappa": float, "B": float, "mu": float, "F0_gap": float, "C": float, "tau": float, "seed": int},
}

DEFAULTS = {
    "generate": {"d": 2, "m": 3, "s": 4, "r": 2, "seed": 0},
    "fedlrgd": {"model": "logistic", "mu": 0.5, "d": 3, "m": 8, "s": 14, "r": 8, "seed": 0, "epsilon": 1e-3,
                "singular_tol": 1e-12, "max_retries": 5, "model_seed": 0, "phi": [1.0, 10.0, 100.0]},
    "fedave": {"model": "logistic", "mu": 0.5, "d": 3, "m": 8, "s": 14, "r": 8, "seed": 0, "b": 5, "T": 50,
               "tau": 1.0, "schedule": "inverse", "model_seed": 0, "phi": [1.0, 10.0, 100.0]},
    "verify": {"seed": 0, "bound_scale": 1.0},
    "sweep": {"C": 1.0, "tau": 1.0, "seed": 0},
}


def _format_value(v) -> str:
    if isinstance(v, list):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_config(text: str, schema: dict) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment; unknown keys are errors."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in schema:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            out[key] = schema[key](value)
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {value!r}") from exc
    return out


def echo_config(values: dict) -> str:
    return "".join(f"{k} = {_format_value(values[k])}\n" for k in sorted(values))


def load_settings(kind: str, args) -> dict:
    settings = dict(DEFAULTS.get(kind, {}))
    if args.config:
        try:
            text = Path(args.config).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        settings.update(parse_config(text, SCHEMAS[kind]))
    if args.seed is not None:
        settings["seed"] = args.seed
    if getattr(args, "phi", None):
        settings["phi"] = _floats(args.phi) if kind != "sweep" else float(_floats(args.phi)[0])
    return settings


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


# ------------------------------------------------------------- subcommands


def cmd_generate(args) -> int:
    st = load_settings("generate", args)
    if st["r"] < 1:
        raise ConfigError("the server needs at least one sample (r >= 1)")
    if st["d"] < 1 or st["m"] < 0 or st["s"] < 0 or st["seed"] < 0:
        raise ConfigError("need d >= 1, m >= 0, s >= 0 and a non-negative seed")
    out = _out_dir(args)
    data = Dataset.generate(st["d"], st["m"], st["s"], st["r"], st["seed"])
    data.save(out / "dataset.csv", out / "dataset.json")
    (out / "config.echo").write_text(echo_config(st))
    return EXIT_OK


def _build_model(st: dict, d: int):
    name = st["model"]
    if name == "logistic":
        return SoftLabelLogistic(d, st["mu"])
    if name == "separable":
        if "p" not in st or "rank" not in st:
            raise ConfigError("separable model needs keys p and rank")
        return SeparableModel(d, st["p"], st["rank"], mu=st["mu"], seed=st["model_seed"])
    if name == "quadratic":
        return QuadraticModel(d, st.get("p", 1))
    raise ConfigError(f"unknown model {name!r}")


def _load_data(st: dict) -> Dataset:
    if "dataset" in st:
        path = Path(st["dataset"])
        try:
            return Dataset.load(path, path.with_suffix(".json"))
        except (OSError, KeyError, ValueError) as exc:
            raise ConfigError(f"cannot load dataset {path}: {exc}") from exc
    if st["r"] < 1:
        raise ConfigError("the server needs at least one sample (r >= 1)")
    return Dataset.generate(st["d"], st["m"], st["s"], st["r"], st["seed"])


def cmd_run(args) -> int:
    kind = args.algorithm
    st = load_settings(kind, args)
    data = _load_data(st)
    model = _build_model(st, data.d)
    out = _out_dir(args)
    phis = st.get("phi", [])
    if kind == "fedlrgd":
        L1 = st.get("L1", model.constants.L1)
        extra = {}
        if "S" in st:
            S = st["S"]
        else:
            ref = reference_minimum(model, data)
            F0_gap = empirical_risk(model, data, np.zeros(model.p)) - ref.F_star
            B = st.get("B") or estimate_gradient_bound(model)
            S = choose_iterations(model.constants.kappa,
                                  iteration_numerator(F0_gap, B, model.p, model.constants.mu), st["epsilon"])
            extra = {"B_estimate": B, "B_is_certificate": False, "F_star_reference": ref.F_star}
        cfg = FedLRGDConfig(r=data.r, S=S, L1=L1, seed=st["seed"], singular_tol=st["singular_tol"],
                            max_retries=st["max_retries"])
        result = run_fedlrgd(model, data, cfg)
        record = fedlrgd_record(model, data, cfg, result, phis, extra)
    else:
        cfg = FedAveConfig(b=st["b"], T=st["T"], tau=st["tau"], step_scale=st.get("step_scale"),
                           schedule=st["schedule"], seed=st["seed"])
        result = run_fedave(model, data, cfg)
        record = fedave_record(model, data, cfg, result, phis)
    _write_json(out / f"{kind}.json", record)
    (out / "config.echo").write_text(echo_config(st))
    return EXIT_OK


def cmd_verify(args) -> int:
    st = load_settings("verify", args)
    suite = verify.SUITES[args.suite]
    kwargs = {"bound_scale": st["bound_scale"]}
    if args.suite == "eq13mc":
        kwargs["seed"] = st["seed"]
        if "trials" in st:
            kwargs["trials"] = st["trials"]
    if args.suite == "theorem1":
        kwargs["seed"] = st["seed"]
    if args.suite == "lemma3" and "points" in st:
        kwargs["points"] = st["points"]
    rows = suite(**kwargs)
    failing = [r for r in rows if not r["pass"]]
    report = {"schema_version": 1, "suite": args.suite, "passed": not failing, "checked": len(rows),
              "failed": len(failing), "instances": rows}
    out = _out_dir(args)
    _write_json(out / f"verify_{args.suite}.json", report)
    (out / "config.echo").write_text(echo_config(st))
    status = "PASS" if not failing else "FAIL"
    print(f"{args.suite}: {status} ({len(rows) - len(failing)}/{len(rows)} instances)")
    for row in failing[:20]:
        print("  failing instance:", json.dumps(row, default=_json_default, sort_keys=True))
    return EXIT_OK if not failing else EXIT_FAIL


def cmd_sweep(args) -> int:
    st = load_settings("sweep", args)
    regime_keys = set(complexity.Regime.__dataclass_fields__)
    regime = complexity.Regime(**{k: v for k, v in st.items() if k in regime_keys})
    gate = 40.0 / (st["C"] ** 0.25 * st["tau"])
    if regime.phi < gate:
        raise ConfigError(f"phi={regime.phi} is below the FedAve gate {gate:.6g}")
    if regime.points < 1 or regime.m0 < 1 or regime.s < 1 or regime.p < 1:
        raise ConfigError("need points, m0, s, p >= 1")
    if not 0 < regime.beta or not regime.kappa > 1 or not regime.c1 > 0:
        raise ConfigError("need beta > 0, kappa > 1, c1 > 0")
    rows = complexity.proposition1_sweep(regime)
    out = _out_dir(args)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(complexity.SWEEP_COLUMNS)
        for row in rows:
            w.writerow([repr(row[c]) if isinstance(row[c], float) else row[c] for c in complexity.SWEEP_COLUMNS])
    (out / "config.echo").write_text(echo_config(st))
    return EXIT_OK


# ------------------------------------------------------------------ parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="fedlowrank", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="flat 'key = value' config file")
    common.add_argument("--seed", type=int, help="overrides the config seed")
    common.add_argument("--out", metavar="DIR", help="output directory (default: current)")
    common.add_argument("--phi", metavar="LIST", help="comma-separated communication-to-computation ratios")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("generate", parents=[common], help="write a synthetic dataset")
    run = sub.add_parser("run", parents=[common], help="run an algorithm and write its JSON record")
    run.add_argument("algorithm", choices=["fedlrgd", "fedave"])
    ver = sub.add_parser("verify", parents=[common], help="run a bound-verification suite")
    ver.add_argument("suite", choices=sorted(verify.SUITES))
    sub.add_parser("sweep", parents=[common], help="tabulate the FedLRGD vs FedAve complexity regime")
    return parser


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "verify": cmd_verify, "sweep": cmd_sweep}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (FedLabError, ArithmeticError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
