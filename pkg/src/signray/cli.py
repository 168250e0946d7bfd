"""Command-line entry point: attack, bench, gentest, verify.

Option precedence is flag > config file > built-in default.  The config
file is flat `key=value` lines keyed by the long flag names (for example
`Q=200`, `epsilon=1e-3`).  Exit codes: 0 success, 2 attack failed, 1
usage or I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys

import numpy as np

from .attacks import AttackConfig, PreconditionError, run_attack
from .geometry import AttackGoal, NoCrossingError, SearchConfig
from .harness import (
    DEFAULT_CHECKPOINTS,
    BenchmarkSpec,
    export_results,
    run_benchmark,
)
from .oracle import (
    ClippedOracle,
    DatasetFormatError,
    Example,
    HardLabelOracle,
    ModelFormatError,
    load_dataset,
    load_model,
    save_dataset,
    save_model,
)
from .synth import make_dataset, make_linear_model, make_mlp_model
from .verify import SUITES, run_suites

ESTIMATOR_ALIASES = {
    "signopt": "signopt",
    "svmopt": "svmopt",
    "rgf": "rgf",
    "zo-sqo": "zo_signsgd_sqo",
    "zo-bs": "zo_signsgd_bs",
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _int_list(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _float_list(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _clip_box(text: str) -> tuple[float, float]:
    parts = [float(v) for v in text.split(",")]
    if len(parts) != 2:
        raise ValueError("clip box must be LO,HI")
    return parts[0], parts[1]


def _estimator(token: str) -> str:
    token = token.strip()
    if token not in ESTIMATOR_ALIASES:
        raise ValueError(
            f"unknown estimator {token!r} (choose from {', '.join(ESTIMATOR_ALIASES)})"
        )
    return token


def _estimator_list(text: str) -> list[str]:
    return [_estimator(v) for v in text.split(",") if v.strip()]


# Per-subcommand option schema: flag name -> (converter, default, help).
SCHEMAS = {
    "attack": {
        "model": (str, None, "model file (SMLP-v1)"),
        "input": (str, None, "single example as a CSV row `label,f1,...`"),
        "data": (str, None, "dataset CSV (used with --index)"),
        "index": (int, 0, "example index into --data"),
        "estimator": (_estimator, None, "one of " + ", ".join(ESTIMATOR_ALIASES)),
        "budget": (int, None, "query budget"),
        "Q": (int, 200, "probe directions per iteration"),
        "epsilon": (float, 1e-3, "sign-probe smoothing (relative to direction norm)"),
        "seed": (int, 0, "run seed"),
        "targeted": (int, None, "target label (omit for untargeted)"),
        "rel-tol": (float, 1e-3, "in-loop search tolerance"),
        "clip": (_clip_box, None, "clip queried points into LO,HI"),
        "trace-out": (str, None, "write the trace CSV here"),
    },
    "bench": {
        "model": (str, None, "model file (SMLP-v1)"),
        "data": (str, None, "dataset CSV"),
        "estimator": (_estimator_list, ["signopt"], "comma list of estimators to compare"),
        "n-examples": (int, 100, "examples to attack"),
        "budget": (int, 20000, "query budget per attack"),
        "Q": (int, 200, "probe directions per iteration"),
        "epsilon": (float, 1e-3, "sign-probe smoothing"),
        "seed": (int, 0, "master seed"),
        "targeted": (int, None, "target label (omit for untargeted)"),
        "rel-tol": (float, 1e-3, "in-loop search tolerance"),
        "checkpoints": (_int_list, list(DEFAULT_CHECKPOINTS), "query checkpoints"),
        "thresholds": (_float_list, [0.5, 1.5], "success-rate distortion thresholds"),
        "jobs": (int, 1, "parallel attacks"),
        "clip": (_clip_box, None, "clip queried points into LO,HI"),
        "out": (str, None, "output directory"),
    },
    "gentest": {
        "kind": (str, None, "linear or mlp"),
        "d": (int, None, "input dimension"),
        "classes": (int, 3, "number of classes"),
        "seed": (int, 0, "generator seed"),
        "n-examples": (int, 50, "dataset size"),
        "hidden": (_int_list, [16], "hidden widths for mlp"),
        "out": (str, None, "output directory"),
    },
    "verify": {
        "suite": (str, "all", "all, geometry, qp or sign"),
        "rel-tol": (float, 1e-3, "search tolerance used by the suites"),
    },
}


def build_parser() -> _Parser:
    parser = _Parser(prog="signray", description=__doc__)
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    for command, schema in SCHEMAS.items():
        p = sub.add_parser(command)
        for name, (conv, _default, help_text) in schema.items():
            p.add_argument(f"--{name}", type=conv, default=None, help=help_text)
        p.add_argument("--config", type=str, default=None, help="key=value config file")
    return parser


def _load_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            values[key.strip()] = value.strip()
    return values


def _resolve(args: argparse.Namespace, schema: dict) -> dict:
    """Apply flag > config file > default, rejecting unknown file keys."""
    file_values: dict[str, str] = {}
    if args.config is not None:
        file_values = _load_config_file(args.config)
        unknown = set(file_values) - set(schema)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    options = {}
    for name, (conv, default, _help) in schema.items():
        flag_value = getattr(args, name.replace("-", "_"))
        if flag_value is not None:
            options[name] = flag_value
        elif name in file_values:
            try:
                options[name] = conv(file_values[name])
            except ValueError as exc:
                raise UsageError(f"config key {name}: {exc}") from exc
        else:
            options[name] = default
    return options


def _require(options: dict, names: list[str]):
    missing = [n for n in names if options[n] is None]
    if missing:
        raise UsageError("missing required option(s): " + ", ".join(f"--{n}" for n in missing))


def _parse_example_row(text: str) -> Example:
    fields = [f.strip() for f in text.split(",")]
    if len(fields) < 2:
        raise UsageError("--input needs `label,f1,...` with at least one feature")
    try:
        return Example(np.array([float(v) for v in fields[1:]]), int(fields[0]))
    except ValueError as exc:
        raise UsageError(f"bad --input row: {exc}") from exc


def _attack_config(options: dict, estimator: str) -> AttackConfig:
    goal = (
        AttackGoal.targeted(options["targeted"])
        if options["targeted"] is not None
        else AttackGoal.untargeted()
    )
    return AttackConfig(
        estimator=ESTIMATOR_ALIASES[estimator],
        Q=options["Q"],
        epsilon=options["epsilon"],
        query_budget=options["budget"],
        seed=options["seed"],
        goal=goal,
        search=SearchConfig(rel_tol=options["rel-tol"]),
    )


def cmd_attack(options: dict) -> int:
    _require(options, ["model", "estimator", "budget"])
    if options["input"] is None and options["data"] is None:
        raise UsageError("provide --input or --data with --index")
    model = load_model(options["model"])
    if options["input"] is not None:
        example = _parse_example_row(options["input"])
    else:
        dataset = load_dataset(options["data"])
        if not 0 <= options["index"] < len(dataset):
            raise UsageError(f"--index {options['index']} out of range for {len(dataset)} examples")
        example = dataset[options["index"]]
    config = _attack_config(options, options["estimator"])
    oracle = HardLabelOracle(model, budget=config.query_budget)
    if options["clip"] is not None:
        oracle = ClippedOracle(oracle, *options["clip"])
    try:
        result = run_attack(oracle, example, config)
    except NoCrossingError:
        result = None
    print(f"estimator={options['estimator']}")
    print(f"queries={oracle.count if result is None else result.queries}")
    print(f"success={0 if result is None else int(result.success)}")
    print(f"distortion={math.inf if result is None else result.distortion!r}")
    if result is None:
        return 2
    if options["trace-out"] is not None:
        with open(options["trace-out"], "w", encoding="utf-8") as fh:
            fh.write("queries,best_g\n")
            for point in result.trace.records:
                fh.write(f"{point.queries},{point.best_g!r}\n")
    return 0 if result.success else 2


def cmd_bench(options: dict) -> int:
    _require(options, ["model", "data", "out"])
    attacks = tuple(
        (alias, _attack_config(options, alias)) for alias in options["estimator"]
    )
    spec = BenchmarkSpec(
        model_path=options["model"],
        data_path=options["data"],
        n_examples=options["n-examples"],
        attacks=attacks,
        checkpoints=tuple(options["checkpoints"]),
        thresholds=tuple(options["thresholds"]),
        jobs=options["jobs"],
        master_seed=options["seed"],
        clip=options["clip"],
    )
    paths = export_results(run_benchmark(spec), options["out"])
    for key in ("curves", "per_example", "meta"):
        print(f"{key}={paths[key]}")
    return 0


def cmd_gentest(options: dict) -> int:
    import os

    _require(options, ["kind", "d", "out"])
    rng = np.random.default_rng(options["seed"])
    if options["kind"] == "linear":
        model = make_linear_model(options["d"], options["classes"], rng)
    elif options["kind"] == "mlp":
        model = make_mlp_model(options["d"], options["classes"], tuple(options["hidden"]), rng)
    else:
        raise UsageError(f"--kind must be linear or mlp, got {options['kind']!r}")
    examples = make_dataset(model, options["n-examples"], rng)
    os.makedirs(options["out"], exist_ok=True)
    model_path = os.path.join(options["out"], "model.smlp")
    data_path = os.path.join(options["out"], "data.csv")
    save_model(model, model_path)
    save_dataset(examples, data_path)
    print(f"model={model_path}")
    print(f"data={data_path}")
    return 0


def cmd_verify(options: dict) -> int:
    if not 0.0 < options["rel-tol"] < 1.0:
        raise UsageError(f"--rel-tol must be in (0, 1), got {options['rel-tol']}")
    names = SUITES if options["suite"] == "all" else (options["suite"],)
    if any(n not in SUITES for n in names):
        raise UsageError(f"--suite must be all or one of {', '.join(SUITES)}")
    passed, rows = run_suites(names, rel_tol=options["rel-tol"])
    width = max(len(check) for _, check, _, _ in rows)
    for suite, check, ok, detail in rows:
        status = "pass" if ok else "FAIL"
        tail = f"  {detail}" if detail else ""
        print(f"{status}  [{suite}] {check.ljust(width)}{tail}")
    print("all suites passed" if passed else "verification failed")
    return 0 if passed else 1


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("choose a subcommand: " + ", ".join(SCHEMAS))
        options = _resolve(args, SCHEMAS[args.command])
        handler = {
            "attack": cmd_attack,
            "bench": cmd_bench,
            "gentest": cmd_gentest,
            "verify": cmd_verify,
        }[args.command]
        return handler(options)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except (ModelFormatError, DatasetFormatError, PreconditionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
