"""Command line interface.

Subcommands: gen (synthesize a scenario dataset), train (fit one strategy),
eval (score a trained model against ground truth), benchmark (scenario by
strategy grid), correctness (recover the hidden send stage of the email
chain), consistency (cross-seed agreement), check (finite-difference and
oracle checks).

Options resolve as CLI flag over config-file entry over built-in default.
Config files are strict JSON: unknown keys are errors.  Every command writes
a manifest next to its outputs recording the effective options, a hash of
them, sha256 checksums of inputs and outputs, and a wall-clock timestamp.
The timestamp lives only in the manifest: datasets, models, and reports are
byte-identical across reruns with the same options.  Exit codes: 0 on
success, 2 for configuration or usage errors, 3 for runtime failures
(including failed checks).

The LATENTEVENTS_OUT environment variable sets the directory for outputs
whose paths are not given explicitly (default: current directory).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from datetime import datetime, timezone

from .datagen import SCENARIOS, generate, load_dataset, save_dataset
from .errors import ConfigError, GraphError, TrainingDiverged
from .graph import build_graph
from .metrics import format_table, write_report
from .trainer import (
    LAM_GRID,
    PRODUCT_SCENARIOS,
    STRATEGIES,
    TrainConfig,
    evaluate_model,
    load_model,
    run_consistency,
    run_correctness,
    run_scenario_benchmark,
    save_model,
    scenario_graph,
    train_strategy,
)
from .verify import run_all_checks

FULL_SIZE_N = 100000

_TRAIN_KNOBS = {
    "lam": 0.0,
    "alpha": 0.8,
    "epochs": 50,
    "batch_size": 128,
    "learning_rate": 1e-3,
    "seed": 0,
    "lam_grid": list(LAM_GRID),
}

DEFAULTS = {
    "gen": {
        "scenario": None,
        "n_samples": 20000,
        "full_size": False,
        "seed": 0,
        "prob_cap": None,
        "out": None,
    },
    "train": {
        "data": None,
        "graph": None,
        "strategy": "aggl",
        "target_split": "train",
        "out": None,
        **_TRAIN_KNOBS,
    },
    "eval": {
        "data": None,
        "model": None,
        "split": "test",
        "report": None,
    },
    "benchmark": {
        "scenarios": list(PRODUCT_SCENARIOS),
        "strategies": list(STRATEGIES),
        "n_samples": 20000,
        "full_size": False,
        "data_seed": 0,
        "prob_cap": None,
        "report": None,
        **_TRAIN_KNOBS,
    },
    "correctness": {
        "strategies": ["bcel", "aggl"],
        "n_samples": 20000,
        "full_size": False,
        "data_seed": 0,
        "report": None,
        **_TRAIN_KNOBS,
    },
    "consistency": {
        "scenario": "SEARCH_DAG",
        "strategies": ["bcel", "aggl"],
        "n_samples": 20000,
        "full_size": False,
        "data_seed": 0,
        "model_seeds": [0, 1],
        "report": None,
        **_TRAIN_KNOBS,
    },
    "check": {
        "gradient_instances": 100,
        "oracle_instances": 1000,
        "seed": 0,
        "report": None,
    },
}


def sha256_file(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def canonical_json(value) -> str:
    return json.dumps(value, sort_keys=True, separators=(",", ":"))


def resolve_options(command: str, args: argparse.Namespace) -> dict:
    """Built-in defaults, overridden by the config file, overridden by flags."""
    options = dict(DEFAULTS[command])
    if args.config is not None:
        with open(args.config) as fh:
            try:
                file_options = json.load(fh)
            except json.JSONDecodeError as exc:
                raise ConfigError(f"config file {args.config} is not valid JSON: {exc}")
        if not isinstance(file_options, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
        unknown = set(file_options) - set(options)
        if unknown:
            raise ConfigError(
                f"unknown config keys for {command!r}: {sorted(unknown)}; "
                f"valid keys: {sorted(options)}"
            )
        options.update(file_options)
    if getattr(args, "full_size", None) and getattr(args, "n_samples", None) is not None:
        raise ConfigError("pass either --full-size or --n-samples, not both")
    for key in options:
        value = getattr(args, key, None)
        if value is not None:
            options[key] = value
    return options


def require(options: dict, command: str, *keys: str) -> None:
    missing = [k for k in keys if options[k] is None]
    if missing:
        raise ConfigError(f"{command} requires {', '.join('--' + k.replace('_', '-') for k in missing)}")


def as_list(value, cast):
    if isinstance(value, str):
        value = [part for part in value.split(",") if part]
    return [cast(v) for v in value]


def effective_n_samples(options: dict) -> int:
    return FULL_SIZE_N if options.get("full_size") else int(options["n_samples"])


def out_path(value, default_name: str) -> str:
    if value is not None:
        return value
    return os.path.join(os.environ.get("LATENTEVENTS_OUT", "."), default_name)


def write_manifest(path: str, command: str, options: dict, inputs, outputs) -> None:
    manifest = {
        "command": command,
        "options": options,
        "options_sha256": hashlib.sha256(canonical_json(options).encode()).hexdigest(),
        "inputs": {p: sha256_file(p) for p in sorted(inputs)},
        "outputs": {p: sha256_file(p) for p in sorted(outputs)},
        "written_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def dataset_inputs(csv_path: str) -> list[str]:
    return [csv_path, csv_path + ".meta.json"]


def make_train_config(options: dict, strategy: str, seed: int) -> TrainConfig:
    return TrainConfig(
        strategy=strategy,
        lam=0.0 if strategy == "bcel" else float(options.get("lam") or 0.0),
        alpha=float(options.get("alpha", 0.8)),
        epochs=int(options["epochs"]),
        batch_size=int(options["batch_size"]),
        learning_rate=float(options["learning_rate"]),
        seed=seed,
        target_split=str(options.get("target_split", "train")),
    )


def resolve_graph(value):
    """A graph option is a preset name, a JSON file path, or an inline dict."""
    if isinstance(value, str) and (value.endswith(".json") or os.path.exists(value)):
        with open(value) as fh:
            return build_graph(json.load(fh))
    return build_graph(value)


def cmd_gen(options: dict) -> int:
    require(options, "gen", "scenario")
    dataset = generate(
        options["scenario"],
        effective_n_samples(options),
        int(options["seed"]),
        None if options["prob_cap"] is None else float(options["prob_cap"]),
    )
    csv_path = out_path(options["out"], f"{dataset.scenario}.csv")
    save_dataset(dataset, csv_path)
    write_manifest(
        csv_path + ".manifest.json", "gen", options, [], dataset_inputs(csv_path)
    )
    sizes = {k: len(v) for k, v in dataset.splits.items()}
    print(f"wrote {csv_path}: {dataset.n_samples} samples, splits {sizes}")
    for name in sorted(dataset.labels):
        rate = float(dataset.labels[name].mean())
        print(f"  label rate {name}: {rate:.4f}")
    for name in sorted(dataset.true_probs):
        peak = float(dataset.true_probs[name].max())
        print(f"  max true prob {name}: {peak:.4f}")
    return 0


def cmd_train(options: dict) -> int:
    require(options, "train", "data")
    dataset = load_dataset(options["data"])
    if options["graph"] is None:
        if dataset.scenario not in SCENARIOS:
            raise ConfigError(
                f"dataset scenario {dataset.scenario!r} has no default graph; pass --graph"
            )
        graph = scenario_graph(dataset.scenario)
    else:
        graph = resolve_graph(options["graph"])
    strategy = options["strategy"]
    config = make_train_config(options, strategy, int(options["seed"]))
    model = train_strategy(
        dataset, graph, strategy, config, tuple(as_list(options["lam_grid"], float))
    )
    model_dir = out_path(options["out"], "model")
    save_model(model, model_dir)
    outputs = [os.path.join(model_dir, "model.json")] + [
        os.path.join(model_dir, f"head_{name}.txt") for name in graph.head_names
    ]
    write_manifest(
        os.path.join(model_dir, "manifest.json"), "train", options,
        dataset_inputs(options["data"]), outputs,
    )
    history = model.history
    at = history.best_epoch
    print(f"wrote {model_dir}: strategy {strategy}, lam {model.config.lam:g}")
    if at >= 0:
        print(
            f"  best epoch {at}: val total {history.val_total[at]:.6f} "
            f"(bce {history.val_bce[at]:.6f}, penalty {history.val_penalty[at]:.6g})"
        )
    return 0


def cmd_eval(options: dict) -> int:
    require(options, "eval", "data", "model")
    dataset = load_dataset(options["data"])
    model = load_model(options["model"])
    rows = evaluate_model(model, dataset, options["split"])
    report_path = out_path(options["report"], "report.csv")
    write_report(report_path, rows)
    write_manifest(
        report_path + ".manifest.json", "eval", options,
        dataset_inputs(options["data"]) + [os.path.join(options["model"], "model.json")],
        [report_path],
    )
    print(format_table(rows))
    print(f"wrote {report_path}")
    return 0


def cmd_benchmark(options: dict) -> int:
    rows = run_scenario_benchmark(
        as_list(options["scenarios"], str),
        as_list(options["strategies"], str),
        n_samples=effective_n_samples(options),
        data_seed=int(options["data_seed"]),
        config=make_train_config(options, "aggl", int(options["seed"])),
        prob_cap=None if options["prob_cap"] is None else float(options["prob_cap"]),
        lam_grid=tuple(as_list(options["lam_grid"], float)),
        log=sys.stdout,
    )
    report_path = out_path(options["report"], "benchmark.csv")
    write_report(report_path, rows)
    write_manifest(report_path + ".manifest.json", "benchmark", options, [], [report_path])
    print(format_table(rows))
    print(f"wrote {report_path}")
    return 0


def cmd_correctness(options: dict) -> int:
    rows = run_correctness(
        as_list(options["strategies"], str),
        n_samples=effective_n_samples(options),
        data_seed=int(options["data_seed"]),
        config=make_train_config(options, "aggl", int(options["seed"])),
        lam_grid=tuple(as_list(options["lam_grid"], float)),
        log=sys.stdout,
    )
    report_path = out_path(options["report"], "correctness.csv")
    write_report(report_path, rows)
    write_manifest(report_path + ".manifest.json", "correctness", options, [], [report_path])
    print(format_table(rows))
    print(f"wrote {report_path}")
    return 0


def cmd_consistency(options: dict) -> int:
    seeds = as_list(options["model_seeds"], int)
    if len(seeds) != 2:
        raise ConfigError(f"model_seeds needs exactly two seeds, got {seeds}")
    rows = run_consistency(
        options["scenario"],
        as_list(options["strategies"], str),
        n_samples=effective_n_samples(options),
        data_seed=int(options["data_seed"]),
        model_seeds=(seeds[0], seeds[1]),
        config=make_train_config(options, "aggl", seeds[0]),
        lam_grid=tuple(as_list(options["lam_grid"], float)),
    )
    report_path = out_path(options["report"], "consistency.csv")
    write_report(report_path, rows)
    write_manifest(report_path + ".manifest.json", "consistency", options, [], [report_path])
    print(format_table(rows))
    print(f"wrote {report_path}")
    return 0


def cmd_check(options: dict) -> int:
    results = run_all_checks(
        int(options["gradient_instances"]),
        int(options["oracle_instances"]),
        int(options["seed"]),
    )
    lines = [result.line() for result in results]
    for line in lines:
        print(line)
    if options["report"] is not None:
        with open(options["report"], "w") as fh:
            fh.write("\n".join(lines) + "\n")
        write_manifest(
            options["report"] + ".manifest.json", "check", options, [],
            [options["report"]],
        )
    return 0 if all(result.ok for result in results) else 3


COMMANDS = {
    "gen": cmd_gen,
    "train": cmd_train,
    "eval": cmd_eval,
    "benchmark": cmd_benchmark,
    "correctness": cmd_correctness,
    "consistency": cmd_consistency,
    "check": cmd_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="latentevents",
        description="Recover unobserved event probabilities from composite events.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, help_text: str) -> argparse.ArgumentParser:
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", help="JSON config file (strict keys)")
        return cmd

    def add_size(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument("--n-samples", type=int)
        cmd.add_argument(
            "--full-size",
            action="store_const",
            const=True,
            help=f"use the full benchmark size ({FULL_SIZE_N} samples)",
        )

    def add_training(cmd: argparse.ArgumentParser) -> None:
        cmd.add_argument(
            "--lambda", "--lam", dest="lam", type=float,
            help="penalty weight; 0 runs the grid search for penalized strategies",
        )
        cmd.add_argument("--alpha", type=float, help="smoothing weight in (0, 1]")
        cmd.add_argument("--epochs", type=int)
        cmd.add_argument("--batch-size", type=int)
        cmd.add_argument("--learning-rate", type=float)
        cmd.add_argument("--lam-grid", help="comma-separated penalty weights")

    gen = add("gen", "generate a synthetic scenario dataset")
    gen.add_argument("--scenario", choices=sorted(SCENARIOS))
    add_size(gen)
    gen.add_argument("--seed", type=int)
    gen.add_argument("--prob-cap", type=float)
    gen.add_argument("--out", help="output CSV path")

    train = add("train", "train one strategy on a dataset")
    train.add_argument("--data", help="dataset CSV path")
    train.add_argument(
        "--graph", help="graph preset name or JSON graph file (default: from scenario)"
    )
    train.add_argument("--strategy", choices=STRATEGIES)
    add_training(train)
    train.add_argument("--seed", type=int)
    train.add_argument("--target-split")
    train.add_argument("--out", help="output model directory")

    evl = add("eval", "score a trained model against ground truth")
    evl.add_argument("--data")
    evl.add_argument("--model", help="model directory")
    evl.add_argument("--split", choices=("train", "val", "test"))
    evl.add_argument("--report", help="output report CSV path")

    bench = add("benchmark", "scenario-by-strategy benchmark grid")
    bench.add_argument("--scenarios", help="comma-separated scenario names")
    bench.add_argument("--strategies", help="comma-separated strategies")
    add_size(bench)
    bench.add_argument("--data-seed", type=int)
    bench.add_argument("--prob-cap", type=float)
    add_training(bench)
    bench.add_argument("--seed", type=int)
    bench.add_argument("--report")

    corr = add("correctness", "recover the hidden send stage of the email chain")
    corr.add_argument("--strategies", help="comma-separated strategies")
    add_size(corr)
    corr.add_argument("--data-seed", type=int)
    add_training(corr)
    corr.add_argument("--seed", type=int)
    corr.add_argument("--report")

    cons = add("consistency", "cross-seed prediction agreement")
    cons.add_argument("--scenario", choices=sorted(SCENARIOS))
    cons.add_argument("--strategies")
    add_size(cons)
    cons.add_argument("--data-seed", type=int)
    cons.add_argument("--model-seeds", help="two comma-separated seeds")
    add_training(cons)
    cons.add_argument("--report")

    chk = add("check", "finite-difference and oracle checks")
    chk.add_argument("--gradient-instances", type=int)
    chk.add_argument("--oracle-instances", type=int)
    chk.add_argument("--seed", type=int)
    chk.add_argument("--report")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        options = resolve_options(args.command, args)
        return COMMANDS[args.command](options)
    except (ConfigError, GraphError, FileNotFoundError, NotADirectoryError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingDiverged as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
