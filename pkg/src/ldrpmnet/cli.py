"""Command-line entry point: data generation, training, evaluation,
complexity reports, gradient checking, and the four-way ablation.

Exit codes: 0 success, 1 usage error, 2 runtime failure.  Diagnostics go to
stderr; results go to stdout and the run directory.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import sys

import numpy as np

from . import __version__, config as config_mod, dataset
from .gradcheck import standard_suite
from .model import (MODEL_PRESETS, ModelConfig, build_preset,
                    load_checkpoint, save_checkpoint)
from .train import (TrainConfig, ablate, ablation_csv, evaluate, trace_csv,
                    train)

GRADCHECK_TOLERANCE = 1e-4


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"error: {message}", file=sys.stderr)
        raise SystemExit(1)


class CliError(RuntimeError):
    pass


def _prepare_out_dir(path: str, force: bool) -> None:
    if os.path.exists(path) and os.listdir(path) and not force:
        raise CliError(f"output directory {path!r} is not empty (use --force)")
    os.makedirs(path, exist_ok=True)


def _write_manifest(out_dir: str, command: str, resolved: dict, seed: int,
                    started: str, outputs: list) -> None:
    manifest = {
        "command": command,
        "config": resolved,
        "seed": seed,
        "version": __version__,
        "started": started,
        "finished": datetime.datetime.now(datetime.timezone.utc).isoformat(),
        "outputs": sorted(outputs),
    }
    with open(os.path.join(out_dir, "run_manifest.json"), "w") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def _load_configs(path: str | None) -> tuple[ModelConfig, TrainConfig]:
    if path is None:
        return ModelConfig(), TrainConfig()
    return config_mod.load_config(path)


def _now() -> str:
    return datetime.datetime.now(datetime.timezone.utc).isoformat()


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _cmd_gen_data(args) -> int:
    started = _now()
    _prepare_out_dir(args.out, args.force)
    print(f"generating {dataset.TOTAL_SAMPLES} samples "
          f"(seed {args.seed}, length {args.input_length})", file=sys.stderr)
    samples = dataset.generate(args.seed, args.input_length)
    samples = dataset.split(samples, args.seed)
    dataset.save(samples, args.out)
    outputs = sorted(os.listdir(args.out))
    _write_manifest(args.out, "gen-data",
                    {"input_length": args.input_length}, args.seed,
                    started, outputs)
    sizes = {p: len(samples.indices(p)) for p in ("train", "val", "test")}
    print(f"wrote {len(samples)} samples to {args.out} (splits {sizes})")
    return 0


def _cmd_train(args) -> int:
    started = _now()
    model_cfg, train_cfg = _load_configs(args.config)
    if args.seed is not None:
        train_cfg.seed = args.seed
    _prepare_out_dir(args.out, args.force)
    samples = dataset.load(args.data)
    if samples.input_length != model_cfg.input_length:
        raise CliError(
            f"dataset length {samples.input_length} != configured "
            f"input_length {model_cfg.input_length}")
    net = build_preset(args.model, base=model_cfg, seed=train_cfg.seed)
    print(f"training {args.model} ({net.param_count()} params, "
          f"{train_cfg.epochs} epochs)", file=sys.stderr)
    net, trace = train(net, samples, train_cfg)
    metrics = evaluate(net, samples)
    paths = {
        "trace.csv": trace_csv(trace),
        "metrics.csv": metrics.to_csv(),
        "confusion.csv": metrics.confusion_csv(),
    }
    for name, text in paths.items():
        with open(os.path.join(args.out, name), "w") as f:
            f.write(text)
    save_checkpoint(net, os.path.join(args.out, "weights.bin"))
    _write_manifest(args.out, "train",
                    {"model": args.model,
                     "model_config": config_mod.model_config_to_text(net.config),
                     "train_config": vars(train_cfg)},
                    train_cfg.seed, started,
                    list(paths) + ["weights.bin"])
    print(f"test accuracy {metrics.accuracy:.4f}  "
          f"macro F1 {metrics.f1:.4f}  outputs in {args.out}")
    return 0


def _cmd_eval(args) -> int:
    net = load_checkpoint(args.weights)
    samples = dataset.load(args.data)
    metrics = evaluate(net, samples)
    print(metrics.to_csv(), end="")
    print("confusion matrix (rows = true class):")
    print(metrics.confusion_csv(), end="")
    return 0


def _cmd_count(args) -> int:
    from .complexity import count

    model_cfg, _ = _load_configs(args.config)
    net = build_preset(args.model, base=model_cfg, seed=0)
    report = count(net)
    print(report.to_text())
    pm, fm = report.totals_millions
    print(f"\n{args.model}: Params {pm:.2f} M, FLOPs {fm:.2f} M")
    return 0


def _cmd_gradcheck(args) -> int:
    results = standard_suite(seed=args.seed)
    if args.op is not None:
        if args.op not in results:
            raise CliError(
                f"unknown op {args.op!r}; choose from {sorted(results)}")
        results = {args.op: results[args.op]}
    worst_name = max(results, key=results.get)
    for name in sorted(results):
        status = "ok" if results[name] <= GRADCHECK_TOLERANCE else "FAIL"
        print(f"{name:<20} max_rel_error {results[name]:.3e}  {status}")
    if results[worst_name] > GRADCHECK_TOLERANCE:
        print(f"worst: {worst_name} {results[worst_name]:.3e} exceeds "
              f"{GRADCHECK_TOLERANCE}", file=sys.stderr)
        return 2
    return 0


def _cmd_ablate(args) -> int:
    started = _now()
    model_cfg, train_cfg = _load_configs(args.config)
    train_cfg.seed = args.seed
    _prepare_out_dir(args.out, args.force)
    samples = dataset.load(args.data)
    if samples.input_length != model_cfg.input_length:
        raise CliError(
            f"dataset length {samples.input_length} != configured "
            f"input_length {model_cfg.input_length}")
    print("running four-way ablation (this trains four networks)",
          file=sys.stderr)
    results = ablate(samples, args.seed, base=model_cfg, train_config=train_cfg)
    text = ablation_csv(results)
    with open(os.path.join(args.out, "ablation.csv"), "w") as f:
        f.write(text)
    _write_manifest(args.out, "ablate",
                    {"model_config": config_mod.model_config_to_text(model_cfg),
                     "train_config": vars(train_cfg)},
                    args.seed, started, ["ablation.csv"])
    print(text, end="")
    return 0


# --------------------------------------------------------------------------

def _build_parser() -> _Parser:
    parser = _Parser(prog="ldrpmnet",
                     description="Lightweight 1-D fault-diagnosis pipeline")
    sub = parser.add_subparsers(dest="command")

    p = sub.add_parser("gen-data", help="generate the synthetic dataset")
    p.add_argument("--seed", type=int, default=0, help="generation seed")
    p.add_argument("--out", required=True, help="output dataset directory")
    p.add_argument("--input-length", type=int, default=8192,
                   help="samples per waveform")
    p.add_argument("--force", action="store_true",
                   help="overwrite a non-empty output directory")
    p.set_defaults(fn=_cmd_gen_data)

    p = sub.add_parser("train", help="train one model variant")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--model", required=True, choices=sorted(MODEL_PRESETS),
                   help="model variant")
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--seed", type=int, help="override the config seed")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--force", action="store_true",
                   help="overwrite a non-empty output directory")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint")
    p.add_argument("--weights", required=True, help="checkpoint file")
    p.add_argument("--data", required=True, help="dataset directory")
    p.set_defaults(fn=_cmd_eval)

    p = sub.add_parser("count", help="parameter / FLOPs report")
    p.add_argument("--model", required=True, choices=sorted(MODEL_PRESETS))
    p.add_argument("--config", help="flat key = value configuration file")
    p.set_defaults(fn=_cmd_count)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--op", help="run a single named check")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("ablate", help="train and compare all four variants")
    p.add_argument("--data", required=True, help="dataset directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--config", help="flat key = value configuration file")
    p.add_argument("--out", required=True, help="run output directory")
    p.add_argument("--force", action="store_true",
                   help="overwrite a non-empty output directory")
    p.set_defaults(fn=_cmd_ablate)

    return parser


def cli_dispatch(argv) -> int:
    parser = _build_parser()
    if not argv:
        parser.print_usage(sys.stderr)
        return 1
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "fn"):
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.fn(args)
    except (CliError, config_mod.ConfigFileError,
            dataset.DatasetLoadError, FileNotFoundError, ValueError,
            RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    raise SystemExit(cli_dispatch(sys.argv[1:]))
