"""Command-line entry point.

Subcommands: gen, partition, train, predict, eval, ablate. Settings come from
built-in defaults, then an optional ``--config`` file of ``key=value`` lines,
then command-line flags (flags win). All randomness derives from ``--seed``.

Exit codes::

    0  success
    2  usage error (unknown flag, missing required option)
    3  missing input file
    4  invalid configuration value
    5  malformed data
    6  training failure

Failures print one line to stderr: ``error: <category>: <message>``.
"""
from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from . import __version__
from .bench import (MODEL_NAMES, ExperimentConfig, ablate, bag_from_pcnn, build_ffnn_lgt,
                    config_from_mapping, format_table, metric_mae, metric_mape, metric_mse,
                    write_long_csv, write_report_csv)
from .datagen import DataError, SyntheticSpec, generate, load_csv, read_config, split_mask, write_csv
from .ffnn import TrainingError
from .model import PcnnModel, load_model, save_model
from .numerics import STREAM_PARTITION, SingularSystemError, derive_seed
from .partition import DegeneratePartitionError, partition_with_target, write_partition_csv

EXIT_OK, EXIT_USAGE, EXIT_MISSING, EXIT_CONFIG, EXIT_DATA, EXIT_TRAINING = 0, 2, 3, 4, 5, 6
CLI_MODELS = {name.lower(): name for name in MODEL_NAMES}

class CliError(Exception):
    def __init__(self, code, category, message):
        super().__init__(message)
        self.code = code
        self.category = category

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(EXIT_USAGE, "usage", message)

SPEC_KEYS = ("d", "n", "sigma", "nu", "r", "f1", "f2", "projection")
TRAIN_KEYS = (
    "subpattern_hidden", "classifier_hidden", "ffnn_hidden", "activation", "q", "n_parts",
    "gamma", "routing", "neuron_budget", "test_fraction", "loss",
    "sub_mode", "sub_epochs", "sub_batch_size", "sub_learning_rate", "sub_ridge_lambda",
    "clf_epochs", "clf_batch_size", "clf_learning_rate",
)
KNOWN_KEYS = set(SPEC_KEYS) | set(TRAIN_KEYS) | {
    "seed", "jobs", "model", "split", "models", "sweep", "use_parts", "data", "out", "long_out"}

def _add_common(p):
    p.add_argument("--config", help="key=value file; flags override its values")
    p.add_argument("--seed", type=int, help="global seed (default 0)")

def _add_spec(p):
    p.add_argument("--d", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--sigma", type=float)
    p.add_argument("--nu", type=float)
    p.add_argument("--r", type=float)
    p.add_argument("--f1")
    p.add_argument("--f2")
    p.add_argument("--projection", choices=("gaussian", "ones"))

def _add_train(p):
    p.add_argument("--q", type=float)
    p.add_argument("--n-parts", dest="n_parts", help="part-count hint, or 'auto'")
    p.add_argument("--gamma", type=float)
    p.add_argument("--routing", choices=("argmax", "paper_literal"))
    p.add_argument("--activation")
    p.add_argument("--subpattern-hidden", dest="subpattern_hidden", help="comma-separated widths")
    p.add_argument("--classifier-hidden", dest="classifier_hidden", help="comma-separated widths")
    p.add_argument("--ffnn-hidden", dest="ffnn_hidden", help="comma-separated widths")
    p.add_argument("--neuron-budget", dest="neuron_budget")
    p.add_argument("--loss", choices=("mae", "mse"))
    p.add_argument("--mode", dest="sub_mode", choices=("gradient", "random_readout"))
    p.add_argument("--epochs", dest="sub_epochs", type=int)
    p.add_argument("--batch-size", dest="sub_batch_size", type=int)
    p.add_argument("--learning-rate", dest="sub_learning_rate", type=float)
    p.add_argument("--ridge-lambda", dest="sub_ridge_lambda", type=float)
    p.add_argument("--clf-epochs", dest="clf_epochs", type=int)
    p.add_argument("--clf-batch-size", dest="clf_batch_size", type=int)
    p.add_argument("--clf-learning-rate", dest="clf_learning_rate", type=float)
    p.add_argument("--jobs", type=int, help="concurrent subpattern trainings (1 = sequential)")

def build_parser():
    parser = _Parser(prog="pcnn", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"pcnn {__version__}")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("gen", help="write a synthetic dataset")
    _add_common(p)
    _add_spec(p)
    p.add_argument("--split", help="'none', 'last:K' or 'fraction:F'; adds a split column")
    p.add_argument("--out", required=True)

    p = sub.add_parser("partition", help="run the ball partition on a dataset")
    _add_common(p)
    p.add_argument("--data", required=True)
    p.add_argument("--q", type=float)
    p.add_argument("--n-parts", dest="n_parts")
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="fit a model and save it as JSON")
    _add_common(p)
    _add_train(p)
    p.add_argument("--data", required=True)
    p.add_argument("--model", choices=sorted(CLI_MODELS))
    p.add_argument("--use-parts", dest="use_parts", action="store_const", const="1",
                   help="use the data's part column as an expert partition")
    p.add_argument("--out", required=True)

    p = sub.add_parser("predict", help="write predictions and serving parts")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("eval", help="score a saved model")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--split", help="which rows to score: test (default when tagged) or all")
    p.add_argument("--out")

    p = sub.add_parser("ablate", help="benchmark over a parameter grid")
    _add_common(p)
    _add_spec(p)
    _add_train(p)
    p.add_argument("--data", help="CSV dataset; otherwise a synthetic spec is generated")
    p.add_argument("--sweep", action="append", help="key=v1,v2,... (repeatable)")
    p.add_argument("--models", help=f"comma list from {','.join(sorted(CLI_MODELS))} (default pcnn)")
    p.add_argument("--split", help="test split when the data has none (default fraction:0.2)")
    p.add_argument("--out", required=True)
    p.add_argument("--long-out", dest="long_out", help="long-format CSV for plotting")
    return parser

def _settings(args) -> dict:
    values = {}
    if getattr(args, "config", None):
        try:
            values = read_config(args.config)
        except FileNotFoundError:
            raise CliError(EXIT_MISSING, "missing-file", f"config file not found: {args.config}")
        except DataError as exc:
            raise CliError(EXIT_CONFIG, "invalid-config", str(exc))
        unknown = sorted(set(values) - KNOWN_KEYS)
        if unknown:
            raise CliError(EXIT_CONFIG, "invalid-config", f"unknown config key(s): {', '.join(unknown)}")
    for key, value in vars(args).items():
        if value is not None and key not in ("command", "config"):
            values[key] = value
    return values

def _spec(values) -> SyntheticSpec:
    try:
        return SyntheticSpec.from_mapping({k: values[k] for k in (*SPEC_KEYS, "seed") if k in values})
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, "invalid-config", str(exc))

def _experiment(values) -> ExperimentConfig:
    base = ExperimentConfig()
    try:
        cfg = config_from_mapping(values, base)
        seed = int(values.get("seed", 0))
        jobs = int(values.get("jobs", 1))
        if jobs < 1:
            raise ValueError("--jobs must be >= 1")
        return replace(cfg, seed=seed, n_jobs=jobs)
    except (TypeError, ValueError) as exc:
        raise CliError(EXIT_CONFIG, "invalid-config", str(exc))

def _load(path, split=None, seed=0):
    try:
        return load_csv(path, split=split, seed=seed)
    except FileNotFoundError:
        raise CliError(EXIT_MISSING, "missing-file", f"data file not found: {path}")

def _has_split_column(path):
    try:
        with open(path) as fh:
            return "split" in [h.strip() for h in fh.readline().split(",")]
    except FileNotFoundError:
        raise CliError(EXIT_MISSING, "missing-file", f"data file not found: {path}")

def _load_tagged(path, default_split=None, seed=0):
    split = "column:split" if _has_split_column(path) else default_split
    return _load(path, split, seed)

def cmd_gen(values):
    spec = _spec(values)
    data = generate(spec)
    split = values.get("split")
    if split and split != "none":
        try:
            data.is_test = split_mask(len(data), split, spec.seed)
        except (DataError, ValueError) as exc:
            raise CliError(EXIT_CONFIG, "invalid-config", str(exc))
    write_csv(values["out"], data, include_split=bool(split and split != "none"))
    return EXIT_OK

def cmd_partition(values):
    seed = int(values.get("seed", 0))
    try:
        q = float(values.get("q", 0.1))
        n_parts = values.get("n_parts")
        n_parts = None if n_parts in (None, "auto", "none") else int(n_parts)
        if not 0 < q <= 1:
            raise ValueError(f"q must lie in (0, 1], got {q}")
    except ValueError as exc:
        raise CliError(EXIT_CONFIG, "invalid-config", str(exc))
    data = _load(values["data"])
    partition, _ = partition_with_target(data.inputs, q, derive_seed(seed, STREAM_PARTITION), n_parts)
    write_partition_csv(values["out"], partition, len(data))
    return EXIT_OK

def _fit_model(name, cfg: ExperimentConfig, X, y, parts=None) -> PcnnModel:
    if name in ("FFNN", "FFNN-RND"):
        mode = "gradient" if name == "FFNN" else "random_readout"
        est = replace(cfg, n_jobs=1).ffnn(mode)
        return est.fit(X, y).model_
    est = cfg.pcnn(n_jobs=cfg.n_jobs)
    est.fit(X, y, parts=parts)
    if name == "FFNN-BAG":
        return bag_from_pcnn(est)
    if name == "FFNN-LGT":
        return build_ffnn_lgt(est, X, y).model_
    return est.model_

def cmd_train(values):
    cfg = _experiment(values)
    name = CLI_MODELS[values.get("model", "pcnn")]
    data = _load_tagged(values["data"])
    train = data.train()
    if len(train) == 0:
        raise CliError(EXIT_DATA, "data", "no training rows")
    parts = None
    if values.get("use_parts") not in (None, "0", "false"):
        if train.part_labels is None:
            raise CliError(EXIT_DATA, "data", "--use-parts needs a 'part' column")
        parts = train.part_labels
    y = train.targets[:, 0] if train.targets.shape[1] == 1 else train.targets
    model = _fit_model(name, cfg, train.inputs, y, parts)
    save_model(values["out"], model, {"model": name, "seed": cfg.seed})
    return EXIT_OK

def _read_model(path):
    try:
        return load_model(path)
    except FileNotFoundError:
        raise CliError(EXIT_MISSING, "missing-file", f"model file not found: {path}")
    except (ValueError, KeyError) as exc:
        raise CliError(EXIT_DATA, "data", f"{path}: unreadable model ({exc})")

def _check_width(model, data):
    if data.n_features != model.n_inputs:
        raise CliError(EXIT_DATA, "data",
                       f"model expects {model.n_inputs} input columns, data has {data.n_features}")

def cmd_predict(values):
    model = _read_model(values["model"])
    data = _load(values["data"])
    _check_width(model, data)
    pred = model.predict(data.inputs)
    parts = model.part_assignment(data.inputs)
    with open(values["out"], "w") as fh:
        fh.write(",".join([f"y{j}" for j in range(pred.shape[1])] + ["part"]) + "\n")
        for row, k in zip(pred, parts):
            fh.write(",".join([repr(float(v)) for v in row] + [str(int(k))]) + "\n")
    return EXIT_OK

def cmd_eval(values):
    model = _read_model(values["model"])
    data = _load_tagged(values["data"])
    _check_width(model, data)
    which = values.get("split") or ("test" if data.is_test.any() else "all")
    if which not in ("test", "all", "train"):
        raise CliError(EXIT_CONFIG, "invalid-config", f"--split must be test, train or all, got {which!r}")
    subset = {"test": data.test, "train": data.train, "all": lambda: data}[which]()
    if len(subset) == 0:
        raise CliError(EXIT_DATA, "data", f"no {which} rows to evaluate")
    pred = model.predict(subset.inputs)
    row = {"rows": len(subset), "mae": metric_mae(pred, subset.targets),
           "mse": metric_mse(pred, subset.targets)}
    try:
        row["mape"], row["mape_skipped"] = metric_mape(pred, subset.targets)
    except ValueError:
        row["mape"], row["mape_skipped"] = float("nan"), len(subset)
    text = "split,rows,mae,mse,mape,mape_skipped\n" + ",".join(
        [which, str(row["rows"]), repr(row["mae"]), repr(row["mse"]), repr(row["mape"]),
         str(row["mape_skipped"])]) + "\n"
    if values.get("out"):
        with open(values["out"], "w") as fh:
            fh.write(text)
    sys.stdout.write(text)
    return EXIT_OK

def _parse_sweep(items) -> dict:
    if not items:
        raise CliError(EXIT_CONFIG, "invalid-config", "ablate needs at least one --sweep key=v1,v2")
    if isinstance(items, str):
        items = [s for s in items.split(";") if s.strip()]
    grid = {}
    for item in items:
        key, sep, raw = item.partition("=")
        key = key.strip().replace("-", "_")
        if not sep or not raw.strip():
            raise CliError(EXIT_CONFIG, "invalid-config", f"bad sweep {item!r}; expected key=v1,v2")
        try:
            cast = int if key in ("n_parts", "n_data", "seed") else float
            grid[key] = [cast(v) for v in raw.split(",") if v.strip()]
        except ValueError:
            raise CliError(EXIT_CONFIG, "invalid-config", f"non-numeric value in sweep {item!r}")
    return grid

def cmd_ablate(values):
    cfg = _experiment(values)
    grid = _parse_sweep(values.get("sweep"))
    models = [m.strip().lower() for m in str(values.get("models", "pcnn")).split(",") if m.strip()]
    bad = [m for m in models if m not in CLI_MODELS]
    if bad:
        raise CliError(EXIT_CONFIG, "invalid-config", f"unknown model(s): {', '.join(bad)}")
    models = tuple(CLI_MODELS[m] for m in models)
    spec = data = None
    if values.get("data"):
        data = _load_tagged(values["data"], values.get("split", f"fraction:{cfg.test_fraction}"),
                            cfg.seed)
        if any(k in SPEC_KEYS for k in values):
            spec = _spec(values)
    else:
        spec = _spec(values)
    try:
        reports = ablate(grid, cfg, spec=spec, data=data, models=models)
    except ValueError as exc:
        if isinstance(exc, DataError):
            raise
        raise CliError(EXIT_CONFIG, "invalid-config", str(exc))
    write_report_csv(values["out"], reports, grid_keys=list(grid))
    if values.get("long_out"):
        write_long_csv(values["long_out"], reports, grid_keys=list(grid))
    for rep in reports:
        point = ", ".join(f"{k}={v}" for k, v in rep.metadata["sweep"].items())
        sys.stdout.write(f"[{point}]\n{format_table(rep)}\n")
    return EXIT_OK

COMMANDS = {"gen": cmd_gen, "partition": cmd_partition, "train": cmd_train,
            "predict": cmd_predict, "eval": cmd_eval, "ablate": cmd_ablate}

def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        values = _settings(args)
        return COMMANDS[args.command](values)
    except CliError as exc:
        code, category, message = exc.code, exc.category, str(exc)
    except FileNotFoundError as exc:
        code, category, message = EXIT_MISSING, "missing-file", str(exc)
    except (DataError, DegeneratePartitionError) as exc:
        code, category, message = EXIT_DATA, "data", str(exc)
    except (TrainingError, SingularSystemError) as exc:
        code, category, message = EXIT_TRAINING, "training", str(exc)
    except ValueError as exc:
        code, category, message = EXIT_CONFIG, "invalid-config", str(exc)
    message = " ".join(message.split())
    sys.stderr.write(f"error: {category}: {message}\n")
    return code

if __name__ == "__main__":
    sys.exit(main())
