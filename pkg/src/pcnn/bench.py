"""Benchmark harness: FFNN, FFNN-RND, FFNN-BAG, FFNN-LGT and PCNN side by side.

Every model is built from the same machinery. FFNN is a PCNN forced to a
single part, FFNN-RND the same with a random-feature readout, FFNN-BAG sums
the PCNN's subpatterns without routing, and FFNN-LGT swaps the PCNN's deep
classifier for a logistic one. Wall-clock columns cover training only.
"""
from __future__ import annotations

import csv
import itertools
import math
import time
from dataclasses import dataclass, field, fields, replace

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .datagen import Dataset, SyntheticSpec, generate, split_mask
from .ffnn import TrainConfig
from .model import PCNNRegressor, PcnnModel, train_subpatterns
from .numerics import STREAM_PARTITION, derive_seed
from .partition import partition_with_target

MODEL_NAMES = ("FFNN", "FFNN-RND", "FFNN-BAG", "FFNN-LGT", "PCNN")
REPORT_COLUMNS = (
    "model", "mae", "p_time", "l_time", "params_per_input", "n_parts",
    "d", "sigma", "n_data", "nu", "r",
    "mse", "mape", "mape_skipped", "params_total", "hidden_neurons", "seed", "status",
)
WALL_CLOCK_COLUMNS = ("p_time", "l_time")


def _pair(pred, truth):
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.ndim == 1:
        pred = pred[:, None]
    if truth.ndim == 1:
        truth = truth[:, None]
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {truth.shape}")
    return pred, truth


def metric_mae(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean(np.abs(pred - truth)))


def metric_mse(pred, truth) -> float:
    pred, truth = _pair(pred, truth)
    return float(np.mean((pred - truth) ** 2))


def metric_mape(pred, truth):
    """Mean of ``||pred - truth|| / ||truth||`` over rows with nonzero truth.

    Returns ``(value, skipped_rows)``; all-zero truth raises ValueError.
    """
    pred, truth = _pair(pred, truth)
    norms = np.linalg.norm(truth, axis=1)
    keep = norms > 0
    if not keep.any():
        raise ValueError("MAPE is undefined when every truth row is zero")
    ratio = np.linalg.norm(pred[keep] - truth[keep], axis=1) / norms[keep]
    return float(ratio.mean()), int((~keep).sum())


@dataclass
class ExperimentConfig:
    subpattern_hidden: tuple = (32,)
    classifier_hidden: tuple = (32,)
    ffnn_hidden: tuple | None = None
    activation: str = "relu"
    subpattern_config: TrainConfig = field(default_factory=lambda: TrainConfig(loss="mae"))
    classifier_config: TrainConfig = field(
        default_factory=lambda: TrainConfig(loss="binary_cross_entropy"))
    ffnn_config: TrainConfig | None = None
    q: float = 0.1
    n_parts: int | None = None
    gamma: float = 0.5
    routing: str = "argmax"
    neuron_budget: int | None = None
    n_jobs: int = 1
    seed: int = 0
    test_fraction: float = 0.2

    def pcnn(self, **overrides) -> PCNNRegressor:
        params = dict(
            subpattern_hidden=tuple(self.subpattern_hidden),
            classifier_hidden=tuple(self.classifier_hidden),
            activation=self.activation,
            subpattern_config=self.subpattern_config,
            classifier_config=self.classifier_config,
            q=self.q, n_parts=self.n_parts, gamma=self.gamma, routing=self.routing,
            neuron_budget=self.neuron_budget, n_jobs=1, random_state=self.seed,
        )
        params.update(overrides)
        return PCNNRegressor(**params)

    def ffnn(self, mode="gradient") -> PCNNRegressor:
        hidden = tuple(self.ffnn_hidden or self.subpattern_hidden)
        cfg = self.ffnn_config or self.subpattern_config
        cfg = replace(cfg, mode=mode)
        return self.pcnn(subpattern_hidden=hidden, subpattern_config=cfg, n_parts=1,
                         neuron_budget=None)


@dataclass
class BenchmarkReport:
    rows: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def row(self, name) -> dict:
        for r in self.rows:
            if r["model"] == name:
                return r
        raise KeyError(name)

    def ratio(self, name, metric="mae", baseline="FFNN") -> float:
        return self.row(name)[metric] / self.row(baseline)[metric]

    def table_rows(self):
        out = []
        for r in self.rows:
            merged = {**self.metadata, **r}
            out.append({c: merged.get(c, "") for c in REPORT_COLUMNS})
        return out


def _fmt(value):
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (np.integer,)):
        return str(int(value))
    return "" if value is None else str(value)


def write_report_csv(path, reports, grid_keys=()):
    """One row per (report, model).

    Each grid key becomes a leading ``sweep_<key>`` column holding the
    requested value (the realized part count may differ from a hint).
    """
    reports = [reports] if isinstance(reports, BenchmarkReport) else list(reports)
    header = [f"sweep_{k}" for k in grid_keys] + list(REPORT_COLUMNS)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for rep in reports:
            sweep = rep.metadata.get("sweep", {})
            for row in rep.table_rows():
                writer.writerow([_fmt(sweep.get(k, "")) for k in grid_keys]
                                + [_fmt(row[c]) for c in REPORT_COLUMNS])


def write_long_csv(path, reports, grid_keys=()):
    """Long format for plotting: grid values, model, metric, value."""
    metrics = ("mae", "mse", "mape", "p_time", "l_time", "params_per_input", "params_total",
               "n_parts")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*(f"sweep_{k}" for k in grid_keys), "model", "metric", "value"])
        for rep in reports:
            sweep = rep.metadata.get("sweep", {})
            for row in rep.rows:
                for m in metrics:
                    writer.writerow([*(_fmt(sweep.get(k)) for k in grid_keys),
                                     row["model"], m, _fmt(row.get(m))])


def format_table(report: BenchmarkReport, relative=True) -> str:
    """Plain-text table; with ``relative`` the metrics are fractions of the FFNN row."""
    cols = ("mae", "p_time", "l_time", "params_per_input", "n_parts")
    titles = ("MAE", "P. Time", "L. Time", "#Par/x", "#Parts")
    base = None
    if relative:
        try:
            base = report.row("FFNN")
        except KeyError:
            base = None
    lines = ["{:<10}".format("") + "".join(f"{t:>12}" for t in titles)]
    for r in report.rows:
        cells = []
        for c in cols:
            v = r.get(c)
            if v is None or (isinstance(v, float) and math.isnan(v)):
                cells.append(f"{'-':>12}")
            elif c == "n_parts":
                cells.append(f"{int(v):>12d}")
            else:
                if base is not None and c != "n_parts" and base.get(c):
                    v = v / base[c]
                cells.append(f"{v:>12.3e}")
        lines.append(f"{r['model']:<10}" + "".join(cells))
    meta = ", ".join(f"{k}={report.metadata[k]}" for k in ("d", "sigma", "n_data", "nu", "r")
                     if k in report.metadata)
    if meta:
        lines.append(meta)
    return "\n".join(lines)


class FFNNBagRegressor(BaseEstimator, RegressorMixin):
    """Unrouted sum of one network per part of the ball partition."""

    def __init__(self, hidden=(32,), activation="relu", config=None, q=0.1, n_parts=None,
                 n_jobs=1, random_state=0):
        self.hidden = hidden
        self.activation = activation
        self.config = config
        self.q = q
        self.n_parts = n_parts
        self.n_jobs = n_jobs
        self.random_state = random_state

    def fit(self, X, y, parts=None):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_1d = y.ndim == 1
        Y = y[:, None] if y.ndim == 1 else y
        seed = 0 if self.random_state is None else int(self.random_state)
        if parts is None:
            partition, _ = partition_with_target(X, self.q, derive_seed(seed, STREAM_PARTITION),
                                                 self.n_parts)
            index_sets = partition.parts
        else:
            parts = np.asarray(parts, dtype=int)
            index_sets = [np.flatnonzero(parts == k) for k in np.unique(parts)]
        self.model_ = build_ffnn_bag(index_sets, X, Y, [tuple(self.hidden)] * len(index_sets),
                                     self.config or TrainConfig(loss="mae"), seed,
                                     self.activation, self.n_jobs)
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "model_")
        out = self.model_.predict(check_array(X))
        return out[:, 0] if self._y_1d else out


def build_ffnn_bag(parts, X, Y, hidden, config, seed, activation="relu", n_jobs=1) -> PcnnModel:
    """Train one network per index set and sum them unconditionally."""
    models, _, _ = train_subpatterns(np.asarray(X, float), np.asarray(Y, float).reshape(len(X), -1),
                                     parts, hidden, config, seed, activation, n_jobs)
    return PcnnModel(models, None, routing="sum")


def bag_from_pcnn(est: PCNNRegressor) -> PcnnModel:
    return PcnnModel(list(est.model_.subpatterns), None, routing="sum")


def build_ffnn_lgt(est: PCNNRegressor, X, y) -> PCNNRegressor:
    """Same subpatterns and labels as ``est``, logistic (single affine layer) classifier."""
    return est.refit_classifier(X, y, classifier_hidden=())


def _hidden_neurons(models):
    return int(sum(sum(m.hidden_dims) for m in models))


def _metrics(pred, truth):
    row = {"mae": metric_mae(pred, truth), "mse": metric_mse(pred, truth)}
    try:
        row["mape"], row["mape_skipped"] = metric_mape(pred, truth)
    except ValueError:
        row["mape"], row["mape_skipped"] = float("nan"), len(truth)
    return row


def _failed(name, exc):
    return {"model": name, "mae": float("nan"), "mse": float("nan"), "mape": float("nan"),
            "mape_skipped": "", "p_time": float("nan"), "l_time": float("nan"),
            "params_per_input": float("nan"), "params_total": "", "n_parts": "",
            "hidden_neurons": "", "status": f"error: {type(exc).__name__}: {exc}"}


def run_experiment(data: Dataset, config: ExperimentConfig, models=MODEL_NAMES,
                   spec: SyntheticSpec | None = None) -> BenchmarkReport:
    """Train the requested models on the train split and score them on the test split.

    ``l_time`` trains subpatterns one after another; ``p_time`` retrains them
    with ``config.n_jobs`` workers (identical parameters are enforced). With
    ``n_jobs == 1`` the two coincide.
    """
    unknown = set(models) - set(MODEL_NAMES)
    if unknown:
        raise ValueError(f"unknown model(s): {sorted(unknown)}")
    train, test = data.train(), data.test()
    if len(train) == 0 or len(test) == 0:
        raise ValueError("run_experiment needs nonempty train and test splits")
    X, Y = train.inputs, train.targets
    Xt, Yt = test.inputs, test.targets
    y_fit = Y[:, 0] if Y.shape[1] == 1 else Y

    meta = {"d": data.n_features, "n_data": len(data), "seed": config.seed,
            "sigma": float("nan"), "nu": float("nan"), "r": float("nan")}
    if spec is not None:
        meta.update(sigma=spec.sigma, nu=spec.nu, r=spec.r)
    report = BenchmarkReport(metadata=meta)

    for name, mode in (("FFNN", "gradient"), ("FFNN-RND", "random_readout")):
        if name not in models:
            continue
        try:
            est = config.ffnn(mode).fit(X, y_fit)
            sub = est.model_.subpatterns[0]
            pred = sub.forward(Xt)
            t = est.partition_time_ + est.subpattern_wall_time_
            report.rows.append({
                "model": name, **_metrics(pred, Yt), "p_time": t, "l_time": t,
                "params_per_input": float(sub.parameter_count()),
                "params_total": sub.parameter_count(), "n_parts": 1,
                "hidden_neurons": _hidden_neurons([sub]), "status": "ok",
            })
        except Exception as exc:  # recorded per row, the run continues
            report.rows.append(_failed(name, exc))

    if not {"FFNN-BAG", "FFNN-LGT", "PCNN"} & set(models):
        return report
    try:
        pcnn = config.pcnn().fit(X, y_fit, parts=None)
        sub_l = pcnn.subpattern_wall_time_
        sub_p = sub_l
        if config.n_jobs > 1:
            sub_p, _ = pcnn.time_subpatterns(X, y_fit, config.n_jobs)
    except Exception as exc:
        for name in ("FFNN-BAG", "FFNN-LGT", "PCNN"):
            if name in models:
                report.rows.append(_failed(name, exc))
        return report

    subs = pcnn.model_.subpatterns
    shared = {"n_parts": pcnn.n_parts_, "hidden_neurons": _hidden_neurons(subs)}
    routing_time = pcnn.label_time_

    if "FFNN-BAG" in models:
        try:
            bag = bag_from_pcnn(pcnn)
            report.rows.append({
                "model": "FFNN-BAG", **_metrics(bag.predict(Xt), Yt),
                "p_time": pcnn.partition_time_ + sub_p, "l_time": pcnn.partition_time_ + sub_l,
                "params_per_input": float(np.mean(bag.active_parameter_count(Xt))),
                "params_total": bag.parameter_count(), **shared, "status": "ok",
            })
        except Exception as exc:
            report.rows.append(_failed("FFNN-BAG", exc))

    if "FFNN-LGT" in models:
        try:
            lgt = build_ffnn_lgt(pcnn, X, y_fit)
            extra = pcnn.partition_time_ + routing_time + lgt.classifier_time_
            report.rows.append({
                "model": "FFNN-LGT", **_metrics(lgt.model_.predict(Xt), Yt),
                "p_time": extra + sub_p, "l_time": extra + sub_l,
                "params_per_input": float(np.mean(lgt.active_parameter_count(Xt))),
                "params_total": lgt.model_.parameter_count(), **shared, "status": "ok",
            })
        except Exception as exc:
            report.rows.append(_failed("FFNN-LGT", exc))

    if "PCNN" in models:
        extra = pcnn.partition_time_ + routing_time + pcnn.classifier_time_
        report.rows.append({
            "model": "PCNN", **_metrics(pcnn.model_.predict(Xt), Yt),
            "p_time": extra + sub_p, "l_time": extra + sub_l,
            "params_per_input": float(np.mean(pcnn.active_parameter_count(Xt))),
            "params_total": pcnn.model_.parameter_count(), **shared, "status": "ok",
        })
    order = {n: i for i, n in enumerate(MODEL_NAMES)}
    report.rows.sort(key=lambda r: order[r["model"]])
    return report


DATA_KEYS = ("sigma", "nu", "r", "n_data")
MODEL_KEYS = ("n_parts", "seed")


def ablate(sweep: dict, config: ExperimentConfig, spec: SyntheticSpec | None = None,
           data: Dataset | None = None, models=("PCNN",)) -> list:
    """One report per point of the cartesian grid ``sweep``.

    ``sweep`` maps any of n_parts, sigma, nu, r, n_data, seed to a list of
    values. Data keys regenerate the synthetic data from ``spec``; ``data``
    (e.g. from CSV) only supports n_parts and seed sweeps. With
    ``config.neuron_budget`` set, every n_parts value shares the same total
    number of subpattern hidden neurons.
    """
    if not sweep:
        raise ValueError("the sweep grid is empty")
    for key in sweep:
        if key not in DATA_KEYS + MODEL_KEYS:
            raise ValueError(f"cannot sweep {key!r}; choose from {DATA_KEYS + MODEL_KEYS}")
    if any(k in DATA_KEYS for k in sweep) and spec is None:
        raise ValueError("sweeping data parameters needs a synthetic spec")
    if spec is None and data is None:
        raise ValueError("ablate needs either a synthetic spec or a dataset")
    keys = list(sweep)
    reports = []
    for values in itertools.product(*(sweep[k] for k in keys)):
        point = dict(zip(keys, values))
        cfg = config
        if "n_parts" in point:
            cfg = replace(cfg, n_parts=int(point["n_parts"]))
        if "seed" in point:
            cfg = replace(cfg, seed=int(point["seed"]))
        run_spec = spec
        if spec is not None and (data is None or any(k in DATA_KEYS for k in point) or "seed" in point):
            changes = {k: point[k] for k in ("sigma", "nu", "r") if k in point}
            if "n_data" in point:
                changes["n"] = int(point["n_data"])
            if "seed" in point:
                changes["seed"] = int(point["seed"])
            run_spec = replace(spec, **changes)
            run_data = generate(run_spec)
            run_data.is_test = split_mask(len(run_data), f"fraction:{cfg.test_fraction}",
                                          run_spec.seed)
        else:
            run_data = data
        rep = run_experiment(run_data, cfg, models, run_spec)
        rep.metadata["sweep"] = point
        reports.append(rep)
    return reports


def config_from_mapping(values: dict, base: ExperimentConfig | None = None) -> ExperimentConfig:
    """Build an ExperimentConfig from flat string values (config file or CLI)."""
    base = base or ExperimentConfig()
    tuple_keys = {"subpattern_hidden", "classifier_hidden", "ffnn_hidden"}
    changes = {}
    for f in fields(ExperimentConfig):
        if f.name not in values or values[f.name] is None:
            continue
        raw = values[f.name]
        if f.name in tuple_keys:
            raw = str(raw).strip()
            changes[f.name] = tuple(int(v) for v in raw.split(",") if v.strip()) if raw else ()
        elif f.name in ("n_parts", "neuron_budget"):
            changes[f.name] = None if str(raw) in ("", "auto", "none") else int(raw)
        elif f.name in ("n_jobs", "seed"):
            changes[f.name] = int(raw)
        elif f.name in ("q", "gamma", "test_fraction"):
            changes[f.name] = float(raw)
        elif f.name in ("activation", "routing"):
            changes[f.name] = str(raw)
    cfg = replace(base, **changes)

    def train_cfg(prefix, current, loss):
        keys = {"mode": str, "epochs": int, "batch_size": int, "learning_rate": float,
                "ridge_lambda": float}
        upd = {}
        for k, cast in keys.items():
            v = values.get(f"{prefix}_{k}")
            if v is not None:
                upd[k] = cast(v)
        return replace(current, loss=loss, **upd)

    sub_loss = str(values.get("loss") or cfg.subpattern_config.loss)
    return replace(
        cfg,
        subpattern_config=train_cfg("sub", cfg.subpattern_config, sub_loss),
        classifier_config=train_cfg("clf", cfg.classifier_config, "binary_cross_entropy"),
        ffnn_config=None if cfg.ffnn_config is None else train_cfg("ffnn", cfg.ffnn_config, sub_loss),
    )


def timed(fn, *args, **kwargs):
    start = time.perf_counter()
    out = fn(*args, **kwargs)
    return out, time.perf_counter() - start
