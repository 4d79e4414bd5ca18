"""Piecewise-continuous networks: N subpattern networks glued by a deep classifier.

For an input x the classifier emits one logit per part. Part n is active when
``sigmoid(logit_n) > gamma`` (the deep zero-set of part n), and the output is
assembled from the subpatterns by one of three routing rules:

``argmax``
    the subpattern with the largest classifier score (ties to the lowest
    index); every input is served by exactly one subpattern.
``paper_literal``
    the plain sum of the active subpatterns, zero when none is active.
``sum``
    every subpattern, unconditionally (the bagged benchmark; no classifier).

Training is decoupled: subpatterns are fit on the parts of a data partition,
each row is labelled with the subpatterns that fit it best, and the classifier
is fit to those labels. No derivative of the threshold is ever taken.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, replace

import numpy as np
from joblib import Parallel, delayed
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .ffnn import (LOGIT_TARGET, Mlp, TrainConfig, TrainingError, init_mlp, per_sample_loss,
                   train_ffnn)
from .numerics import (STREAM_CLASSIFIER, STREAM_PARTITION, STREAM_SUBPATTERN, derive_seed,
                       make_rng, sigmoid)
from .partition import partition_with_target

ROUTINGS = ("argmax", "paper_literal", "sum")
MEMBERSHIP_RULES = ("sigmoid_above_gamma", "output_at_most_half")
FORMAT_VERSION = 1


@dataclass
class PcnnModel:
    subpatterns: list
    classifier: Mlp | None
    gamma: float = 0.5
    routing: str = "argmax"
    membership_rule: str = "sigmoid_above_gamma"

    def __post_init__(self):
        if not self.subpatterns:
            raise ValueError("a PCNN needs at least one subpattern")
        d, D = self.subpatterns[0].n_inputs, self.subpatterns[0].n_outputs
        for k, sub in enumerate(self.subpatterns):
            if (sub.n_inputs, sub.n_outputs) != (d, D):
                raise ValueError(f"subpattern {k} maps {sub.n_inputs}->{sub.n_outputs}, expected {d}->{D}")
        if self.routing not in ROUTINGS:
            raise ValueError(f"routing must be one of {ROUTINGS}")
        if self.membership_rule not in MEMBERSHIP_RULES:
            raise ValueError(f"membership_rule must be one of {MEMBERSHIP_RULES}")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.classifier is None:
            if self.routing != "sum":
                raise ValueError("only 'sum' routing works without a classifier")
        elif (self.classifier.n_inputs, self.classifier.n_outputs) != (d, self.n_parts):
            raise ValueError("classifier must map the input space to one logit per part")

    @property
    def n_parts(self):
        return len(self.subpatterns)

    @property
    def n_inputs(self):
        return self.subpatterns[0].n_inputs

    @property
    def n_outputs(self):
        return self.subpatterns[0].n_outputs

    def logits(self, X) -> np.ndarray:
        if self.classifier is None:
            raise ValueError("this model has no classifier")
        return self.classifier.forward(X)

    def membership(self, X) -> np.ndarray:
        """Boolean (n, N) matrix: row i, column n is True when x_i lies in part n."""
        if self.classifier is None:
            return np.ones((np.asarray(X).shape[0], self.n_parts), dtype=bool)
        z = self.logits(X)
        if self.membership_rule == "output_at_most_half":
            return z <= 0.5
        return sigmoid(z) > self.gamma

    def route(self, X) -> np.ndarray:
        """Index of the subpattern with the highest classifier score."""
        if self.classifier is None:
            raise ValueError("this model has no classifier")
        # argmax of logits equals argmax of sigmoid scores and keeps the first tie
        return np.argmax(self.logits(X), axis=1)

    def part_assignment(self, X) -> np.ndarray:
        """Serving part per row: routed index, lowest active index, or -1."""
        if self.routing == "argmax":
            return self.route(X)
        if self.routing == "sum":
            return np.full(np.asarray(X).shape[0], -1)
        member = self.membership(X)
        return np.where(member.any(axis=1), np.argmax(member, axis=1), -1)

    def predict(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        out = np.zeros((n, self.n_outputs))
        if self.routing == "argmax":
            routed = self.route(X)
            for k, sub in enumerate(self.subpatterns):
                rows = routed == k
                if rows.any():
                    out[rows] = sub.forward(X[rows])
            return out
        active = self.membership(X)
        for k, sub in enumerate(self.subpatterns):
            rows = active[:, k]
            if rows.any():
                out[rows] += sub.forward(X[rows])
        return out

    def active_parameter_count(self, X) -> np.ndarray:
        """Parameters touched by each row: classifier plus the subpatterns that serve it."""
        X = np.asarray(X, dtype=float)
        base = 0 if self.classifier is None else self.classifier.parameter_count()
        sizes = np.array([s.parameter_count() for s in self.subpatterns])
        if self.routing == "argmax":
            return base + sizes[self.route(X)]
        return base + self.membership(X) @ sizes

    def parameter_count(self) -> int:
        base = 0 if self.classifier is None else self.classifier.parameter_count()
        return base + sum(s.parameter_count() for s in self.subpatterns)

    def to_dict(self) -> dict:
        return {
            "format": "pcnn.model",
            "version": FORMAT_VERSION,
            "gamma": self.gamma,
            "routing": self.routing,
            "membership_rule": self.membership_rule,
            "classifier": None if self.classifier is None else self.classifier.to_dict(),
            "subpatterns": [s.to_dict() for s in self.subpatterns],
        }

    @classmethod
    def from_dict(cls, payload) -> "PcnnModel":
        if payload.get("format") != "pcnn.model":
            raise ValueError("not a serialized PCNN model")
        if payload.get("version") != FORMAT_VERSION:
            raise ValueError(f"unsupported model format version {payload.get('version')}")
        clf = payload["classifier"]
        return cls(
            [Mlp.from_dict(s) for s in payload["subpatterns"]],
            None if clf is None else Mlp.from_dict(clf),
            float(payload["gamma"]),
            payload["routing"],
            payload.get("membership_rule", "sigmoid_above_gamma"),
        )


def deep_zero_set_membership(model: PcnnModel, x) -> np.ndarray:
    return model.membership(np.atleast_2d(np.asarray(x, dtype=float)))[0]


def save_model(path, model: PcnnModel, metadata=None):
    payload = model.to_dict()
    if metadata:
        payload["metadata"] = metadata
    with open(path, "w") as fh:
        json.dump(payload, fh)


def load_model(path) -> PcnnModel:
    with open(path) as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: not a model file ({exc})") from None
    return PcnnModel.from_dict(payload)


def compute_labels(subpatterns, X, Y, loss="mae") -> np.ndarray:
    """Boolean (N, n) matrix marking, per row, every subpattern that attains the minimum loss."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    losses = np.stack([per_sample_loss(loss, s.forward(X), Y) for s in subpatterns])
    return labels_from_losses(losses)


def labels_from_losses(losses) -> np.ndarray:
    losses = np.asarray(losses, dtype=float)
    return losses <= losses.min(axis=0, keepdims=True)


def split_budget(budget, n_parts, depth=1) -> list:
    """Hidden widths per part when ``budget`` hidden neurons are shared by ``n_parts`` nets.

    Neurons are dealt evenly across parts, remainder to the first parts, and
    each part's share is spread over ``depth`` layers the same way.
    """
    if budget < n_parts * depth:
        raise ValueError(f"a budget of {budget} neurons cannot give {n_parts} nets {depth} layers each")
    shares = [budget // n_parts + (1 if k < budget % n_parts else 0) for k in range(n_parts)]
    return [tuple(s // depth + (1 if j < s % depth else 0) for j in range(depth)) for s in shares]


def _train_part(k, X, Y, dims, config, activation):
    start = time.perf_counter()
    try:
        result = train_ffnn(X, Y, dims, config, activation)
    except TrainingError as exc:
        raise TrainingError(f"subpattern {k}: {exc}") from exc
    return result.model, time.perf_counter() - start


def train_subpatterns(X, Y, parts, hidden, config, seed, activation="relu", n_jobs=1):
    """Fit one network per index set; returns (models, per-part seconds, wall seconds).

    Part k is trained with seed ``derive_seed(seed, STREAM_SUBPATTERN, k)`` in
    both the sequential and the concurrent path, so the two give identical
    parameters.
    """
    d, D = X.shape[1], Y.shape[1]
    jobs = []
    for k, idx in enumerate(parts):
        cfg = config.with_seed(derive_seed(seed, STREAM_SUBPATTERN, k))
        jobs.append((k, X[idx], Y[idx], [d, *hidden[k], D], cfg, activation))
    start = time.perf_counter()
    if n_jobs == 1 or len(jobs) == 1:
        results = [_train_part(*job) for job in jobs]
    else:
        results = Parallel(n_jobs=n_jobs, backend="loky")(delayed(_train_part)(*job) for job in jobs)
    wall = time.perf_counter() - start
    models = [m for m, _ in results]
    times = [t for _, t in results]
    return models, times, wall


def train_classifier(X, labels, hidden, config, seed, activation="relu") -> Mlp:
    """Fit one sigmoid output per part to the (n, N) label matrix."""
    d, N = X.shape[1], labels.shape[1]
    dims = [d, *hidden, N]
    if np.all(labels == labels[:1]):
        # constant labels: pin each logit at the target level, no fitting needed
        model = init_mlp(dims, activation, make_rng(seed))
        for w, b in zip(model.weights, model.biases):
            w[...] = 0.0
            b[...] = 0.0
        model.biases[-1][...] = LOGIT_TARGET * (2.0 * labels[0] - 1.0)
        return model
    cfg = config.with_seed(seed)
    if cfg.loss != "binary_cross_entropy":
        cfg = replace(cfg, loss="binary_cross_entropy")
    return train_ffnn(X, labels.astype(float), dims, cfg, activation).model


def _default_subpattern_config():
    return TrainConfig(loss="mae")


def _default_classifier_config():
    return TrainConfig(loss="binary_cross_entropy")


class PCNNRegressor(BaseEstimator, RegressorMixin):
    """Piecewise-continuous network trained by the decoupled two-step procedure.

    Parameters
    ----------
    subpattern_hidden : tuple of int
        Hidden widths of every subpattern (ignored when ``neuron_budget`` is set).
    classifier_hidden : tuple of int
        Hidden widths of the classifier; ``()`` gives a logistic classifier.
    activation : str
        Hidden activation of all networks.
    subpattern_config, classifier_config : TrainConfig
        Training settings. Their ``seed`` fields are replaced by seeds derived
        from ``random_state``; the classifier always uses binary cross-entropy.
    q : float in (0, 1]
        Remainder fraction at which the partition stops growing balls.
    n_parts : int or None
        None keeps whatever part count the partition produces. An integer
        steers ``q`` toward that count (best effort).
    gamma : float in (0, 1]
        Membership threshold on the classifier's sigmoid scores.
    routing : {'argmax', 'paper_literal'}
    membership_rule : {'sigmoid_above_gamma', 'output_at_most_half'}
    neuron_budget : int or None
        Total hidden neurons shared evenly by the subpatterns, spread over
        ``len(subpattern_hidden)`` layers each.
    n_jobs : int
        Concurrent subpattern trainings; 1 trains them sequentially.
    random_state : int
    """

    def __init__(self, subpattern_hidden=(32,), classifier_hidden=(32,), activation="relu",
                 subpattern_config=None, classifier_config=None, q=0.1, n_parts=None,
                 gamma=0.5, routing="argmax", membership_rule="sigmoid_above_gamma",
                 neuron_budget=None, label_loss=None, n_jobs=1, random_state=0):
        self.subpattern_hidden = subpattern_hidden
        self.classifier_hidden = classifier_hidden
        self.activation = activation
        self.subpattern_config = subpattern_config
        self.classifier_config = classifier_config
        self.q = q
        self.n_parts = n_parts
        self.gamma = gamma
        self.routing = routing
        self.membership_rule = membership_rule
        self.neuron_budget = neuron_budget
        self.label_loss = label_loss
        self.n_jobs = n_jobs
        self.random_state = random_state

    def _seed(self):
        return 0 if self.random_state is None else int(self.random_state)

    def _sub_config(self):
        return self.subpattern_config or _default_subpattern_config()

    def _hidden_for(self, n_parts):
        if self.neuron_budget is None:
            return [tuple(self.subpattern_hidden)] * n_parts
        return split_budget(int(self.neuron_budget), n_parts, max(1, len(self.subpattern_hidden)))

    def fit(self, X, y, parts=None):
        """Fit on ``(X, y)``.

        ``parts`` optionally gives a part id per row (an expert partition);
        otherwise the randomized ball partition is used.
        """
        if self.routing not in ("argmax", "paper_literal"):
            raise ValueError(f"routing must be 'argmax' or 'paper_literal', got {self.routing!r}")
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_1d = np.asarray(y).ndim == 1
        Y = y[:, None] if y.ndim == 1 else y
        seed = self._seed()
        self.n_features_in_ = X.shape[1]

        start = time.perf_counter()
        if parts is not None:
            parts = np.asarray(parts, dtype=int)
            if parts.shape != (X.shape[0],):
                raise ValueError("parts must give one id per row")
            self.partition_ = None
            self.parts_ = [np.flatnonzero(parts == k) for k in np.unique(parts)]
        else:
            self.partition_, _ = partition_with_target(
                X, self.q, derive_seed(seed, STREAM_PARTITION), self.n_parts)
            self.parts_ = self.partition_.parts
        self.partition_time_ = time.perf_counter() - start

        hidden = self._hidden_for(len(self.parts_))
        subpatterns, self.subpattern_times_, self.subpattern_wall_time_ = train_subpatterns(
            X, Y, self.parts_, hidden, self._sub_config(), seed, self.activation, self.n_jobs)
        self.subpattern_jobs_ = self.n_jobs
        self._fit_routing(X, Y, subpatterns)
        return self

    def _fit_routing(self, X, Y, subpatterns):
        seed = self._seed()
        start = time.perf_counter()
        self.labels_ = compute_labels(subpatterns, X, Y, self.label_loss or self._sub_config().loss).T
        self.label_time_ = time.perf_counter() - start

        start = time.perf_counter()
        classifier = train_classifier(
            X, self.labels_, tuple(self.classifier_hidden),
            self.classifier_config or _default_classifier_config(),
            derive_seed(seed, STREAM_CLASSIFIER), self.activation)
        self.classifier_time_ = time.perf_counter() - start
        self.model_ = PcnnModel(subpatterns, classifier, self.gamma, self.routing,
                                self.membership_rule)

    def refit_classifier(self, X, y, classifier_hidden):
        """Copy of this fitted model with a new classifier on the same subpatterns."""
        check_is_fitted(self, "model_")
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        Y = y[:, None] if y.ndim == 1 else y
        other = self.__class__(**{**self.get_params(), "classifier_hidden": classifier_hidden})
        for attr in ("n_features_in_", "partition_", "parts_", "partition_time_",
                     "subpattern_times_", "subpattern_wall_time_", "subpattern_jobs_", "_y_1d"):
            setattr(other, attr, getattr(self, attr))
        other._fit_routing(X, Y, self.model_.subpatterns)
        return other

    def time_subpatterns(self, X, y, n_jobs):
        """Retrain the subpatterns with ``n_jobs`` workers; returns wall seconds.

        Raises AssertionError if the retrained parameters differ from the
        fitted ones, since both paths must agree bit for bit.
        """
        check_is_fitted(self, "model_")
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        Y = y[:, None] if y.ndim == 1 else y
        models, times, wall = train_subpatterns(
            X, Y, self.parts_, self._hidden_for(len(self.parts_)), self._sub_config(),
            self._seed(), self.activation, n_jobs)
        for a, b in zip(models, self.model_.subpatterns):
            if not np.array_equal(a.flat_parameters(), b.flat_parameters()):
                raise AssertionError("concurrent subpattern training diverged from sequential")
        return wall, times

    @property
    def fit_time_(self):
        return (self.partition_time_ + self.subpattern_wall_time_ + self.label_time_
                + self.classifier_time_)

    def _check(self, X):
        check_is_fitted(self, "model_")
        return check_array(X)

    def predict(self, X):
        out = self.model_.predict(self._check(X))
        return out[:, 0] if self._y_1d else out

    def predict_parts(self, X):
        return self.model_.part_assignment(self._check(X))

    def decision_function(self, X):
        return self.model_.logits(self._check(X))

    def membership(self, X):
        return self.model_.membership(self._check(X))

    def active_parameter_count(self, X):
        return self.model_.active_parameter_count(self._check(X))

    @property
    def n_parts_(self):
        check_is_fitted(self, "model_")
        return self.model_.n_parts


def train_pcnn(X, y, subpattern_config=None, classifier_config=None, q=0.1, n_parts=None,
               random_state=0, **kwargs) -> PcnnModel:
    """Functional entry point: fit a PCNNRegressor and return its PcnnModel."""
    est = PCNNRegressor(subpattern_config=subpattern_config, classifier_config=classifier_config,
                        q=q, n_parts=n_parts, random_state=random_state, **kwargs)
    return est.fit(X, y).model_
