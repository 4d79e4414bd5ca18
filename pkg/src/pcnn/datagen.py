"""Synthetic piecewise regression data and CSV ingestion.

The synthetic target switches between two closed-form subpatterns of a scalar
projection ``u = A @ x``::

    f(x) = f1(u)  if (u mod r) <  r / 2
           f2(u)  if (u mod r) >= r / 2

and observations are ``y = f(x) + sigma * t_nu`` with Student-t noise.
"""
from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass, fields, replace

import numpy as np

from .numerics import (STREAM_DATA, STREAM_NOISE, STREAM_SPLIT, derive_seed, make_rng,
                       sample_gaussian, sample_student_t)

SUBPATTERNS = {
    "exp_cos": lambda u: 1.0 + np.exp(u) * np.cos(u),
    "neg_quad_cos": lambda u: -1.0 - u ** 2 * np.cos(u),
    "sin10": lambda u: 1.0 + np.sin(10.0 * u),
    "neg_shift_quad": lambda u: -2.0 - u ** 2,
    "linear": lambda u: u,
    "square": lambda u: u ** 2,
    "linear_shift2": lambda u: u + 2.0,
}


class DataError(ValueError):
    """Malformed or inconsistent input data."""


@dataclass
class Dataset:
    inputs: np.ndarray
    targets: np.ndarray
    part_labels: np.ndarray | None = None
    is_test: np.ndarray | None = None

    def __post_init__(self):
        self.inputs = np.asarray(self.inputs, dtype=float)
        self.targets = np.asarray(self.targets, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs[:, None]
        if self.targets.ndim == 1:
            self.targets = self.targets[:, None]
        n = self.inputs.shape[0]
        if self.targets.shape[0] != n:
            raise DataError(f"{n} input rows but {self.targets.shape[0]} target rows")
        if self.part_labels is not None:
            self.part_labels = np.asarray(self.part_labels, dtype=int)
            if self.part_labels.shape != (n,):
                raise DataError("part_labels must have one entry per row")
            if n and self.part_labels.min() < 0:
                raise DataError("part labels must be nonnegative")
        if self.is_test is None:
            self.is_test = np.zeros(n, dtype=bool)
        else:
            self.is_test = np.asarray(self.is_test, dtype=bool)
            if self.is_test.shape != (n,):
                raise DataError("split tags must have one entry per row")

    def __len__(self):
        return self.inputs.shape[0]

    @property
    def n_features(self):
        return self.inputs.shape[1]

    def subset(self, mask) -> "Dataset":
        return Dataset(
            self.inputs[mask], self.targets[mask],
            None if self.part_labels is None else self.part_labels[mask],
            self.is_test[mask],
        )

    def train(self) -> "Dataset":
        return self.subset(~self.is_test)

    def test(self) -> "Dataset":
        return self.subset(self.is_test)

    def with_split(self, split, seed=0) -> "Dataset":
        out = replace(self)
        out.is_test = split_mask(len(self), split, seed, self.is_test)
        return out


def split_mask(n, split, seed=0, existing=None) -> np.ndarray:
    """Test-row mask for a split spec.

    ``None``/``"none"``: no test rows (or keep ``existing``). ``"last:K"``:
    the final K rows. ``"fraction:F"``: a seeded random fraction F.
    """
    if split is None or split == "none":
        return np.zeros(n, dtype=bool) if existing is None else np.asarray(existing, bool)
    kind, _, arg = str(split).partition(":")
    if kind == "last":
        k = int(arg)
        if not 0 <= k <= n:
            raise DataError(f"cannot hold out the last {k} of {n} rows")
        mask = np.zeros(n, dtype=bool)
        mask[n - k:] = True
        return mask
    if kind == "fraction":
        frac = float(arg)
        if not 0 <= frac < 1:
            raise DataError(f"test fraction must lie in [0, 1), got {frac}")
        rng = make_rng(derive_seed(seed, STREAM_SPLIT))
        k = int(round(frac * n))
        mask = np.zeros(n, dtype=bool)
        mask[rng.permutation(n)[:k]] = True
        return mask
    raise DataError(f"unknown split spec {split!r}")


@dataclass(frozen=True)
class SyntheticSpec:
    d: int = 1
    n: int = 1000
    sigma: float = 0.01
    nu: float = 30.0
    r: float = 0.25
    f1: str = "exp_cos"
    f2: str = "neg_quad_cos"
    projection: str = "gaussian"   # 'gaussian' draws A; 'ones' uses A = (1, ..., 1)
    seed: int = 0

    def __post_init__(self):
        if self.d < 1 or self.n < 1:
            raise ValueError("d and n must be >= 1")
        if not self.r > 0:
            raise ValueError(f"r must be positive, got {self.r}")
        if self.sigma < 0:
            raise ValueError("sigma must be nonnegative")
        if not self.nu > 0:
            raise ValueError("nu must be positive")
        for name in (self.f1, self.f2):
            if name not in SUBPATTERNS:
                raise ValueError(f"unknown subpattern {name!r}; choose from {sorted(SUBPATTERNS)}")
        if self.projection not in ("gaussian", "ones"):
            raise ValueError(f"unknown projection {self.projection!r}")

    @classmethod
    def from_mapping(cls, values: dict) -> "SyntheticSpec":
        kinds = {f.name: f.type for f in fields(cls)}
        kwargs = {}
        for key, raw in values.items():
            if key not in kinds:
                continue
            kind = kinds[key]
            if kind in ("int", int):
                kwargs[key] = int(raw)
            elif kind in ("float", float):
                kwargs[key] = float(raw)
            else:
                kwargs[key] = str(raw)
        return cls(**kwargs)

    def as_dict(self):
        return asdict(self)


def projection_matrix(spec: SyntheticSpec, rng=None) -> np.ndarray:
    if spec.projection == "ones":
        return np.ones(spec.d)
    rng = make_rng(derive_seed(spec.seed, STREAM_DATA, 0)) if rng is None else rng
    return sample_gaussian(rng, spec.d)


def synth_values(spec: SyntheticSpec, A, X):
    """Noiseless targets and true part ids for every row of ``X``."""
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    u = X @ np.asarray(A, dtype=float).reshape(-1)
    phase = np.mod(u, spec.r)  # nonnegative representative for r > 0
    part = (phase >= 0.5 * spec.r).astype(int)
    values = np.where(part == 0, SUBPATTERNS[spec.f1](u), SUBPATTERNS[spec.f2](u))
    return values, part


def synth_target(spec: SyntheticSpec, A, x):
    values, part = synth_values(spec, A, np.atleast_2d(np.asarray(x, dtype=float)))
    return float(values[0]), int(part[0])


def generate(spec: SyntheticSpec, rng=None) -> Dataset:
    """Draw ``spec.n`` labelled samples; deterministic in ``spec.seed``.

    Inputs, the projection and the noise use separate derived streams, so the
    noise is independent of the inputs and ``sigma = 0`` only removes it.
    ``rng``, when given, replaces the input stream.
    """
    x_rng = make_rng(derive_seed(spec.seed, STREAM_DATA, 1)) if rng is None else rng
    X = x_rng.uniform(0.0, 1.0, size=(spec.n, spec.d))
    A = projection_matrix(spec)
    values, part = synth_values(spec, A, X)
    y = values
    if spec.sigma > 0:
        noise = sample_student_t(make_rng(derive_seed(spec.seed, STREAM_NOISE)), spec.nu, spec.n)
        y = values + spec.sigma * noise
    return Dataset(X, y[:, None], part)


def read_config(path) -> dict:
    """key=value lines; blank lines and '#' comments are skipped."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            out[key.strip().replace("-", "_")] = value.strip()
    return out


def _parse_cols(spec, header, prefix):
    if spec is None:
        cols = [h for h in header if h.startswith(prefix)]
        if not cols:
            raise DataError(f"no columns starting with {prefix!r} in header")
        return cols
    cols = [c.strip() for c in spec.split(",")] if isinstance(spec, str) else list(spec)
    missing = [c for c in cols if c not in header]
    if missing:
        raise DataError(f"missing column(s): {', '.join(missing)}")
    return cols


def load_csv(path, input_cols=None, target_cols=None, part_col=None, split=None,
             seed=0) -> Dataset:
    """Read a headed CSV into a Dataset.

    Inputs default to every column whose name starts with ``x`` and targets to
    those starting with ``y``. A ``part`` column is used when present unless
    ``part_col`` names another one. ``split`` is a :func:`split_mask` spec, or
    ``"column:NAME"`` to read train/test tags from a column.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{path}: no data rows")
    index = {h: j for j, h in enumerate(header)}
    inputs = _parse_cols(input_cols, header, "x")
    targets = _parse_cols(target_cols, header, "y")
    if part_col is None and "part" in index:
        part_col = "part"
    if part_col is not None and part_col not in index:
        raise DataError(f"missing column(s): {part_col}")
    split_col = None
    if split is not None and str(split).startswith("column:"):
        split_col = str(split).split(":", 1)[1]
        if split_col not in index:
            raise DataError(f"missing column(s): {split_col}")

    def numeric(rownum, row, col):
        j = index[col]
        try:
            value = float(row[j])
        except (ValueError, IndexError):
            cell = row[j] if j < len(row) else ""
            raise DataError(f"{path}: row {rownum}, column {col!r}: non-numeric value {cell!r}") from None
        if not math.isfinite(value):
            raise DataError(f"{path}: row {rownum}, column {col!r}: non-finite value")
        return value

    X = np.array([[numeric(i, r, c) for c in inputs] for i, r in enumerate(rows, 1)])
    Y = np.array([[numeric(i, r, c) for c in targets] for i, r in enumerate(rows, 1)])
    parts = None
    if part_col is not None:
        raw = [numeric(i, r, part_col) for i, r in enumerate(rows, 1)]
        if any(v != int(v) or v < 0 for v in raw):
            raise DataError(f"{path}: column {part_col!r} must hold nonnegative integers")
        parts = np.array(raw, dtype=int)
    if split_col is not None:
        is_test = np.array([r[index[split_col]].strip().lower() == "test" for r in rows])
    else:
        is_test = split_mask(len(rows), split, seed)
    return Dataset(X, Y, parts, is_test)


def write_csv(path, data: Dataset, include_split=False):
    d = data.inputs.shape[1]
    D = data.targets.shape[1]
    header = [f"x{j}" for j in range(d)] + [f"y{j}" for j in range(D)]
    if data.part_labels is not None:
        header.append("part")
    if include_split:
        header.append("split")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for i in range(len(data)):
            row = [repr(float(v)) for v in data.inputs[i]]
            row += [repr(float(v)) for v in data.targets[i]]
            if data.part_labels is not None:
                row.append(int(data.part_labels[i]))
            if include_split:
                row.append("test" if data.is_test[i] else "train")
            writer.writerow(row)
