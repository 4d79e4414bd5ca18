"""Randomized ball-growing partition of a training set.

A radius ``alpha * mean_pairwise_distance`` with ``alpha ~ U[1/4, 1/2)`` is
drawn once per run. The points are shuffled, and the first remaining point
repeatedly claims every remaining point strictly inside that radius. Once the
remaining fraction drops to ``q`` or below, whatever is left becomes the last
part. Each data part is extended to a geometric part: the union of closed
balls of radius ``half_min_distance`` around its points.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .numerics import as_rng, make_rng, sample_uniform

ALPHA_LOW = 0.25
ALPHA_HIGH = 0.5
_CHUNK = 1024


class DegeneratePartitionError(ValueError):
    """The data has fewer than two distinct points."""


def _pair_stats(points):
    """(min, sum, count) of Euclidean distances over ordered pairs of distinct points."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    dmin = math.inf
    total = 0.0
    count = 0
    for start in range(0, n, _CHUNK):
        block = cdist(points[start:start + _CHUNK], points)
        nonzero = block > 0
        if nonzero.any():
            dmin = min(dmin, float(block[nonzero].min()))
            total += float(block.sum())
            count += int(nonzero.sum())
    if count == 0:
        raise DegeneratePartitionError("need at least two distinct points")
    return dmin, total, count


def delta_min(points) -> float:
    """Half the smallest distance between two distinct points."""
    return 0.5 * _pair_stats(points)[0]


def delta_bar(points) -> float:
    """Mean distance over ordered pairs of distinct points."""
    _, total, count = _pair_stats(points)
    return total / count


@dataclass
class GeometricPart:
    """Union of closed balls of radius ``ball_radius`` around ``anchor_points``."""

    anchor_points: np.ndarray
    ball_radius: float

    def contains(self, z) -> bool:
        return bool(self.contains_many(np.atleast_2d(np.asarray(z, dtype=float)))[0])

    def contains_many(self, Z) -> np.ndarray:
        Z = np.asarray(Z, dtype=float)
        if Z.ndim == 1:
            Z = Z[:, None]
        if Z.shape[1] != self.anchor_points.shape[1]:
            raise ValueError("dimension mismatch between probe and anchors")
        out = np.zeros(Z.shape[0], dtype=bool)
        for start in range(0, Z.shape[0], _CHUNK):
            d = cdist(Z[start:start + _CHUNK], self.anchor_points)
            out[start:start + _CHUNK] = d.min(axis=1) <= self.ball_radius
        return out


def part_membership(part: GeometricPart, z) -> bool:
    return part.contains(z)


@dataclass
class DataPartition:
    parts: list            # list of index arrays into the dataset
    order: np.ndarray      # shuffle used to pick centers
    alpha: float
    delta_min: float
    delta_bar: float
    q: float
    n_iterations: int

    @property
    def n_parts(self) -> int:
        return len(self.parts)

    def labels(self, n_rows=None) -> np.ndarray:
        n_rows = sum(len(p) for p in self.parts) if n_rows is None else n_rows
        out = np.full(n_rows, -1, dtype=int)
        for k, idx in enumerate(self.parts):
            out[idx] = k
        return out

    def geometric_parts(self, points) -> list:
        points = np.asarray(points, dtype=float)
        if points.ndim == 1:
            points = points[:, None]
        return [GeometricPart(points[idx], self.delta_min) for idx in self.parts]


def get_partition(points, q, rng, alpha=None, order=None, stats=None):
    """Partition the rows of ``points``; returns ``(DataPartition, [GeometricPart])``.

    ``alpha`` and ``order`` override the random draws (used to replay a run).
    ``stats`` may carry precomputed ``(delta_min, delta_bar)``.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    if not 0 < q <= 1:
        raise ValueError(f"q must lie in (0, 1], got {q}")
    n = points.shape[0]
    if stats is None:
        dmin, total, count = _pair_stats(points)
        stats = (0.5 * dmin, total / count)
    d_min, d_bar = stats

    rng = as_rng(rng)
    if alpha is None:
        alpha = sample_uniform(rng, ALPHA_LOW, ALPHA_HIGH)
    order = rng.permutation(n) if order is None else np.asarray(order, dtype=int)
    radius = alpha * d_bar

    remaining = order
    parts = []
    iterations = 0
    while remaining.size:
        iterations += 1
        center = points[remaining[0]]
        dist = np.sqrt(np.sum((points[remaining] - center) ** 2, axis=1))
        inside = dist < radius
        inside[0] = True
        parts.append(np.sort(remaining[inside]))
        remaining = remaining[~inside]
        if remaining.size / n <= q:
            if remaining.size:
                parts.append(np.sort(remaining))
            break

    partition = DataPartition(parts, order, float(alpha), float(d_min), float(d_bar),
                              float(q), iterations)
    return partition, partition.geometric_parts(points)


def partition_with_target(points, q, seed, n_parts=None, max_tries=24):
    """Run get_partition, steering ``q`` toward a requested part count.

    With ``n_parts=None`` a single run is returned. Otherwise ``q`` is bisected
    on a log scale across seeded attempts and the run whose part count is
    closest to ``n_parts`` is kept (ties go to the earliest attempt). This is
    best effort: some counts are unreachable for a given dataset.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    dmin, total, count = _pair_stats(points)
    stats = (0.5 * dmin, total / count)
    rng = make_rng(seed)
    if n_parts is None:
        return get_partition(points, q, rng, stats=stats)
    if n_parts == 1:
        part = DataPartition([np.arange(points.shape[0])], np.arange(points.shape[0]),
                             float("nan"), stats[0], stats[1], 1.0, 0)
        return part, part.geometric_parts(points)

    lo, hi = 1e-6, 1.0
    trial_q = q
    best = None
    for _ in range(max_tries):
        result = get_partition(points, trial_q, rng, stats=stats)
        got = result[0].n_parts
        if best is None or abs(got - n_parts) < abs(best[0].n_parts - n_parts):
            best = result
        if got == n_parts:
            break
        if got > n_parts:
            lo = trial_q
        else:
            hi = trial_q
        trial_q = math.sqrt(lo * hi)
    return best


def same_part_probability(points, i1, i2, trials, q, rng) -> float:
    """Monte-Carlo frequency with which rows ``i1`` and ``i2`` share a part."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if i1 == i2:
        return 1.0
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    dmin, total, count = _pair_stats(points)
    stats = (0.5 * dmin, total / count)
    rng = as_rng(rng)
    hits = 0
    for _ in range(trials):
        partition, _ = get_partition(points, q, rng, stats=stats)
        labels = partition.labels(points.shape[0])
        hits += labels[i1] == labels[i2]
    return hits / trials


def separation_bound(points, i1, i2) -> float:
    """Lower bound ``1 - 8 (ln n + 1) ||x1 - x2|| / mean_distance``, clipped at 0."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    gap = float(np.linalg.norm(points[i1] - points[i2]))
    return max(0.0, 1.0 - 8.0 * (math.log(n) + 1.0) * gap / delta_bar(points))


def write_partition_csv(path, partition: DataPartition, n_rows=None):
    labels = partition.labels(n_rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["row_index", "part_id"])
        for i, k in enumerate(labels):
            writer.writerow([i, int(k)])


def write_geometric_part_csv(path, part: GeometricPart):
    """One anchor per row; the first line records the ball radius."""
    d = part.anchor_points.shape[1]
    with open(path, "w", newline="") as fh:
        fh.write(f"# radius={part.ball_radius!r}\n")
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(d)])
        for row in part.anchor_points:
            writer.writerow([repr(float(v)) for v in row])


def read_geometric_part_csv(path) -> GeometricPart:
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        if not first.startswith("# radius="):
            raise ValueError(f"{path}: missing radius header")
        radius = float(first.split("=", 1)[1])
        rows = list(csv.reader(fh))
    anchors = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    return GeometricPart(anchors, radius)


class BallPartitioner(ClusterMixin, BaseEstimator):
    """Estimator wrapper around :func:`get_partition`.

    After ``fit``, ``labels_`` holds the part id of each training row and
    ``parts_`` the geometric parts. ``predict`` assigns new points to the
    first geometric part containing them, or -1 when none does.
    """

    def __init__(self, q=0.1, n_parts=None, random_state=0):
        self.q = q
        self.n_parts = n_parts
        self.random_state = random_state

    def fit(self, X, y=None):
        X = check_array(X)
        self.partition_, self.parts_ = partition_with_target(
            X, self.q, self.random_state, self.n_parts)
        self.labels_ = self.partition_.labels(X.shape[0])
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self, "parts_")
        X = check_array(X)
        out = np.full(X.shape[0], -1, dtype=int)
        for k in range(len(self.parts_) - 1, -1, -1):
            out[self.parts_[k].contains_many(X)] = k
        return out
