"""Distances between sets and between piecewise functions.

Compact sets are stood in for by finite point clouds, and sup-norms are taken
over a finite sample, so every value here is the finite-sample version of the
continuous quantity (a lower bound for the sup-norm).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

_CHUNK = 2048


def as_cloud(points) -> np.ndarray:
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2 or pts.shape[0] == 0:
        raise ValueError("a point cloud needs at least one point")
    if not np.all(np.isfinite(pts)):
        raise ValueError("point cloud contains non-finite coordinates")
    return pts


def _directed(a, b) -> float:
    """max over a of the distance to the nearest point of b."""
    worst = 0.0
    for start in range(0, a.shape[0], _CHUNK):
        d = cdist(a[start:start + _CHUNK], b)
        worst = max(worst, float(d.min(axis=1).max()))
    return worst


def hausdorff(a, b) -> float:
    a = as_cloud(a)
    b = as_cloud(b)
    if a.shape[1] != b.shape[1]:
        raise ValueError("point clouds live in different dimensions")
    return max(_directed(a, b), _directed(b, a))


def _evaluate(f, sample):
    out = np.asarray(f(sample), dtype=float)
    if out.ndim == 1:
        out = out[:, None]
    if out.shape[0] != sample.shape[0]:
        raise ValueError("function returned a different number of rows than the sample")
    return out


def sup_norm_diff(f, g, sample) -> float:
    """max over the sample of ``||f(x) - g(x)||``.

    ``f`` and ``g`` take an ``(n, d)`` array and return ``(n, D)`` or ``(n,)``.
    """
    sample = as_cloud(sample)
    diff = _evaluate(f, sample) - _evaluate(g, sample)
    return float(np.sqrt((diff ** 2).sum(axis=1)).max())


@dataclass
class Piece:
    """One (function, part) pair. ``radius`` thickens the part into balls."""

    function: Callable
    part: np.ndarray
    radius: float | None = None

    def __post_init__(self):
        self.part = as_cloud(self.part)

    def contains_many(self, X) -> np.ndarray:
        X = as_cloud(X)
        out = np.zeros(X.shape[0], dtype=bool)
        for start in range(0, X.shape[0], _CHUNK):
            d = cdist(X[start:start + _CHUNK], self.part).min(axis=1)
            if self.radius is None:
                out[start:start + _CHUNK] = d == 0.0
            else:
                out[start:start + _CHUNK] = d <= self.radius
        return out


@dataclass
class PcRepresentation:
    """Ordered (function, part) pairs describing a piecewise function."""

    pieces: list = field(default_factory=list)

    def __post_init__(self):
        self.pieces = [p if isinstance(p, Piece) else Piece(*p) for p in self.pieces]
        if not self.pieces:
            raise ValueError("a representation needs at least one piece")

    def __len__(self):
        return len(self.pieces)

    @classmethod
    def from_pairs(cls, pairs: Sequence, radius=None) -> "PcRepresentation":
        return cls([Piece(f, part, radius) for f, part in pairs])


def d_step1(F: PcRepresentation, G: PcRepresentation, sample) -> float:
    """Max over matched pieces of max(sup-norm gap, Hausdorff gap); inf on length mismatch."""
    if len(F) != len(G):
        return math.inf
    sample = as_cloud(sample)
    worst = 0.0
    for p, r in zip(F.pieces, G.pieces):
        worst = max(worst, sup_norm_diff(p.function, r.function, sample),
                    hausdorff(p.part, r.part))
    return worst


def dpc_upper_bound(target: PcRepresentation, candidate: PcRepresentation, sample) -> float:
    """Sum of sup-norm gaps plus sum of Hausdorff gaps over matched pieces."""
    if len(target) != len(candidate):
        raise ValueError(
            f"the decoupled bound needs matched part counts, got {len(target)} and {len(candidate)}")
    sample = as_cloud(sample)
    sup_terms = sum(sup_norm_diff(p.function, r.function, sample)
                    for p, r in zip(target.pieces, candidate.pieces))
    set_terms = sum(hausdorff(p.part, r.part) for p, r in zip(target.pieces, candidate.pieces))
    return sup_terms + set_terms


def realize(rep: PcRepresentation, X) -> np.ndarray:
    """Sum of ``f_n(x)`` over every piece whose part contains ``x``; zero when none does."""
    X = as_cloud(X)
    total = None
    for piece in rep.pieces:
        values = _evaluate(piece.function, X)
        if total is None:
            total = np.zeros_like(values)
        total += values * piece.contains_many(X)[:, None]
    return total


def read_cloud_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if len(rows) < 2:
        raise ValueError(f"{path}: no points")
    try:
        pts = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: non-numeric coordinate ({exc})") from None
    return as_cloud(pts)


def write_cloud_csv(path, points):
    pts = as_cloud(points)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{j}" for j in range(pts.shape[1])])
        for row in pts:
            writer.writerow([repr(float(v)) for v in row])
