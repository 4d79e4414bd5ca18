"""Seeded random streams, samplers and the ridge solver shared by every module.

All randomness goes through :class:`numpy.random.Generator` backed by PCG64,
which numpy documents as stable across platforms and releases. Seeds for
independent sub-tasks are derived with :func:`derive_seed`, which keys a
:class:`numpy.random.SeedSequence` by a spawn path, so a stream depends only
on ``(seed, path)`` and never on the order in which other streams were used.
"""
from __future__ import annotations

import numpy as np
import scipy.linalg

Rng = np.random.Generator

# Stable stream identifiers for derive_seed paths.
STREAM_PARTITION = 0
STREAM_SUBPATTERN = 1
STREAM_CLASSIFIER = 2
STREAM_DATA = 3
STREAM_SPLIT = 4
STREAM_NOISE = 5


class SingularSystemError(np.linalg.LinAlgError):
    """Raised when an unregularized normal-equation system is rank deficient."""


def make_rng(seed: int | None) -> Rng:
    """PCG64 generator for ``seed`` (fresh OS entropy when ``seed`` is None)."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(seed: int, *path: int) -> int:
    """Derive a 64-bit child seed from ``seed`` and an integer spawn path.

    ``derive_seed(s, STREAM_SUBPATTERN, 3)`` is the seed for the fourth
    subpattern of a run seeded with ``s``.
    """
    seq = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


def as_rng(random_state) -> Rng:
    if isinstance(random_state, np.random.Generator):
        return random_state
    return make_rng(random_state)


def sample_uniform(rng: Rng, lo: float, hi: float) -> float:
    if not lo < hi:
        raise ValueError(f"sample_uniform needs lo < hi, got lo={lo}, hi={hi}")
    return float(rng.uniform(lo, hi))


def sample_gaussian(rng: Rng, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("sample_gaussian needs n >= 1")
    return rng.standard_normal(n)


def sample_student_t(rng: Rng, nu: float, n: int) -> np.ndarray:
    """Student-t(nu) draws as ``Z / sqrt(V / nu)`` with Z normal, V chi-square(nu)."""
    if not nu > 0:
        raise ValueError(f"degrees of freedom must be positive, got {nu}")
    if n < 1:
        raise ValueError("sample_student_t needs n >= 1")
    z = rng.standard_normal(n)
    v = rng.chisquare(nu, n)
    return z / np.sqrt(v / nu)


def ridge_solve(features, targets, lam: float = 0.0) -> np.ndarray:
    """Minimize ``||features @ W - targets||^2 + lam * ||W||^2`` over W.

    Solves the regularized normal equations by Cholesky, falling back to an
    LU solve with partial pivoting when the factorization fails. With
    ``lam == 0`` a rank-deficient Gram matrix raises SingularSystemError.
    """
    features = np.asarray(features, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if features.ndim != 2:
        raise ValueError("features must be a 2-D array")
    squeeze = targets.ndim == 1
    if squeeze:
        targets = targets[:, None]
    if features.shape[0] != targets.shape[0]:
        raise ValueError(
            f"row mismatch: features has {features.shape[0]}, targets has {targets.shape[0]}"
        )
    if lam < 0:
        raise ValueError("ridge penalty must be nonnegative")

    gram = features.T @ features
    rhs = features.T @ targets
    p = gram.shape[0]
    if lam == 0:
        rank = np.linalg.matrix_rank(gram)
        if rank < p:
            raise SingularSystemError(f"Gram matrix has rank {rank} < {p} and lambda=0")
    gram = gram + lam * np.eye(p)
    try:
        factor = scipy.linalg.cho_factor(gram, lower=True, check_finite=False)
        weights = scipy.linalg.cho_solve(factor, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        weights = scipy.linalg.solve(gram, rhs, assume_a="gen")
    return weights[:, 0] if squeeze else weights


def sigmoid(x):
    """Logistic function, evaluated without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out if out.ndim else float(out)
