import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pcnn.geometry import (PcRepresentation, Piece, d_step1, dpc_upper_bound, hausdorff,
                           read_cloud_csv, realize, sup_norm_diff, write_cloud_csv)
from pcnn.numerics import make_rng


def ident(x):
    return x[:, :1]


def shift(c):
    return lambda x: x[:, :1] + c


def brute_hausdorff(a, b):
    d = np.sqrt(((a[:, None] - b[None]) ** 2).sum(-1))
    return max(d.min(1).max(), d.min(0).max())


def test_hausdorff_examples():
    a = np.array([[0.0], [1.0]])
    assert hausdorff(a, a) == 0.0
    assert hausdorff(a, np.array([[0.0], [3.0]])) == 2.0
    assert hausdorff([[0.0]], [[3.0]]) == 3.0


def test_hausdorff_rejects_empty():
    with pytest.raises(ValueError):
        hausdorff(np.zeros((0, 1)), np.zeros((1, 1)))


def test_sup_norm_examples():
    s = np.array([[0.0], [0.5], [1.0]])
    assert sup_norm_diff(ident, ident, s) == 0.0
    assert sup_norm_diff(ident, shift(-0.3), s) == pytest.approx(0.3)
    assert sup_norm_diff(lambda x: x ** 2, ident, s) == 0.25


def test_d_step1_examples():
    s = np.array([[0.0], [1.0]])
    F = PcRepresentation.from_pairs([(ident, s)])
    G = PcRepresentation.from_pairs([(shift(1.0), s)])
    assert d_step1(F, F, s) == 0.0
    assert d_step1(F, G, s) == 1.0
    two = PcRepresentation.from_pairs([(ident, s), (ident, s)])
    three = PcRepresentation.from_pairs([(ident, s)] * 3)
    assert d_step1(two, three, s) == math.inf


def test_dpc_bound_examples():
    s = np.linspace(0, 1, 11)[:, None]
    left, right = s[:6], s[5:]
    T = PcRepresentation.from_pairs([(ident, left), (shift(2.0), right)])
    assert dpc_upper_bound(T, T, s) == 0.0
    off = PcRepresentation.from_pairs([(ident, left), (shift(2.5), right)])
    assert dpc_upper_bound(T, off, s) == pytest.approx(0.5)
    moved = PcRepresentation.from_pairs([(ident, left), (shift(2.0), right + 0.2)])
    assert dpc_upper_bound(T, moved, s) == pytest.approx(0.2)
    with pytest.raises(ValueError):
        dpc_upper_bound(T, PcRepresentation.from_pairs([(ident, s)]), s)


def test_realize_examples():
    s = np.array([[0.0], [1.0]])
    one = PcRepresentation([Piece(lambda x: np.full((len(x), 1), 1.0), s, 0.1)])
    assert realize(one, [[0.05]])[0, 0] == 1.0
    assert realize(one, [[0.5]])[0, 0] == 0.0
    both = PcRepresentation([Piece(lambda x: np.full((len(x), 1), 1.0), s, 0.6),
                             Piece(lambda x: np.full((len(x), 1), 2.0), s, 0.6)])
    assert realize(both, [[0.5]])[0, 0] == 3.0


def test_one_part_candidate_is_infinitely_far():
    # f = I[0,1] + I[1/3,1/2] needs two parts; any single-part candidate mismatches in length
    grid = np.linspace(0, 1, 61)[:, None]
    inner = grid[(grid[:, 0] >= 1 / 3) & (grid[:, 0] <= 0.5)]
    target = PcRepresentation.from_pairs([(lambda x: np.ones((len(x), 1)), grid),
                                          (lambda x: np.full((len(x), 1), 2.0), inner)])
    for c in np.linspace(-1, 3, 9):
        cand = PcRepresentation.from_pairs([(lambda x, c=c: np.full((len(x), 1), c), grid)])
        assert d_step1(target, cand, grid) == math.inf


small_cloud = arrays(np.float64, st.tuples(st.integers(1, 12), st.just(2)),
                     elements=st.floats(-5, 5, allow_nan=False, width=32))


@settings(max_examples=100, deadline=None)
@given(small_cloud, small_cloud)
def test_hausdorff_symmetric_and_exact(a, b):
    assert hausdorff(a, b) == hausdorff(b, a)
    assert hausdorff(a, b) == pytest.approx(brute_hausdorff(a, b), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(small_cloud, small_cloud, small_cloud)
def test_hausdorff_triangle(a, b, c):
    assert hausdorff(a, c) <= hausdorff(a, b) + hausdorff(b, c) + 1e-9


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 30))
def test_sup_norm_grows_with_sample(seed, extra):
    rng = make_rng(seed)
    s = rng.uniform(-1, 1, size=(10, 1))
    bigger = np.vstack([s, rng.uniform(-1, 1, size=(extra, 1))])
    f, g = np.sin, lambda x: x ** 3
    assert sup_norm_diff(f, g, s) <= sup_norm_diff(f, g, bigger)


def _random_rep(rng, n_parts):
    pairs = []
    for _ in range(n_parts):
        a, b = rng.normal(size=2)
        pairs.append((lambda x, a=a, b=b: a * x[:, :1] + b, rng.uniform(size=(rng.integers(1, 6), 1))))
    return PcRepresentation.from_pairs(pairs)


def test_bound_dominates_on_random_pairs():
    rng = make_rng(8)
    s = np.linspace(0, 1, 21)[:, None]
    for _ in range(100):
        n = int(rng.integers(1, 5))
        F, G = _random_rep(rng, n), _random_rep(rng, n)
        assert d_step1(F, G, s) <= dpc_upper_bound(F, G, s)


def test_cloud_csv_round_trip(tmp_path):
    pts = make_rng(0).normal(size=(7, 3))
    write_cloud_csv(tmp_path / "c.csv", pts)
    assert np.array_equal(read_cloud_csv(tmp_path / "c.csv"), pts)
