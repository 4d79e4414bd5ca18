import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pcnn.numerics import make_rng
from pcnn.partition import (BallPartitioner, DegeneratePartitionError, GeometricPart, delta_bar,
                            delta_min, get_partition, part_membership, partition_with_target,
                            read_geometric_part_csv, same_part_probability, separation_bound,
                            write_geometric_part_csv, write_partition_csv)

P3 = np.array([[0.0], [1.0], [10.0]])


def test_delta_min_examples():
    assert delta_min(P3) == 0.5
    assert delta_min(np.array([[0.0, 0.0], [3.0, 4.0]])) == 2.5
    assert delta_min(np.array([[0.0], [0.0], [1.0]])) == 0.5


def test_delta_bar_examples():
    assert delta_bar(P3) == pytest.approx(20 / 3)
    assert delta_bar(np.array([[0.0], [2.0]])) == 2.0
    assert delta_bar(np.array([[0.0], [1.0], [2.0]])) == pytest.approx(4 / 3)


def test_degenerate_data_rejected():
    with pytest.raises(DegeneratePartitionError):
        delta_min(np.zeros((4, 2)))


def test_hand_simulated_partition():
    part, geo = get_partition(P3, 0.01, make_rng(0), alpha=0.3, order=[0, 1, 2])
    assert [p.tolist() for p in part.parts] == [[0, 1], [2]]
    assert part.n_parts == 2
    assert all(g.ball_radius == 0.5 for g in geo)


def test_q_one_stops_after_first_ball():
    part, _ = get_partition(P3, 1.0, make_rng(0), alpha=0.3, order=[2, 0, 1])
    assert [p.tolist() for p in part.parts] == [[2], [0, 1]]
    assert part.n_iterations == 1
    part, _ = get_partition(P3, 1.0, make_rng(0), alpha=0.3, order=[0, 1, 2])
    assert [p.tolist() for p in part.parts] == [[0, 1], [2]]


def test_far_clusters_are_never_mixed():
    rng = make_rng(1)
    a = rng.normal(size=(30, 2)) * 0.1
    pts = np.vstack([a, a + 100.0])
    for seed in range(50):
        part, _ = get_partition(pts, 0.05, make_rng(seed))
        for idx in part.parts:
            assert np.all(idx < 30) or np.all(idx >= 30)


def test_membership_examples():
    one = GeometricPart(np.array([[0.0]]), 0.5)
    assert part_membership(one, [0.4])
    assert not part_membership(one, [0.6])
    two = GeometricPart(np.array([[0.0], [1.0]]), 0.5)
    assert part_membership(two, [0.75])


def test_same_part_probability_examples():
    pts = make_rng(2).uniform(size=(40, 2))
    assert same_part_probability(pts, 3, 3, 10, 0.1, make_rng(0)) == 1.0
    p = same_part_probability(pts, 0, 1, 50, 0.1, make_rng(0))
    assert 0.0 <= p <= 1.0


def test_close_pair_rarely_split():
    pts = make_rng(3).uniform(size=(200, 1))
    pts = np.vstack([pts, pts[:1] + 1e-5])
    i1, i2 = 0, 200
    bound = separation_bound(pts, i1, i2)
    assert 8 * (math.log(len(pts)) + 1) * 1e-5 / delta_bar(pts) <= 0.1
    trials = 300
    freq = same_part_probability(pts, i1, i2, trials, 1.0, make_rng(4))
    stderr = math.sqrt(max(bound * (1 - bound), 1e-12) / trials)
    assert freq >= 0.9 - 3 * stderr


clouds = arrays(np.float64, st.tuples(st.integers(3, 40), st.integers(1, 3)),
                elements=st.floats(-10, 10, allow_nan=False, width=32))


@settings(max_examples=60, deadline=None)
@given(clouds, st.floats(0.01, 1.0), st.integers(0, 2**31))
def test_partition_invariants(pts, q, seed):
    if len(np.unique(pts, axis=0)) < 2:
        return
    part, geo = get_partition(pts, q, make_rng(seed))
    n = len(pts)
    labels = part.labels(n)
    assert (labels >= 0).all()
    assert sum(len(p) for p in part.parts) == n
    assert all(len(p) > 0 for p in part.parts)
    assert part.n_iterations <= n
    assert 0.25 <= part.alpha < 0.5
    d = part.delta_min
    assert d > 0
    for a in range(len(geo)):
        assert geo[a].contains_many(pts[part.parts[a]]).all()
        for b in range(a + 1, len(geo)):
            gap = np.sqrt(((geo[a].anchor_points[:, None] - geo[b].anchor_points[None]) ** 2).sum(-1))
            assert gap.min() >= 2 * d


@settings(max_examples=20, deadline=None)
@given(clouds, st.integers(0, 1000))
def test_partition_deterministic(pts, seed):
    if len(np.unique(pts, axis=0)) < 2:
        return
    a, _ = get_partition(pts, 0.2, make_rng(seed))
    b, _ = get_partition(pts, 0.2, make_rng(seed))
    assert [p.tolist() for p in a.parts] == [p.tolist() for p in b.parts]
    assert a.alpha == b.alpha


def test_duplicates_share_a_part():
    pts = make_rng(5).uniform(size=(30, 2))
    pts = np.vstack([pts, pts[:5]])
    for seed in range(20):
        labels = get_partition(pts, 0.1, make_rng(seed))[0].labels(35)
        assert np.array_equal(labels[:5], labels[30:])


def test_part_count_hint():
    pts = make_rng(6).uniform(size=(300, 2))
    for target in (1, 2, 4):
        part, _ = partition_with_target(pts, 0.1, 0, target)
        assert part.n_parts == target


def test_rejects_bad_q():
    with pytest.raises(ValueError):
        get_partition(P3, 0.0, make_rng(0))


def test_csv_export(tmp_path):
    part, geo = get_partition(P3, 0.01, make_rng(0), alpha=0.3, order=[0, 1, 2])
    write_partition_csv(tmp_path / "p.csv", part, 3)
    lines = (tmp_path / "p.csv").read_text().split()
    assert lines == ["row_index,part_id", "0,0", "1,0", "2,1"]
    write_geometric_part_csv(tmp_path / "g.csv", geo[0])
    back = read_geometric_part_csv(tmp_path / "g.csv")
    assert back.ball_radius == geo[0].ball_radius
    assert np.array_equal(back.anchor_points, geo[0].anchor_points)


def test_ball_partitioner_estimator():
    pts = make_rng(7).uniform(size=(100, 2))
    est = BallPartitioner(q=0.1, random_state=3).fit(pts)
    assert est.labels_.shape == (100,)
    assert np.array_equal(est.predict(pts), est.labels_)
    assert est.predict(np.array([[50.0, 50.0]]))[0] == -1
