import math

import numpy as np
import pytest
from scipy.special import gammaln

from pcnn.datagen import (SUBPATTERNS, DataError, Dataset, SyntheticSpec, generate, load_csv,
                          projection_matrix, read_config, split_mask, synth_target, synth_values,
                          write_csv)
from pcnn.ffnn import TrainConfig
from pcnn.geometry import PcRepresentation, realize
from pcnn.model import PCNNRegressor


def mean_abs_t(nu):
    # E|T| for Student t with nu degrees of freedom
    return math.exp(math.log(2 * math.sqrt(nu)) + gammaln((nu + 1) / 2)
                    - 0.5 * math.log(math.pi) - math.log(nu - 1) - gammaln(nu / 2))


def test_mean_abs_t_oracle():
    # numerical integration of |t| times the t(30) density gives 0.818549...
    assert mean_abs_t(30) == pytest.approx(0.8185493, abs=1e-6)
    # heavier tails than the normal, so above sqrt(2 / pi)
    assert mean_abs_t(30) > math.sqrt(2 / math.pi)


def test_synth_target_examples():
    spec = SyntheticSpec(d=1, r=0.25)
    value, part = synth_target(spec, [1.0], [0.1])
    assert part == 0 and value == pytest.approx(1 + math.exp(0.1) * math.cos(0.1))
    assert value == pytest.approx(2.0996, abs=1e-4)
    value, part = synth_target(spec, [1.0], [0.2])
    assert part == 1 and value == pytest.approx(-1.0392, abs=1e-4)
    assert synth_target(spec, [1.0], [0.0])[1] == 0
    assert synth_target(spec, [1.0], [0.25])[1] == 0


def test_negative_projection_uses_nonnegative_residue():
    spec = SyntheticSpec(d=1, r=0.25)
    assert synth_target(spec, [1.0], [-0.1])[1] == 1   # -0.1 mod 0.25 = 0.15
    assert synth_target(spec, [1.0], [-0.2])[1] == 0   # -0.2 mod 0.25 = 0.05


def test_noiseless_targets_match():
    spec = SyntheticSpec(d=3, n=200, sigma=0.0, seed=2)
    data = generate(spec)
    values, part = synth_values(spec, projection_matrix(spec), data.inputs)
    assert np.array_equal(data.targets[:, 0], values)
    assert np.array_equal(data.part_labels, part)


def test_noise_scale_and_independence():
    spec = SyntheticSpec(d=2, n=10_000, sigma=0.01, nu=30, seed=5)
    clean = generate(SyntheticSpec(**{**spec.as_dict(), "sigma": 0.0}))
    noisy = generate(spec)
    noise = noisy.targets[:, 0] - clean.targets[:, 0]
    for expected in (0.01 * mean_abs_t(30), 0.01 * 0.7915):
        assert abs(np.abs(noise).mean() - expected) <= 0.2 * expected
    rho = np.corrcoef(np.linalg.norm(noisy.inputs, axis=1), noise)[0, 1]
    assert abs(rho) < 0.05


def test_generate_deterministic():
    spec = SyntheticSpec(d=4, n=50, seed=9)
    a, b = generate(spec), generate(spec)
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.targets, b.targets)
    assert not np.array_equal(a.inputs, generate(SyntheticSpec(d=4, n=50, seed=10)).inputs)


def test_part_indicator_matches_realize():
    spec = SyntheticSpec(d=1, r=0.3, f1="sin10", f2="neg_shift_quad", sigma=0.0)
    A = projection_matrix(spec)
    grid = np.linspace(-1, 2, 301)[:, None]
    values, part = synth_values(spec, A, grid)
    f1 = lambda x: SUBPATTERNS["sin10"](x @ A)[:, None]
    f2 = lambda x: SUBPATTERNS["neg_shift_quad"](x @ A)[:, None]
    rep = PcRepresentation.from_pairs([(f1, grid[part == 0]), (f2, grid[part == 1])])
    np.testing.assert_array_equal(realize(rep, grid)[:, 0], values)


def test_interpolable_with_known_parts():
    spec = SyntheticSpec(d=1, n=1000, sigma=0.0, r=1.0, f1="linear", f2="square",
                         projection="ones", seed=1)
    data = generate(spec).with_split("fraction:0.2", 1)
    tr, te = data.train(), data.test()
    cfg = TrainConfig(epochs=1000, batch_size=800, learning_rate=1e-2, loss="mae")
    clf = TrainConfig(epochs=1000, batch_size=800, learning_rate=1e-2, loss="binary_cross_entropy")
    est = PCNNRegressor((16,), (16,), subpattern_config=cfg, classifier_config=clf, random_state=0)
    est.fit(tr.inputs, tr.targets[:, 0], parts=tr.part_labels)
    assert np.mean(np.abs(est.predict(te.inputs) - te.targets[:, 0])) < 1e-2


@pytest.mark.parametrize("bad", [dict(r=0.0), dict(sigma=-1.0), dict(nu=0.0), dict(f1="nope"),
                                 dict(d=0), dict(projection="eye")])
def test_spec_validation(bad):
    with pytest.raises(ValueError):
        SyntheticSpec(**bad)


def _write(path, text):
    path.write_text(text)
    return path


def test_load_csv_last_rows_split(tmp_path):
    rows = "\n".join(f"{i},{2 * i}" for i in range(10))
    data = load_csv(_write(tmp_path / "d.csv", "x0,y0\n" + rows + "\n"), split="last:2")
    assert len(data.train()) == 8 and len(data.test()) == 2
    assert data.test().inputs[:, 0].tolist() == [8.0, 9.0]
    assert data.train().inputs[:, 0].tolist() == list(map(float, range(8)))


def test_load_csv_part_column(tmp_path):
    data = load_csv(_write(tmp_path / "d.csv", "x0,y0,part\n0,1,0\n1,2,1\n2,3,1\n"))
    assert data.part_labels.tolist() == [0, 1, 1]


def test_load_csv_reports_bad_cell(tmp_path):
    path = _write(tmp_path / "d.csv", "x0,y0\n0,1\n1,2\n2,oops\n3,4\n")
    with pytest.raises(DataError, match=r"row 3, column 'y0'"):
        load_csv(path)


@pytest.mark.parametrize("text, match", [("", "empty"), ("x0,y0\n", "no data"),
                                         ("a,b\n1,2\n", "no columns")])
def test_load_csv_errors(tmp_path, text, match):
    with pytest.raises(DataError, match=match):
        load_csv(_write(tmp_path / "d.csv", text))


def test_load_csv_missing_column(tmp_path):
    with pytest.raises(DataError, match="missing column"):
        load_csv(_write(tmp_path / "d.csv", "x0,y0\n1,2\n"), target_cols="y1")


def test_csv_round_trip_is_exact(tmp_path):
    data = generate(SyntheticSpec(d=2, n=30, seed=3)).with_split("fraction:0.3", 3)
    write_csv(tmp_path / "d.csv", data, include_split=True)
    back = load_csv(tmp_path / "d.csv", split="column:split")
    assert np.array_equal(back.inputs, data.inputs)
    assert np.array_equal(back.targets, data.targets)
    assert np.array_equal(back.part_labels, data.part_labels)
    assert np.array_equal(back.is_test, data.is_test)


def test_split_fraction():
    mask = split_mask(100, "fraction:0.25", 0)
    assert mask.sum() == 25
    assert np.array_equal(mask, split_mask(100, "fraction:0.25", 0))
    with pytest.raises(DataError):
        split_mask(10, "middle:3")


def test_dataset_validation():
    with pytest.raises(DataError):
        Dataset(np.zeros((3, 1)), np.zeros((2, 1)))
    with pytest.raises(DataError):
        Dataset(np.zeros((2, 1)), np.zeros((2, 1)), part_labels=[0, -1])


def test_read_config(tmp_path):
    path = _write(tmp_path / "c.cfg", "# comment\nd = 3\n\nsigma=0.5\n")
    assert read_config(path) == {"d": "3", "sigma": "0.5"}
    spec = SyntheticSpec.from_mapping(read_config(path))
    assert spec.d == 3 and spec.sigma == 0.5
    with pytest.raises(DataError):
        read_config(_write(tmp_path / "bad.cfg", "novalue\n"))
