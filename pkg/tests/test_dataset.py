import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from axmlp.dataset import (Dataset, DatasetError, load_builtin, load_csv, normalize, prepare,
                           quantize_inputs, round_half_up, split)


def _write(tmp_path, text, name="d.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_labels_reindexed_densely(tmp_path):
    ds = load_csv(_write(tmp_path, "1,2,a\n3,4,b\n5,6,a\n"))
    assert ds.labels.tolist() == [0, 1, 0]
    assert ds.features.shape == (3, 2)
    assert ds.num_classes == 2


def test_numeric_labels_sorted_numerically(tmp_path):
    ds = load_csv(_write(tmp_path, "0,10\n1,9\n2,2\n3,10.0\n"))
    assert ds.labels.tolist() == [2, 1, 0, 2]


def test_header_and_named_label(tmp_path):
    ds = load_csv(_write(tmp_path, "cls,f1,f2\nx,1,2\ny,3,4\n"), "cls")
    assert ds.feature_names == ("f1", "f2")
    assert ds.features.tolist() == [[1, 2], [3, 4]]
    # same file, label by index
    ds2 = load_csv(_write(tmp_path, "cls,f1,f2\nx,1,2\ny,3,4\n"), 0)
    assert ds2.labels.tolist() == ds.labels.tolist()


def test_non_numeric_cell_is_named(tmp_path):
    with pytest.raises(DatasetError, match=r"row 2, column 1.*'oops'"):
        load_csv(_write(tmp_path, "1,2,a\n3,oops,b\n"))


def test_ragged_row(tmp_path):
    with pytest.raises(DatasetError, match="row 2 has 2 columns"):
        load_csv(_write(tmp_path, "1,2,a\n3,b\n"))


def test_missing_file_and_bad_label(tmp_path):
    with pytest.raises(DatasetError):
        load_csv(tmp_path / "nope.csv")
    with pytest.raises(DatasetError):
        load_csv(_write(tmp_path, "a,b\n1,x\n"), "zzz")
    with pytest.raises(DatasetError, match="2 classes"):
        load_csv(_write(tmp_path, "1,a\n2,a\n"))


def test_builtin_shapes():
    bc = load_builtin("breast_cancer")
    assert bc.n_features == 9 and len(bc) == 683 and bc.num_classes == 2
    pd = load_builtin("pendigits")
    assert pd.n_features == 16 and pd.num_classes == 10
    mg = load_builtin("mammographic")
    assert mg.n_features == 5 and mg.num_classes == 2
    with pytest.raises(DatasetError):
        load_builtin("iris")


def _toy(n):
    return Dataset(np.arange(n, dtype=float)[:, None], np.arange(n) % 2)


def test_split_partition_and_determinism():
    ds = _toy(10)
    tr, te = split(ds, 0.7, 3)
    assert len(tr) == 7 and len(te) == 3
    assert sorted(tr.features[:, 0].tolist() + te.features[:, 0].tolist()) == list(range(10))
    tr2, _ = split(ds, 0.7, 3)
    assert np.array_equal(tr.features, tr2.features)


def test_split_seeds_differ():
    ds = _toy(100)
    sets = {tuple(split(ds, 0.7, s)[0].features[:, 0]) for s in range(3)}
    assert len(sets) == 3


def test_split_errors():
    with pytest.raises(DatasetError):
        split(_toy(10), 1.0)
    with pytest.raises(DatasetError):
        split(_toy(1), 0.7)


def test_normalize_minmax_constant_and_clamp():
    tr = Dataset(np.array([[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]]), np.array([0, 1, 0]))
    te = Dataset(np.array([[0.0, 5.0], [10.0, 7.0]]), np.array([0, 1]))
    ntr, nte, _ = normalize(tr, te)
    assert ntr.features[:, 0].tolist() == [0.0, 0.5, 1.0]
    assert ntr.features[:, 1].tolist() == [0.0, 0.0, 0.0]
    assert nte.features[:, 0].tolist() == [0.0, 1.0]


@pytest.mark.parametrize("x,q", [(1.0, 15), (0.0, 0), (0.5, 8)])
def test_quantize_endpoints_and_half(x, q):
    ds = Dataset(np.array([[x]]), np.array([0]))
    assert quantize_inputs(ds, 4).features[0, 0] == q


def test_quantize_rejects_unnormalized():
    with pytest.raises(DatasetError):
        quantize_inputs(Dataset(np.array([[1.5]]), np.array([0])), 4)


@given(st.floats(-1e6, 1e6, allow_nan=False))
def test_round_half_up(x):
    r = round_half_up(x)
    assert r - 0.5 <= x < r + 0.5


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 8))
def test_prepare_ranges(seed, bits):
    tr, te = prepare(load_builtin("mammographic"), 0.7, seed, bits)
    for part in (tr, te):
        assert part.features.min() >= 0 and part.features.max() <= 2**bits - 1
    assert len(tr) + len(te) == 830
