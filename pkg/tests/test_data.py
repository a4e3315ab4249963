import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from condasym.data import Dataset, load_csv, make_dataset, split_half
from condasym.errors import ConfigurationError, DataError


def write_csv(tmp_path, rows, header="a,b,c"):
    path = tmp_path / "data.csv"
    path.write_text(header + "\n" + "\n".join(rows) + "\n")
    return path


def test_load_csv_happy_path(tmp_path):
    rng = np.random.default_rng(0)
    rows = [f"{rng.normal()},{rng.normal()},{rng.normal()}" for _ in range(500)]
    path = write_csv(tmp_path, rows)
    ds = load_csv(path, {"x": "a", "y": "b", "z": ["c"]})
    assert ds.n == 500
    assert ds.d == 1
    assert ds.names["x"] == "a"


def test_load_csv_nan_cell_names_location(tmp_path):
    rows = ["1.0,2.0,3.0"] * 30
    rows[4] = "1.0,NaN,3.0"
    path = write_csv(tmp_path, rows)
    with pytest.raises(DataError, match=r"line 6.*'b'"):
        load_csv(path, {"x": "a", "y": "b", "z": ["c"]}, standardize=False)


def test_load_csv_non_numeric_cell(tmp_path):
    rows = ["1.0,2.0,3.0"] * 30
    rows[0] = "1.0,oops,3.0"
    path = write_csv(tmp_path, rows)
    with pytest.raises(DataError, match="oops"):
        load_csv(path, {"x": "a", "y": "b", "z": ["c"]}, standardize=False)


def test_load_csv_missing_column_is_config_error(tmp_path):
    path = write_csv(tmp_path, ["1,2,3"] * 25)
    with pytest.raises(ConfigurationError, match="'nope'"):
        load_csv(path, {"x": "a", "y": "nope", "z": ["c"]})


def test_load_csv_standardizes_all_columns(tmp_path):
    rng = np.random.default_rng(3)
    rows = [
        f"{10 + 3 * rng.normal()},{rng.normal()},{5 * rng.normal()},{rng.normal() - 2}"
        for _ in range(400)
    ]
    path = write_csv(tmp_path, rows, header="a,b,c,d")
    ds = load_csv(path, {"x": "a", "y": "b", "z": ["c", "d"]}, standardize=True)
    assert ds.d == 2
    for col in (ds.x, ds.y, ds.z[:, 0], ds.z[:, 1]):
        assert abs(np.mean(col)) < 1e-10
        assert abs(np.std(col, ddof=1) - 1.0) < 1e-10


def test_load_csv_too_few_rows(tmp_path):
    path = write_csv(tmp_path, ["1,2,3"] * 10)
    with pytest.raises(DataError, match="at least 20"):
        load_csv(path, {"x": "a", "y": "b", "z": ["c"]})


def test_destandardize_round_trip():
    rng = np.random.default_rng(11)
    x = 7 + 2 * rng.normal(size=100)
    y = -3 + 0.5 * rng.normal(size=100)
    z = rng.normal(size=(100, 2)) * [4.0, 0.1] + [1.0, -9.0]
    ds = make_dataset(x, y, z, standardize=True)
    rx, ry, rz = ds.destandardized()
    for orig, back in ((x, rx), (y, ry), (z, rz)):
        assert np.max(np.abs(orig - back) / np.maximum(np.abs(orig), 1e-12)) < 1e-9


def test_make_dataset_rejects_mismatched_blocks():
    with pytest.raises(DataError, match="row count"):
        make_dataset(np.ones(30), np.ones(31), np.ones((30, 1)))


def test_make_dataset_rejects_wide_z():
    with pytest.raises(DataError, match="1 or 2 columns"):
        make_dataset(np.ones(30), np.ones(30), np.ones((30, 3)))


def test_split_half_even():
    ds = make_dataset(*_uniform_blocks(500))
    sp = split_half(ds, 7)
    assert len(sp.d1) == len(sp.d2) == 250
    assert len(np.intersect1d(sp.d1, sp.d2)) == 0


def test_split_half_odd_gives_first_half_extra():
    ds = make_dataset(*_uniform_blocks(501))
    sp = split_half(ds, 7)
    assert len(sp.d1) == 251
    assert len(sp.d2) == 250


def test_split_half_deterministic():
    ds = make_dataset(*_uniform_blocks(100))
    a = split_half(ds, 42)
    b = split_half(ds, 42)
    assert np.array_equal(a.d1, b.d1)
    assert np.array_equal(a.d2, b.d2)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(min_value=20, max_value=400), seed=st.integers(0, 2**32 - 1))
def test_split_half_is_partition(n, seed):
    ds = make_dataset(*_uniform_blocks(n))
    sp = split_half(ds, seed)
    union = np.union1d(sp.d1, sp.d2)
    assert np.array_equal(union, np.arange(n))
    assert abs(len(sp.d1) - len(sp.d2)) <= n % 2


def _uniform_blocks(n):
    rng = np.random.default_rng(n)
    return rng.uniform(0, 1, n), rng.uniform(0, 1, n), rng.uniform(0, 1, (n, 1))
