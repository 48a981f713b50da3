import numpy as np
import pytest

from coreassoc.errors import DataError, EmptySelectionError, StructuralError
from coreassoc.ingest import (GridMeta, StsMatrix, aggregate, compute_dtr, filter_complete,
                              load_grids, load_series, read_sts_csv, slice_window, write_sts_csv)


def make(values, start="2001-01-01", columns=None, label="X"):
    values = np.asarray(values, dtype=float)
    n, p = values.shape
    if columns is None:
        columns = [GridMeta(f"g{j}", 20.0, 70.0 + j, 1 + j % 2) for j in range(p)]
    idx = np.datetime64(start) + np.arange(n)
    return StsMatrix(values, np.isnan(values), idx, columns, label)


def test_dtr_subtraction():
    x = compute_dtr(make([[35.0]]), make([[22.5]]))
    assert x.values[0, 0] == 12.5
    assert x.label == "X"


def test_dtr_mask_propagates():
    x = compute_dtr(make([[35.0, 30.0]]), make([[np.nan, 20.0]]))
    assert x.mask.tolist() == [[True, False]]
    assert x.values[0, 1] == 10.0


def test_dtr_counts_negative_values():
    x = compute_dtr(make([[1.0, 5.0]]), make([[2.0, 1.0]]))
    assert x.meta["negative_dtr"] == 1
    assert x.values[0, 0] == -1.0


def test_dtr_index_mismatch_names_coordinate():
    a = make(np.ones((3, 2)))
    b = make(np.ones((3, 2)), start="2001-01-02")
    with pytest.raises(StructuralError, match="row 0"):
        compute_dtr(a, b)
    with pytest.raises(StructuralError, match="shape"):
        compute_dtr(a, make(np.ones((2, 2))))


def test_unmasked_nonfinite_rejected():
    with pytest.raises(DataError):
        StsMatrix(np.array([[np.inf]]), np.zeros((1, 1), bool), np.array(["2001-01-01"], "datetime64[D]"),
                  [GridMeta("a", 0, 0, 1)])


def test_time_index_must_increase():
    with pytest.raises(StructuralError):
        StsMatrix(np.ones((2, 1)), np.zeros((2, 1), bool),
                  np.array(["2001-01-02", "2001-01-01"], "datetime64[D]"), [GridMeta("a", 0, 0, 1)])


def test_filter_complete_identity_and_idempotent():
    x = make(np.arange(6.0).reshape(3, 2))
    y = filter_complete(x)
    np.testing.assert_array_equal(y.values, x.values)
    assert all(g.complete for g in y.columns)
    z = filter_complete(y)
    np.testing.assert_array_equal(z.values, y.values)
    assert z.columns == y.columns


def test_filter_complete_drops_missing_column():
    v = np.ones((4, 3))
    v[:, 1] = np.nan
    y = filter_complete(make(v))
    assert y.grid_ids == ["g0", "g2"]


def test_filter_complete_empty():
    with pytest.raises(EmptySelectionError):
        filter_complete(make(np.full((2, 2), np.nan)))


def test_aggregate_monthly_means():
    v = np.full((31 + 28, 3), 10.0)
    v[:31, 1] = np.nan
    v[5, 1] = 7.0
    v[:31, 2] = np.nan
    y = aggregate(make(v), "monthly")
    assert y.freq == "M"
    assert y.values[0, 0] == 10.0
    assert y.values[0, 1] == 7.0
    assert y.mask[0, 2] and not y.mask[1, 2]
    assert y.columns == make(v).columns


def test_aggregate_yearly_and_min_coverage():
    v = np.ones((730, 1))
    v[:300] = np.nan
    y = aggregate(make(v, start="2001-01-01"), "yearly")
    assert y.time_index.astype(str).tolist() == ["2001", "2002"]
    assert not y.mask.any()
    y = aggregate(make(v, start="2001-01-01"), "yearly", min_coverage=0.5)
    assert y.mask[:, 0].tolist() == [True, False]


def test_aggregate_commutes_with_dtr_when_masks_agree(rng):
    n = 90
    tmax = rng.normal(30, 2, (n, 4))
    tmin = rng.normal(20, 2, (n, 4))
    holes = rng.random((n, 4)) < 0.1
    tmax[holes] = np.nan
    tmin[holes] = np.nan
    a, b = make(tmax), make(tmin)
    lhs = aggregate(compute_dtr(a, b), "monthly")
    ma, mb = aggregate(a, "monthly"), aggregate(b, "monthly")
    np.testing.assert_allclose(lhs.values, ma.values - mb.values, rtol=0, atol=1e-12)


def test_aggregate_requires_daily():
    y = aggregate(make(np.ones((60, 1))), "monthly")
    with pytest.raises(StructuralError):
        aggregate(y, "yearly")


def test_slice_window():
    x = make(np.arange(2 * 730.0).reshape(730, 2), start="1968-01-01")
    assert slice_window(x, None, None).shape == x.shape
    y = slice_window(x, ("1968", "1968"), {2})
    assert y.n == 366 and y.grid_ids == ["g1"]
    one = slice_window(x, ("1968-03-01", "1968-03-01"))
    assert one.shape == (1, 2)
    with pytest.raises(EmptySelectionError):
        slice_window(x, ("1990", "1991"))


def test_load_long_form(tmp_path):
    (tmp_path / "g.csv").write_text("grid_id,lat,lon,zone\na,10,70,1\nb,10,71,2\n")
    (tmp_path / "s.csv").write_text(
        "date,grid_id,tmax,tmin\n2001-01-01,a,30,20\n2001-01-01,b,NA,21\n2001-01-02,a,31,19\n")
    grids = load_grids(tmp_path / "g.csv")
    tmax, tmin = load_series(tmp_path / "s.csv", grids)
    x = compute_dtr(tmax, tmin)
    assert x.values[0, 0] == 10.0 and x.values[1, 0] == 12.0
    assert x.mask[:, 1].all()  # one NA and one absent row
    assert tmax.columns[0].complete and not tmax.columns[1].complete


def test_unparsable_field_is_error(tmp_path):
    (tmp_path / "g.csv").write_text("grid_id,lat,lon,zone\na,10,70,1\n")
    (tmp_path / "s.csv").write_text("date,grid_id,value\n2001-01-01,a,1O.5\n")
    with pytest.raises(DataError, match="unparsable"):
        load_series(tmp_path / "s.csv", load_grids(tmp_path / "g.csv"))


def test_unknown_grid_and_duplicates(tmp_path):
    (tmp_path / "g.csv").write_text("grid_id,lat,lon,zone\na,10,70,1\n")
    (tmp_path / "s.csv").write_text("date,grid_id,value\n2001-01-01,z,1\n")
    with pytest.raises(DataError, match="not in grid metadata"):
        load_series(tmp_path / "s.csv", load_grids(tmp_path / "g.csv"))
    (tmp_path / "s.csv").write_text("date,grid_id,value\n2001-01-01,a,1\n2001-01-01,a,2\n")
    with pytest.raises(DataError, match="duplicate"):
        load_series(tmp_path / "s.csv", load_grids(tmp_path / "g.csv"))
    (tmp_path / "g2.csv").write_text("grid_id,lat,lon,zone\na,10,70,1\na,11,70,1\n")
    with pytest.raises(DataError, match="duplicate"):
        load_grids(tmp_path / "g2.csv")


def test_custom_missing_token(tmp_path):
    (tmp_path / "g.csv").write_text("grid_id,lat,lon,zone\na,10,70,1\n")
    (tmp_path / "s.csv").write_text("date,grid_id,value\n2001-01-01,a,-99.9\n2001-01-02,a,3\n")
    x = load_series(tmp_path / "s.csv", load_grids(tmp_path / "g.csv"), missing_token="-99.9")
    assert x.mask[:, 0].tolist() == [True, False]


def test_wide_csv_roundtrip(tmp_path, rng):
    v = rng.normal(size=(5, 3))
    v[2, 1] = np.nan
    x = make(v)
    write_sts_csv(x, tmp_path / "x.csv")
    y = read_sts_csv(tmp_path / "x.csv", list(x.columns))
    np.testing.assert_array_equal(y.mask, x.mask)
    np.testing.assert_array_equal(y.values[~y.mask], x.values[~x.mask])
    np.testing.assert_array_equal(y.time_index, x.time_index)
    header = (tmp_path / "x.csv").read_text().splitlines()[0]
    assert header == "date,g0,g1,g2"
