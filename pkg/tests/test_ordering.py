import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coreassoc.errors import DataError, DuplicateCellError, StructuralError
from coreassoc.ingest import GridMeta, StsMatrix
from coreassoc.ordering import (SpatialOrder, apply_order, hilbert_index, hilbert_order,
                                order_table, spiral_order)
from coreassoc.synthetic import lattice_grids


def hilbert_curve_oracle(order):
    """Cells of the order-``order`` Hilbert curve in visiting order, built
    recursively from four transformed copies of the previous order."""
    if order == 0:
        return [(0, 0)]
    prev = hilbert_curve_oracle(order - 1)
    n = 1 << (order - 1)
    return ([(y, x) for x, y in prev]
            + [(x, y + n) for x, y in prev]
            + [(x + n, y + n) for x, y in prev]
            + [(2 * n - 1 - y, n - 1 - x) for x, y in prev])


def coords(grids, order):
    return [(int(grids[i].lat), int(grids[i].lon)) for i in order.permutation]


def test_spiral_worked_example(grid3x3):
    seq = coords(grid3x3, spiral_order(grid3x3))
    assert seq[:6] == [(1, 1), (1, 2), (2, 1), (3, 1), (2, 2), (1, 3)]
    assert sorted(seq) == sorted((g.lat, g.lon) for g in grid3x3)


def test_spiral_2x2():
    grids = lattice_grids(2, 2, lat0=1, lon0=1, zones=1)
    assert coords(grids, spiral_order(grids)) == [(1, 1), (1, 2), (2, 1), (2, 2)]


def test_spiral_strip_is_longitude_order():
    grids = [GridMeta(f"s{j}", 5.0, 70.0 + j, 1) for j in (3, 0, 4, 1, 2)]
    o = spiral_order(grids)
    assert [grids[i].lon for i in o.permutation] == [70, 71, 72, 73, 74]


def test_spiral_strata_concatenate_by_zone():
    grids = lattice_grids(3, 4, lat0=1, lon0=1, zones=2)
    o = spiral_order(grids)
    zones = [grids[i].zone for i in o.permutation]
    assert zones == sorted(zones)
    # within zone 2 the traversal restarts at that zone's lowest cell
    first_z2 = next(i for i in o.permutation if grids[i].zone == 2)
    assert (grids[first_z2].lat, grids[first_z2].lon) == (1, 3)


def test_spiral_skips_absent_cells():
    grids = [g for g in lattice_grids(3, 3, lat0=1, lon0=1, zones=1) if (g.lat, g.lon) != (1, 2)]
    seq = coords(grids, spiral_order(grids))
    assert seq[:5] == [(1, 1), (2, 1), (3, 1), (2, 2), (1, 3)]


def test_duplicate_cell_names_both():
    grids = [GridMeta("a", 1.0, 1.0), GridMeta("b", 1.0, 1.0), GridMeta("c", 2.0, 1.0)]
    with pytest.raises(DuplicateCellError, match="'a' and 'b'"):
        spiral_order(grids)


@pytest.mark.parametrize("rows,cols", [(1, 1), (2, 5), (7, 3), (6, 6)])
def test_spiral_full_lattice_visits_each_cell_once(rows, cols):
    grids = lattice_grids(rows, cols, zones=1)
    o = spiral_order(grids, stratify_by_zone=False)
    assert sorted(o.permutation) == list(range(rows * cols))
    seq = coords(grids, o)
    assert len(set(seq)) == rows * cols
    diag = [a[0] + a[1] for a in seq]
    assert diag == sorted(diag)


def test_hilbert_order1_example():
    grids = [GridMeta(f"{a}{b}", float(a), float(b)) for a in (0, 1) for b in (0, 1)]
    o = hilbert_order(grids, order_bits=1)
    assert coords(grids, o) == [(0, 0), (0, 1), (1, 1), (1, 0)]
    assert hilbert_curve_oracle(1) == [(0, 0), (0, 1), (1, 1), (1, 0)]


@pytest.mark.parametrize("bits", [1, 2, 3, 4, 5])
def test_hilbert_index_matches_recursive_oracle(bits):
    curve = hilbert_curve_oracle(bits)
    assert [hilbert_index(x, y, bits) for x, y in curve] == list(range(4 ** bits))
    for a, b in zip(curve, curve[1:]):
        assert abs(a[0] - b[0]) + abs(a[1] - b[1]) == 1


def test_hilbert_single_point_and_degenerate():
    assert hilbert_order([GridMeta("a", 3.0, 4.0)]).permutation == (0,)
    with pytest.raises(DataError, match="degenerate"):
        hilbert_order([GridMeta("a", 3.0, 4.0), GridMeta("b", 3.0, 4.0)])
    with pytest.raises(DataError):
        hilbert_order([GridMeta("a", 3.0, 4.0), GridMeta("b", 1.0, 4.0)], order_bits=0)


@pytest.mark.parametrize("axis", ["lat", "lon"])
def test_hilbert_collinear_monotone(axis, rng):
    vals = rng.permutation(40).astype(float) * 0.37
    grids = [GridMeta(f"c{i:02d}", v if axis == "lat" else 0.0, v if axis == "lon" else 0.0)
             for i, v in enumerate(vals)]
    o = hilbert_order(grids, order_bits=8)
    ordered = [getattr(grids[i], axis) for i in o.permutation]
    # oracle: brute-force Hilbert index of each quantized cell
    side = 256
    cells = np.clip(np.floor(vals / vals.max() * side), 0, side - 1).astype(int)
    keys = [hilbert_curve_oracle(8).index((c, 0) if axis == "lat" else (0, c)) for c in cells]
    assert [grids[i].grid_id for i in o.permutation] == [grids[i].grid_id for i in np.lexsort(
        ([g.grid_id for g in grids], keys))]
    assert ordered == sorted(ordered)


def test_hilbert_tie_break_by_grid_id():
    grids = [GridMeta("b", 0.0, 0.0), GridMeta("a", 0.1, 0.1), GridMeta("c", 10.0, 10.0)]
    o = hilbert_order(grids, order_bits=1)
    assert [grids[i].grid_id for i in o.permutation] == ["a", "b", "c"]


def test_hilbert_locality_beats_random(rng):
    for trial in range(3):
        pts = rng.uniform(0, 30, size=(80, 2))
        grids = [GridMeta(f"r{i:03d}", *pt) for i, pt in enumerate(pts)]
        o = hilbert_order(grids, order_bits=10, stratify_by_zone=False)

        def mean_step(perm):
            q = pts[list(perm)]
            return np.linalg.norm(np.diff(q, axis=0), axis=1).mean()

        random_mean = np.mean([mean_step(rng.permutation(80)) for _ in range(20)])
        assert mean_step(o.permutation) < random_mean


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 15), st.integers(0, 15)), min_size=1, max_size=40, unique=True),
       st.booleans())
def test_orderings_are_permutations(cells, stratify):
    grids = [GridMeta(f"h{i}", float(a), float(b), 1 + (a % 3)) for i, (a, b) in enumerate(cells)]
    p = len(grids)
    for o in (spiral_order(grids, stratify),
              hilbert_order(grids, 4, stratify) if p > 1 else hilbert_order(grids, 4)):
        assert sorted(o.permutation) == list(range(p))


def test_apply_order(rng):
    grids = lattice_grids(2, 3, zones=1)
    v = rng.normal(size=(4, 6))
    x = StsMatrix(v, np.zeros_like(v, bool), np.datetime64("2000-01-01") + np.arange(4), grids)
    ident = apply_order(x, SpatialOrder(tuple(range(6)), "identity", False))
    np.testing.assert_array_equal(ident.values, v)
    assert ident.label == "D"
    rev = SpatialOrder(tuple(range(5, -1, -1)), "identity", False)
    twice = apply_order(apply_order(x, rev), rev)
    np.testing.assert_array_equal(twice.values, v)
    assert twice.columns == x.columns
    with pytest.raises(StructuralError):
        apply_order(x, SpatialOrder((0, 1), "identity", False))


def test_invalid_permutation_rejected():
    with pytest.raises(StructuralError):
        SpatialOrder((0, 0, 1), "spiral")


def test_order_table(grid3x3):
    t = order_table(grid3x3, spiral_order(grid3x3))
    assert list(t.columns) == ["rank", "grid_id", "lat", "lon", "zone"]
    assert t["rank"].tolist() == list(range(9))
