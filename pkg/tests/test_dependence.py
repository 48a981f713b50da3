import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coreassoc.errors import (DataError, DuplicateCellError, InsufficientDataError,
                              StructuralError, ZeroVarianceError)
from coreassoc.ingest import GridMeta
from coreassoc.linalg import AssociationMatrix
from coreassoc.dependence import (WeightMatrix, bergsma_matrix, bergsma_matrix_naive, bergsma_rho,
                                  make_weights, morans_i, spatial_bergsma, weights_expdecay,
                                  weights_lag1)
from coreassoc.synthetic import as_sts, lattice_grids

from conftest import path_grids


def brute_kappa(x, y):
    """Pure-Python double loop over (i, j); inner sums over k and (k, l) written out."""
    t = len(x)

    def kernel(v):
        grand = sum(abs(v[k] - v[l]) for k in range(t) for l in range(t))
        row = [sum(abs(v[i] - v[k]) for k in range(t)) for i in range(t)]
        return [[-0.5 * abs(v[i] - v[j]) + row[i] / (2 * t) + row[j] / (2 * t) - grand / (2 * t * t)
                 for j in range(t)] for i in range(t)]

    hx, hy = kernel(x), kernel(y)
    return sum(hx[i][j] * hy[i][j] for i in range(t) for j in range(t)) / (t * t)


def brute_rho(x, y):
    return brute_kappa(x, y) / math.sqrt(brute_kappa(x, x) * brute_kappa(y, y))


def test_bergsma_matches_brute_force(rng):
    for _ in range(25):
        t = int(rng.integers(4, 41))
        x = rng.normal(size=t)
        y = 0.5 * x ** 2 + rng.normal(size=t)
        assert bergsma_rho(x, y) == pytest.approx(brute_rho(list(x), list(y)), abs=1e-12)


def test_bergsma_ties_match_brute_force(rng):
    x = rng.integers(0, 3, 20).astype(float)
    y = rng.integers(0, 4, 20).astype(float)
    assert bergsma_rho(x, y) == pytest.approx(brute_rho(list(x), list(y)), abs=1e-12)


def test_bergsma_self_is_one(rng):
    for t in (4, 17, 300):
        x = rng.normal(size=t)
        assert bergsma_rho(x, x) == 1.0


def test_bergsma_symmetric(rng):
    x, y = rng.normal(size=(2, 60))
    assert abs(bergsma_rho(x, y) - bergsma_rho(y, x)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.01, 100.0), b=st.floats(-100.0, 100.0), seed=st.integers(0, 10_000))
def test_bergsma_affine_invariance(a, b, seed):
    r = np.random.default_rng(seed)
    x, y = r.normal(size=(2, 30))
    assert bergsma_rho(a * x + b, y) == pytest.approx(bergsma_rho(x, y), abs=1e-10)
    assert bergsma_rho(x, a * y + b) == pytest.approx(bergsma_rho(x, y), abs=1e-10)


def test_bergsma_detects_nonlinear_dependence(rng):
    x = rng.uniform(-1, 1, 500)
    y = x ** 2
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.15
    assert bergsma_rho(x, y) > 0.2


def test_bergsma_independence():
    vals = [bergsma_rho(*np.random.default_rng(s).normal(size=(2, 2000))) for s in range(20)]
    assert abs(np.mean(vals)) < 0.02


def test_bergsma_errors():
    with pytest.raises(InsufficientDataError):
        bergsma_rho([1.0, 2.0, 3.0], [3.0, 1.0, 2.0])
    with pytest.raises(ZeroVarianceError):
        bergsma_rho(np.ones(10), np.arange(10.0))
    with pytest.raises(StructuralError):
        bergsma_rho(np.arange(5.0), np.arange(6.0))


def test_bergsma_matrix_blocked_equals_naive(rng):
    for p, t in ((2, 10), (6, 57), (10, 100)):
        x = as_sts(rng.normal(size=(t, p)), path_grids(p))
        naive = bergsma_matrix_naive(x).m
        for block in (8 * p * t, 8 * p * t * 7, 64 * 2 ** 20):
            fast = bergsma_matrix(x, block_bytes=block).m
            np.testing.assert_allclose(fast, naive, atol=1e-12, rtol=0)
        assert np.array_equal(bergsma_matrix(x, jobs=3, block_bytes=8 * p * t).m,
                              bergsma_matrix(x, jobs=1, block_bytes=8 * p * t).m)


def test_bergsma_matrix_identical_columns(rng):
    c = rng.normal(size=40)
    x = as_sts(np.column_stack([c, c, c]), path_grids(3))
    np.testing.assert_allclose(bergsma_matrix(x).m, np.ones((3, 3)), atol=1e-12)


def test_bergsma_matrix_independent_pair(rng):
    m = bergsma_matrix(as_sts(rng.normal(size=(2000, 2)), path_grids(2))).m
    assert abs(m[0, 1]) < 0.05


def test_bergsma_matrix_constant_column(rng):
    v = rng.normal(size=(20, 3))
    v[:, 1] = 2.0
    with pytest.raises(ZeroVarianceError, match="p1"):
        bergsma_matrix(as_sts(v, path_grids(3)))


def test_lag1_pair():
    w = weights_lag1(path_grids(2))
    np.testing.assert_array_equal(w.w, [[0, 1], [1, 0]])


def test_lag1_rook_and_queen(grid3x3):
    rook = weights_lag1(grid3x3, "rook", row_standardize=False).w
    queen = weights_lag1(grid3x3, "queen", row_standardize=False).w
    assert rook[4].sum() == 4 and queen[4].sum() == 8
    assert rook[0].sum() == 2 and queen[0].sum() == 3
    np.testing.assert_array_equal(rook, rook.T)
    std = weights_lag1(grid3x3)
    np.testing.assert_allclose(std.w.sum(axis=1), 1.0, atol=1e-10)
    assert np.all(np.diag(std.w) == 0)


def test_lag1_isolated_grid():
    grids = path_grids(2) + [GridMeta("far", 20.0, 90.0, 1)]
    w = weights_lag1(grids)
    assert w.isolated == (2,)
    assert np.all(w.w[2] == 0)


def test_lag1_duplicate_cell():
    grids = path_grids(2) + [GridMeta("dup", 10.0, 70.0, 1)]
    with pytest.raises(DuplicateCellError):
        weights_lag1(grids)
    with pytest.raises(DataError):
        weights_lag1(path_grids(2), rule="bishop")


def test_expdecay_two_grids():
    grids = [GridMeta("a", 0.0, 0.0), GridMeta("b", 3.0, 4.0)]
    raw = weights_expdecay(grids, theta=5.0, row_standardize=False).w
    assert raw[0, 1] == pytest.approx(math.exp(-1))
    np.testing.assert_array_equal(weights_expdecay(grids, theta=5.0).w, [[0, 1], [1, 0]])


def test_expdecay_three_collinear_hand_computed():
    w = weights_expdecay(path_grids(3), theta=1.0).w
    e1, e2 = math.exp(-1), math.exp(-2)
    expected = np.array([[0, e1 / (e1 + e2), e2 / (e1 + e2)],
                         [0.5, 0, 0.5],
                         [e2 / (e1 + e2), e1 / (e1 + e2), 0]])
    np.testing.assert_allclose(w, expected, atol=1e-15)


def test_expdecay_large_theta_uniform(grid3x3):
    w = weights_expdecay(grid3x3, theta=1e9).w
    off = ~np.eye(9, dtype=bool)
    np.testing.assert_allclose(w[off], 1 / 8, atol=1e-8)


def test_expdecay_errors():
    with pytest.raises(DataError, match="coincide"):
        weights_expdecay([GridMeta("a", 1.0, 1.0), GridMeta("b", 1.0, 1.0)])
    with pytest.raises(DataError):
        weights_expdecay(path_grids(2), theta=0.0)
    with pytest.raises(DataError):
        make_weights(path_grids(2), "gaussian")
    assert make_weights(path_grids(2), "expdecay").scheme == "exp_decay"


def test_spatial_bergsma_hand_case():
    m = np.array([[1, 0.5, 0], [0.5, 1, 0.5], [0, 0.5, 1]])
    w = weights_lag1(path_grids(3))
    assert spatial_bergsma(AssociationMatrix(m, "bergsma"), w) == pytest.approx(0.5, abs=1e-12)


def test_spatial_bergsma_small_cases():
    w = weights_lag1(path_grids(2))
    assert spatial_bergsma(AssociationMatrix(np.array([[1, 0.3], [0.3, 1]]), "bergsma"), w) == pytest.approx(0.3)
    assert spatial_bergsma(AssociationMatrix(np.eye(2), "pearson"), w) == 0.0
    with pytest.raises(StructuralError):
        spatial_bergsma(AssociationMatrix(np.eye(3), "pearson"), w)


def test_spatial_bergsma_linear(rng, grid3x3):
    w = weights_expdecay(grid3x3)
    a, b = rng.uniform(-1, 1, (2, 9, 9))
    a, b = a + a.T, b + b.T
    lhs = spatial_bergsma(AssociationMatrix(2.0 * a - 0.5 * b, "x"), w)
    rhs = 2.0 * spatial_bergsma(AssociationMatrix(a, "x"), w) - 0.5 * spatial_bergsma(AssociationMatrix(b, "x"), w)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_morans_i_alternating_path():
    assert morans_i([1, -1, 1, -1], weights_lag1(path_grids(4))) == pytest.approx(-1.0, abs=1e-12)


def test_morans_i_clusters():
    # two disconnected pairs {0,1} and {2,3}
    w = WeightMatrix(np.kron(np.eye(2), [[0.0, 1.0], [1.0, 0.0]]), "lag1_adjacency", True)
    assert morans_i([5, 5, -5, -5], w) == pytest.approx(1.0)


def test_morans_i_permutation_mean(rng):
    grids = lattice_grids(6, 6, zones=1)
    w = weights_lag1(grids)
    v = rng.normal(size=36)
    vals = [morans_i(rng.permutation(v), w) for _ in range(400)]
    se = np.std(vals) / np.sqrt(len(vals))
    assert abs(np.mean(vals) + 1 / 35) < 4 * se


def test_morans_i_errors():
    w = weights_lag1(path_grids(3))
    with pytest.raises(ZeroVarianceError):
        morans_i([1, 1, 1], w)
    with pytest.raises(DataError):
        morans_i([1, 2, 3], WeightMatrix(np.zeros((3, 3)), "lag1_adjacency", True))
    with pytest.raises(StructuralError):
        morans_i([1, 2], w)
