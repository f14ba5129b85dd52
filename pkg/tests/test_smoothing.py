import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import count_offsets, grid_maximize, local_loglik
from sdcrisk.countmodels import poisson_e_inv, poisson_p_unique
from sdcrisk.smoothing import (LocalSmoother, NeighborhoodSpec, NewtonOptions, design_matrix,
                               design_row, fit_poisson_local, local_mle, neighborhood,
                               neighborhood_offsets, smooth_estimate)
from sdcrisk.tables import FreqTable, SchemaError, TableSchema


@pytest.mark.parametrize("m,fixed,c,d,size", [
    (2, (), 3, None, 49),
    (3, (0,), 3, None, 49),
    (4, (0,), 2, None, 125),
    (5, (0,), 2, 6, 545),
    (5, (0,), 2, 8, 625),
    (5, (0,), 3, 6, 1025),
    (6, (0,), 2, 4, 581),
    (6, (0,), 2, 6, 1893),
])
def test_neighborhood_sizes(m, fixed, c, d, size):
    assert len(neighborhood_offsets(m, NeighborhoodSpec(frozenset(fixed), c, d))) == size


@given(st.integers(1, 5), st.integers(0, 2), st.integers(1, 3), st.one_of(st.none(), st.integers(0, 9)))
@settings(max_examples=80, deadline=None)
def test_neighborhood_size_matches_generating_function(m, n_fixed, c, d):
    n_fixed = min(n_fixed, m - 1)
    if d is not None and d < c:
        d = c
    spec = NeighborhoodSpec(frozenset(range(n_fixed)), c, d)
    offs = neighborhood_offsets(m, spec)
    assert len(offs) == count_offsets(m - n_fixed, c, d)
    assert len({tuple(o) for o in offs.tolist()}) == len(offs)
    assert np.all(offs[:, :n_fixed] == 0)


def test_neighborhood_includes_virtual_cells_and_shrinks():
    schema = TableSchema.from_levels([5, 5])
    cells = neighborhood((0, 0), NeighborhoodSpec(c=1), schema)
    assert len(cells) == 9 and (-1, -1) in cells
    assert cells == sorted(cells)
    shrunk = neighborhood((0, 0), NeighborhoodSpec(c=1, boundary="shrink"), schema)
    assert sorted(shrunk) == [(0, 0), (0, 1), (1, 0), (1, 1)]


def test_spec_validation():
    with pytest.raises(ValueError):
        NeighborhoodSpec(c=3, d=2)
    with pytest.raises(ValueError):
        NeighborhoodSpec(t=0)
    schema = TableSchema.from_levels([2, 10], ["sex", "age"], ordinal=[False, True])
    with pytest.raises(SchemaError, match="sex"):
        NeighborhoodSpec(c=2).validate(schema)
    NeighborhoodSpec(frozenset({0}), c=2).validate(schema)


def test_design_rows():
    spec2 = NeighborhoodSpec(c=3, t=2)
    assert design_row((4, 4), (4, 4), spec2).tolist() == [1, 0, 0, 0, 0]
    assert design_row((5, 2), (4, 4), spec2).tolist() == [1, 1, 1, -2, 4]
    assert design_row((7, 4), (4, 4), NeighborhoodSpec(c=3, t=1)).tolist() == [1, 3, 0]
    fixed = NeighborhoodSpec(frozenset({0}), c=1, t=2)
    assert len(design_row((0, 1, 1), (0, 0, 0), fixed)) == 1 + 2 * 2


def test_design_matrix_matches_rows():
    spec = NeighborhoodSpec(frozenset({1}), c=2, d=3, t=3)
    offs = neighborhood_offsets(3, spec)
    X = design_matrix(offs, spec)
    for o, row in zip(offs, X):
        assert np.array_equal(row, design_row(tuple(o), (0, 0, 0), spec))


def test_constant_neighborhood_fit():
    schema = TableSchema.from_levels([9, 9])
    f = FreqTable(schema, {(i, j): 3 for i in range(9) for j in range(9)})
    fit = local_mle(f, (4, 4), NeighborhoodSpec(c=2, t=2))
    assert fit.converged
    assert fit.lambda_hat == pytest.approx(3.0, rel=1e-10)
    assert np.allclose(fit.coeffs[1:], 0, atol=1e-9)


def test_one_dimensional_closed_form():
    # f = (1, 2, 4) at offsets (-1, 0, 1): score equations give exp(b0) = 2, b1 = log 2
    schema = TableSchema.from_levels([3])
    f = FreqTable(schema, {(0,): 1, (1,): 2, (2,): 4})
    fit = local_mle(f, (1,), NeighborhoodSpec(c=1, t=1))
    assert fit.lambda_hat == pytest.approx(2.0, rel=1e-10)
    assert fit.coeffs[1] == pytest.approx(math.log(2), rel=1e-10)
    X = design_matrix(neighborhood_offsets(1, NeighborhoodSpec(c=1, t=1)), NeighborhoodSpec(c=1, t=1))
    grid = grid_maximize(X, np.array([1.0, 2.0, 4.0]), start=[0.0, 0.0])
    assert math.exp(grid[0]) == pytest.approx(fit.lambda_hat, rel=1e-6)


def random_table(rng, levels, rate):
    arr = rng.poisson(rate, size=levels)
    schema = TableSchema.from_levels(levels)
    return FreqTable(schema, {k: int(v) for k, v in np.ndenumerate(arr)})


@pytest.mark.parametrize("seed", range(6))
def test_newton_agrees_with_grid_oracle(seed):
    rng = np.random.default_rng(seed)
    f = random_table(rng, (7, 7), rng.uniform(1, 4))
    spec = NeighborhoodSpec(c=2, t=1)
    sm = LocalSmoother(f, spec)
    center = tuple(rng.integers(0, 7, size=2).tolist())
    fit = sm.fit(center)
    y, _ = sm.local_counts(center)
    grid = grid_maximize(sm.X, y, start=[math.log(max(y.mean(), 0.1)), 0, 0])
    assert fit.converged
    assert math.exp(grid[0]) == pytest.approx(fit.lambda_hat, rel=1e-6)
    assert local_loglik(fit.coeffs, sm.X, y) >= local_loglik(grid, sm.X, y) - 1e-9


def test_moment_identity_and_monotone_objective():
    rng = np.random.default_rng(3)
    f = random_table(rng, (10, 6, 4), 0.7)
    spec = NeighborhoodSpec(frozenset(), c=2, d=4, t=2)
    sm = LocalSmoother(f, spec)
    for center in list(f.counts)[:40]:
        fit = sm.fit(center)
        y, _ = sm.local_counts(center)
        lam = np.exp(sm.X @ fit.coeffs)
        assert fit.converged
        assert abs(lam.sum() - y.sum()) <= 1e-6 * y.sum()
        h = np.array(fit.history)
        assert np.all(np.diff(h) >= -1e-12 * (np.abs(h[1:]) + 1))
        assert fit.lambda_hat == math.exp(fit.coeffs[0])


def test_isolated_unique_triggers_terminating_fit():
    schema = TableSchema.from_levels([9, 9])
    f = FreqTable(schema, {(4, 4): 1})
    fit = local_mle(f, (4, 4), NeighborhoodSpec(c=3, t=2))
    assert fit.converged
    assert fit.lambda_hat == pytest.approx(1.0, rel=1e-6)
    assert np.all(np.isfinite(fit.coeffs))


def test_ridge_fallback_is_flagged():
    # tight condition limit forces the fallback on an otherwise ordinary fit
    X = design_matrix(neighborhood_offsets(1, NeighborhoodSpec(c=3, t=2)), NeighborhoodSpec(c=3, t=2))
    y = np.array([0, 0, 0, 1, 0, 0, 0], dtype=float)
    alpha, it, gnorm, conv, ridged, hist = fit_poisson_local(X, y, NewtonOptions(cond_limit=10.0))
    assert ridged and conv
    lam = np.exp(X @ alpha)
    assert abs(lam.sum() - 1.0) < 1e-6


def test_hessian_negative_definite_along_path():
    rng = np.random.default_rng(12)
    f = random_table(rng, (8, 8), 1.5)
    sm = LocalSmoother(f, NeighborhoodSpec(c=3, t=2))
    fit = sm.fit((3, 5))
    lam = np.exp(sm.X @ fit.coeffs)
    H = -(sm.X.T * lam) @ sm.X
    assert np.all(np.linalg.eigvalsh(H) < 0)


def test_translation_invariance():
    rng = np.random.default_rng(5)
    arr = rng.poisson(2.0, size=(8, 8))
    big = np.zeros((14, 12), dtype=int)
    big[3:11, 2:10] = arr
    f1 = FreqTable(TableSchema.from_levels([14, 12]),
                   {k: int(v) for k, v in np.ndenumerate(big)})
    big2 = np.zeros((14, 12), dtype=int)
    big2[5:13, 3:11] = arr
    f2 = FreqTable(TableSchema.from_levels([14, 12]),
                   {k: int(v) for k, v in np.ndenumerate(big2)})
    spec = NeighborhoodSpec(c=2, t=2)
    a = local_mle(f1, (3 + 4, 2 + 4), spec)
    b = local_mle(f2, (5 + 4, 3 + 4), spec)
    assert a.lambda_hat == pytest.approx(b.lambda_hat, rel=1e-12)


def test_smooth_estimate_no_uniques():
    f = FreqTable(TableSchema.from_levels([4, 4]), {(1, 1): 3})
    est = smooth_estimate(f, NeighborhoodSpec(c=1), pi=0.3)
    assert (est.tau1, est.tau2) == (0, 0)


def test_smooth_estimate_uniform_ones():
    schema = TableSchema.from_levels([6, 5])
    f = FreqTable(schema, {(i, j): 1 for i in range(6) for j in range(5)})
    # shrink mode keeps every neighborhood all-ones so each fit is exactly lambda = 1
    est = smooth_estimate(f, NeighborhoodSpec(c=2, t=2, boundary="shrink"), pi=0.5)
    K = schema.K
    assert est.tau1 == pytest.approx(K * math.exp(-1), rel=1e-9)
    assert est.tau2 == pytest.approx(K * (1 - math.exp(-1)), rel=1e-9)


def test_smooth_estimate_bounds_and_consistency():
    rng = np.random.default_rng(8)
    f = random_table(rng, (16, 10), 0.6)
    est, fits = smooth_estimate(f, NeighborhoodSpec(c=3, t=2), pi=0.1, return_fits=True)
    assert est.n_uniques == len(fits) == sum(1 for v in f.counts.values() if v == 1)
    assert est.tau1 <= est.tau2 <= est.n_uniques
    for cell, fit in zip(est.cells, fits):
        mu = fit.lambda_hat * 9.0
        assert cell.p_unique == poisson_p_unique(mu)
        assert cell.e_inv == poisson_e_inv(mu)
        assert 0 < cell.p_unique <= cell.e_inv <= 1
    with pytest.raises(ValueError):
        smooth_estimate(f, NeighborhoodSpec(c=3), pi=1.0)
