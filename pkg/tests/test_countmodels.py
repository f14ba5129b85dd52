import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from sdcrisk.countmodels import (NBLaw, PoissonPosterior, argus_e_inv, nb_pmf, poisson_e_inv,
                                 poisson_p_unique, sample_posterior_F_given_f1)

# mpmath, 30 digits
EXP_M2 = 0.135335283236612691894
ONE_MINUS_EXP_M1 = 0.632120558828557678404


def test_poisson_p_unique_values():
    assert poisson_p_unique(0) == 1.0
    assert poisson_p_unique(math.log(2)) == pytest.approx(0.5, rel=1e-15)
    assert poisson_p_unique(2.0) == pytest.approx(EXP_M2, rel=1e-15)


def test_poisson_e_inv_values():
    assert poisson_e_inv(0) == 1.0
    assert poisson_e_inv(1.0) == pytest.approx(ONE_MINUS_EXP_M1, rel=1e-15)
    assert abs(poisson_e_inv(1e-12) - 1.0) < 1e-9


def test_poisson_e_inv_series_branch_is_continuous():
    lo = poisson_e_inv(1e-5 * (1 - 1e-12))
    hi = poisson_e_inv(1e-5 * (1 + 1e-12))
    assert abs(lo - hi) < 1e-12


@pytest.mark.parametrize("bad", [-1e-3, math.inf, math.nan])
def test_poisson_rejects_bad_rate(bad):
    with pytest.raises(ValueError):
        poisson_p_unique(bad)
    with pytest.raises(ValueError):
        poisson_e_inv(bad)
    with pytest.raises(ValueError):
        PoissonPosterior(bad)


@given(st.floats(0, 700, allow_nan=False))
def test_e_inv_bounds(mu):
    e = poisson_e_inv(mu)
    assert 0 < e <= 1
    assert e >= poisson_p_unique(mu)
    if mu > 1e-6:
        assert e > poisson_p_unique(mu)


@given(st.floats(0, 50), st.floats(0, 50))
def test_e_inv_decreasing(a, b):
    lo, hi = sorted((a, b))
    assert poisson_e_inv(hi) <= poisson_e_inv(lo) + 1e-15


def test_nb_pmf_values():
    assert nb_pmf(NBLaw(1, 0.5), 0) == pytest.approx(0.5, rel=1e-14)
    assert nb_pmf(NBLaw(1, 0.5), 3) == pytest.approx(0.0625, rel=1e-14)
    assert nb_pmf(NBLaw(2, 0.3), 2) == pytest.approx(0.1323, rel=1e-13)


def test_nb_pmf_against_monte_carlo():
    draws = np.random.default_rng(11).negative_binomial(2, 0.3, size=1_000_000)
    freq = np.mean(draws == 2)
    se = math.sqrt(0.1323 * (1 - 0.1323) / 1_000_000)
    assert abs(freq - nb_pmf(NBLaw(2, 0.3), 2)) < 4 * se


@pytest.mark.parametrize("alpha,p", [(1, 0.5), (2, 0.3), (0.4, 0.05), (7.5, 0.9)])
def test_nb_pmf_sums_to_one(alpha, p):
    law = NBLaw(alpha, p)
    total, x = 0.0, 0
    while True:
        px = nb_pmf(law, x)
        total += px
        # tail beyond x is below px * ratio / (1 - ratio) once the pmf is decreasing
        ratio = (x + 1 + alpha - 1) / (x + 1) * (1 - p)
        if x > alpha and ratio < 1 and px * ratio / (1 - ratio) < 1e-12:
            break
        x += 1
    assert total == pytest.approx(1.0, abs=1e-9)


def test_nblaw_validation():
    with pytest.raises(ValueError):
        NBLaw(0, 0.5)
    with pytest.raises(ValueError):
        NBLaw(1, 0)
    with pytest.raises(ValueError):
        NBLaw(1, 1.5)


def test_argus_closed_form_values():
    assert argus_e_inv(1.0) == 1.0
    assert argus_e_inv(0.5) == pytest.approx(math.log(2), rel=1e-15)
    assert argus_e_inv(0.01) == pytest.approx(0.0465168705655362764, rel=1e-14)
    # series branch near 1 joins the closed form smoothly
    assert argus_e_inv(1 - 1e-9) == pytest.approx(1 - 5e-10, rel=1e-15)
    assert argus_e_inv(1 - 2e-8) == pytest.approx(1 - 1e-8, abs=1e-15)


def test_sampler_degenerate_and_seeded():
    assert sample_posterior_F_given_f1(PoissonPosterior(0.0), seed=1) == 1
    assert np.all(sample_posterior_F_given_f1(PoissonPosterior(0.0), seed=1, size=100) == 1)
    a = sample_posterior_F_given_f1(PoissonPosterior(2.0), seed=5, size=50)
    b = sample_posterior_F_given_f1(PoissonPosterior(2.0), seed=5, size=50)
    assert np.array_equal(a, b)
    assert np.all(sample_posterior_F_given_f1(NBLaw(1, 1.0), seed=2, size=10) == 1)


def test_sampler_poisson_mean():
    draws = sample_posterior_F_given_f1(PoissonPosterior(2.0), seed=123, size=1_000_000)
    assert abs(draws.mean() - 3.0) < 0.01


def test_sampler_nb_p_unique():
    draws = sample_posterior_F_given_f1(NBLaw(1, 0.5), seed=321, size=1_000_000)
    assert abs(np.mean(draws == 1) - 0.5) < 0.002
