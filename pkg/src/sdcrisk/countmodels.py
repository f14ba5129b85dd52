"""Poisson and Negative Binomial conditional risk for sample uniques."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from scipy.special import gammaln

_SERIES_CUTOFF = 1e-5


@dataclass(frozen=True)
class PoissonPosterior:
    """``F - f | f ~ Poisson(mu)`` with ``mu = N * gamma * (1 - pi)``."""

    mu: float

    def __post_init__(self):
        _check_mu(self.mu)


@dataclass(frozen=True)
class NBLaw:
    """Negative Binomial counting failures before ``alpha`` successes."""

    alpha: float
    p: float

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise ValueError(f"alpha must be positive and finite, got {self.alpha}")
        if not 0 < self.p <= 1:
            raise ValueError(f"p must lie in (0, 1], got {self.p}")


def _check_mu(mu):
    mu = float(mu)
    if not math.isfinite(mu) or mu < 0:
        raise ValueError(f"rate must be finite and nonnegative, got {mu}")
    return mu


def poisson_p_unique(mu: float) -> float:
    """P(F = 1 | f = 1) = exp(-mu)."""
    return math.exp(-_check_mu(mu))


def poisson_e_inv(mu: float) -> float:
    """E[1/F | f = 1] = (1 - exp(-mu)) / mu, equal to 1 at mu = 0."""
    mu = _check_mu(mu)
    if mu < _SERIES_CUTOFF:
        return 1.0 - mu / 2.0 + mu * mu / 6.0
    return -math.expm1(-mu) / mu


def nb_logpmf(law: NBLaw, x: int) -> float:
    if x < 0:
        return -math.inf
    if law.p == 1.0:
        return 0.0 if x == 0 else -math.inf
    return (gammaln(x + law.alpha) - gammaln(x + 1.0) - gammaln(law.alpha)
            + x * math.log1p(-law.p) + law.alpha * math.log(law.p))


def nb_pmf(law: NBLaw, x: int) -> float:
    """Gamma(x+a)/(Gamma(x+1)Gamma(a)) (1-p)^x p^a, evaluated in log space."""
    return math.exp(nb_logpmf(law, int(x)))


def argus_p_unique(pi: float) -> float:
    """P(F = 1 | f = 1) when ``F - 1 ~ NB(1, pi)``."""
    return float(pi)


def argus_e_inv(pi: float) -> float:
    """E[1/F | f = 1] = -pi log(pi) / (1 - pi) when ``F - 1 ~ NB(1, pi)``."""
    pi = float(pi)
    if not 0 < pi <= 1:
        raise ValueError(f"pi must lie in (0, 1], got {pi}")
    q = 1.0 - pi
    if q < 1e-8:
        return 1.0 - q / 2.0
    return -pi * math.log(pi) / q


def sample_posterior_F_given_f1(model: Union[PoissonPosterior, NBLaw], seed=None,
                                size: Optional[int] = None):
    """Draw ``F | f = 1``.

    ``model`` is either a :class:`PoissonPosterior` or the ``NBLaw(1, pi)``
    remainder of the Argus model.  Returns an int, or an int array when
    ``size`` is given.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if isinstance(model, PoissonPosterior):
        extra = rng.poisson(model.mu, size=size)
    elif isinstance(model, NBLaw):
        if model.p == 1.0:
            extra = np.zeros(size, dtype=np.int64) if size is not None else 0
        else:
            extra = rng.negative_binomial(model.alpha, model.p, size=size)
    else:
        raise TypeError(f"unsupported posterior model {model!r}")
    if size is None:
        return 1 + int(extra)
    return 1 + np.asarray(extra, dtype=np.int64)
