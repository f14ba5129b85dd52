"""
Log-linear plug-in risk estimation.

Two models are supported: mutual independence of all attributes (closed
form) and all two-way interactions (iterative proportional fitting).  Fitted
cell probabilities are kept in factored form, ``log gamma_k = offset +
sum of terms[attrs](k[attrs])``, so they can be evaluated for individual
cells without materializing the full K-vector.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np

from .countmodels import poisson_e_inv, poisson_p_unique
from .risk import CellRisk, RiskEstimate
from .tables import CellKey, FreqTable, margin

logger = logging.getLogger(__name__)

# refuse to allocate IPF working arrays beyond this many cells
MAX_DENSE_CELLS = 50_000_000


@dataclass
class LoglinFit:
    model: str
    n: float
    terms: List[Tuple[Tuple[int, ...], np.ndarray]]
    offset: float = 0.0
    converged: bool = True
    iterations: int = 0
    max_margin_gap: float = 0.0
    loglik_history: List[float] = field(default_factory=list)

    def log_gamma(self, key: CellKey) -> float:
        s = self.offset
        for attrs, table in self.terms:
            s += table[tuple(key[i] for i in attrs)]
        return float(s)

    def gamma(self, key: CellKey) -> float:
        return math.exp(self.log_gamma(key))

    def fitted(self, key: CellKey) -> float:
        """Expected sample count n * gamma_k."""
        return self.n * self.gamma(key)


def _dense(f: FreqTable) -> np.ndarray:
    K = f.schema.K
    if K > MAX_DENSE_CELLS:
        raise MemoryError(f"table with K={K} cells is too large for dense fitting")
    arr = np.zeros(f.schema.levels)
    for k, v in f.counts.items():
        arr[k] = v
    return arr


def fit_independence(f: FreqTable) -> LoglinFit:
    """gamma_k = prod_i margin_i(k_i) / n."""
    n = f.total
    if n <= 0:
        raise ValueError("cannot fit an empty table")
    terms = []
    for i in range(f.schema.m):
        mi = np.zeros(f.schema.attributes[i].levels)
        for (lev,), v in margin(f, [i]).counts.items():
            mi[lev] = v
        with np.errstate(divide="ignore"):
            terms.append(((i,), np.log(mi / n)))
    return LoglinFit("independence", float(n), terms)


def _loglik(obs: np.ndarray, mu: np.ndarray) -> float:
    pos = obs > 0
    return float(np.sum(obs[pos] * np.log(mu[pos])) - mu.sum())


def fit_two_way(f: FreqTable, tol: float = 1e-8, max_iter: int = 1000) -> LoglinFit:
    """All-two-way-interaction model by iterative proportional fitting.

    Starts from the uniform table and cycles through every pairwise margin;
    stops when the largest absolute gap between fitted and observed pairwise
    margins is at most ``tol``.  With two attributes the model is saturated
    and the observed table is returned as the fit.
    """
    n = f.total
    if n <= 0:
        raise ValueError("cannot fit an empty table")
    m = f.schema.m
    if m < 2:
        raise ValueError("two-way model needs at least two attributes")
    obs = _dense(f)
    if m == 2:
        with np.errstate(divide="ignore"):
            table = np.log(obs / n)
        return LoglinFit("two-way", float(n), [((0, 1), table)], loglik_history=[_loglik(obs, obs)])

    pairs = list(itertools.combinations(range(m), 2))
    axes_other = {p: tuple(a for a in range(m) if a not in p) for p in pairs}
    obs_marg = {p: obs.sum(axis=axes_other[p]) for p in pairs}
    mu = np.full(obs.shape, n / obs.size)
    log_u = {p: np.zeros(obs_marg[p].shape) for p in pairs}
    offset = math.log(1.0 / obs.size)

    def gap():
        return max(float(np.max(np.abs(mu.sum(axis=axes_other[p]) - obs_marg[p]))) for p in pairs)

    history = [_loglik(obs, mu)]
    current = gap()
    it = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        while current > tol and it < max_iter:
            for p in pairs:
                fit_m = mu.sum(axis=axes_other[p])
                ratio = np.where(fit_m > 0, obs_marg[p] / fit_m, 0.0)
                shape = [1] * m
                shape[p[0]], shape[p[1]] = ratio.shape
                mu *= ratio.reshape(shape)
                log_u[p] = log_u[p] + np.log(ratio)
            it += 1
            history.append(_loglik(obs, mu))
            current = gap()
    converged = current <= tol
    if not converged:
        logger.warning("IPF did not converge in %d cycles (gap %.3g)", max_iter, current)
    terms = [(p, log_u[p]) for p in pairs]
    return LoglinFit("two-way", float(n), terms, offset=offset, converged=converged,
                     iterations=it, max_margin_gap=current, loglik_history=history)


def loglin_estimate(fit: LoglinFit, f: FreqTable, N: float, pi: float) -> RiskEstimate:
    """Plug fitted gamma_k into the Poisson risk formulas with ``mu = N gamma_k (1 - pi)``."""
    if not 0 < pi < 1:
        raise ValueError(f"sampling fraction must lie in (0, 1), got {pi}")
    cells = []
    for k, v in f.items():
        if v != 1:
            continue
        mu = N * fit.gamma(k) * (1.0 - pi)
        cells.append(CellRisk(k, poisson_p_unique(mu), poisson_e_inv(mu), rate=mu))
    diag = {"converged": fit.converged, "iterations": fit.iterations,
            "max_margin_gap": fit.max_margin_gap}
    return RiskEstimate(f"loglin-{fit.model}", cells, diag)
