"""
Local smoothing-polynomial estimation of Poisson cell rates.

For every sample unique ``k`` a Poisson log-linear model

    log lambda_{k'} = b0 + sum_i sum_{j=1..t} b_ij (k'_i - k_i)^j

is fitted by maximum likelihood to the sample counts in a neighborhood of
``k``.  The fitted rate at the center, ``exp(b0)``, estimates the sample cell
mean, which is turned into population-uniqueness risk with the Poisson
formulas at ``mu = lambda (1 - pi) / pi``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import FrozenSet, List, Optional, Sequence

import numpy as np

from .countmodels import poisson_e_inv, poisson_p_unique
from .risk import CellRisk, RiskEstimate
from .tables import CellKey, FreqTable, SchemaError, TableSchema, sample_uniques

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NeighborhoodSpec:
    """Which cells count as close to a target cell.

    Attributes in ``fixed_attrs`` are held at the target's level.  Every other
    attribute moves at most ``c`` levels; if ``d`` is set the total absolute
    movement is at most ``d``.  ``t`` is the polynomial degree.
    ``boundary`` is ``"zero"`` (out-of-range cells enter with count 0) or
    ``"shrink"`` (they are dropped).
    """

    fixed_attrs: FrozenSet[int] = frozenset()
    c: int = 3
    d: Optional[int] = None
    t: int = 2
    boundary: str = "zero"

    def __post_init__(self):
        object.__setattr__(self, "fixed_attrs", frozenset(int(i) for i in self.fixed_attrs))
        if self.t < 1:
            raise ValueError(f"polynomial degree must be >= 1, got {self.t}")
        if self.c < 0:
            raise ValueError(f"box radius must be >= 0, got {self.c}")
        if self.d is not None and self.d < self.c:
            raise ValueError(f"L1 budget d={self.d} must be >= c={self.c}")
        if self.boundary not in ("zero", "shrink"):
            raise ValueError(f"unknown boundary mode {self.boundary!r}")

    def varying(self, m: int) -> List[int]:
        return [i for i in range(m) if i not in self.fixed_attrs]

    def validate(self, schema: TableSchema) -> None:
        bad = [i for i in self.fixed_attrs if not 0 <= i < schema.m]
        if bad:
            raise SchemaError(f"fixed attribute indices {bad} out of range for m={schema.m}")
        var = self.varying(schema.m)
        if var and self.c < 1:
            raise ValueError("box radius c must be >= 1 when any attribute varies")
        nominal = [schema.attributes[i].name for i in var if not schema.attributes[i].ordinal]
        if nominal:
            raise SchemaError(f"non-ordinal attributes {nominal} must be fixed in the neighborhood")


def neighborhood_offsets(m: int, spec: NeighborhoodSpec) -> np.ndarray:
    """All admissible offset vectors, shape (|M|, m), in lexicographic order."""
    var = spec.varying(m)
    rng = range(-spec.c, spec.c + 1)
    rows = []
    for off in itertools.product(rng, repeat=len(var)):
        if spec.d is not None and sum(abs(o) for o in off) > spec.d:
            continue
        full = [0] * m
        for i, o in zip(var, off):
            full[i] = o
        rows.append(full)
    return np.array(rows, dtype=np.int64).reshape(len(rows), m)


def neighborhood(center: CellKey, spec: NeighborhoodSpec, schema: TableSchema) -> List[CellKey]:
    """Cells around ``center``, including out-of-range virtual cells unless
    the boundary mode is ``"shrink"``."""
    center = schema.check_key(center)
    cells = [tuple(int(x) for x in row) for row in neighborhood_offsets(schema.m, spec) + np.array(center)]
    if spec.boundary == "shrink":
        cells = [k for k in cells if schema.contains(k)]
    return cells


def design_row(kprime: Sequence[int], center: Sequence[int], spec: NeighborhoodSpec) -> np.ndarray:
    """(1, then (k'_i - k_i)^j for j = 1..t, for each varying attribute i)."""
    m = len(center)
    row = [1.0]
    for i in spec.varying(m):
        delta = float(kprime[i] - center[i])
        row.extend(delta ** j for j in range(1, spec.t + 1))
    return np.array(row)


def design_matrix(offsets: np.ndarray, spec: NeighborhoodSpec) -> np.ndarray:
    m = offsets.shape[1]
    var = spec.varying(m)
    cols = [np.ones(len(offsets))]
    for i in var:
        delta = offsets[:, i].astype(float)
        cols.extend(delta ** j for j in range(1, spec.t + 1))
    return np.column_stack(cols)


_ROUNDING = 1e-13


@dataclass(frozen=True)
class NewtonOptions:
    tol: float = 1e-8
    max_iter: int = 100
    max_halvings: int = 30
    ridge: float = 1e-8
    cond_limit: float = 1e12


@dataclass
class LocalFit:
    center: CellKey
    coeffs: np.ndarray
    lambda_hat: float
    iterations: int
    grad_norm: float
    converged: bool
    ridged: bool = False
    loglik: float = float("nan")
    history: List[float] = field(default_factory=list, repr=False)


def _objective(X, y, alpha, ridge):
    eta = X @ alpha
    lam = np.exp(eta)
    pen = ridge * float(alpha[1:] @ alpha[1:])
    return float(y @ eta - lam.sum()) - pen, lam


def fit_poisson_local(X: np.ndarray, y: np.ndarray, opts: NewtonOptions = NewtonOptions()):
    """Maximize sum(y * X a - exp(X a)) by damped Newton.

    Returns ``(alpha, iterations, grad_norm, converged, ridged, history)``.
    When the negative Hessian becomes ill-conditioned (the MLE runs off to
    infinity along some direction) a small ridge penalty on the non-intercept
    coefficients is switched on for the rest of the fit; the intercept stays
    unpenalized so the fitted rates still sum to the observed total.
    """
    p = X.shape[1]
    alpha = np.zeros(p)
    alpha[0] = math.log(max(float(y.mean()), 1.0 / (2 * len(y))))
    ridge = 0.0
    ridged = False
    pen_diag = np.ones(p)
    pen_diag[0] = 0.0
    obj, lam = _objective(X, y, alpha, ridge)
    history = [obj]
    converged = False
    gnorm = math.inf
    it = 0
    for it in range(1, opts.max_iter + 1):
        grad = X.T @ (y - lam) - 2 * ridge * pen_diag * alpha
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= opts.tol:
            converged = True
            it -= 1
            break
        info = (X.T * lam) @ X + np.diag(2 * ridge * pen_diag)
        if not ridged and np.linalg.cond(info) > opts.cond_limit:
            ridged = True
            ridge = opts.ridge
            obj, lam = _objective(X, y, alpha, ridge)
            grad = X.T @ (y - lam) - 2 * ridge * pen_diag * alpha
            info = info + np.diag(2 * ridge * pen_diag)
        try:
            step = np.linalg.solve(info, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(info, grad, rcond=None)[0]
        # objective differences below rounding noise count as no decrease
        slack = _ROUNDING * (abs(obj) + float(lam.sum()))
        scale = 1.0
        for _ in range(opts.max_halvings + 1):
            cand = alpha + scale * step
            new_obj, new_lam = _objective(X, y, cand, ridge)
            if np.isfinite(new_obj) and new_obj >= obj - slack:
                break
            scale *= 0.5
        else:
            break
        alpha, obj, lam = cand, new_obj, new_lam
        history.append(obj)
    else:
        grad = X.T @ (y - lam) - 2 * ridge * pen_diag * alpha
        gnorm = float(np.max(np.abs(grad)))
        converged = gnorm <= opts.tol
    return alpha, it, gnorm, converged, ridged, history


class LocalSmoother:
    """Fits local polynomials for one table and neighborhood definition.

    The design matrix depends only on offsets, so it is built once and
    reused for every center.
    """

    def __init__(self, f: FreqTable, spec: NeighborhoodSpec, opts: NewtonOptions = NewtonOptions()):
        spec.validate(f.schema)
        self.f = f
        self.spec = spec
        self.opts = opts
        self.offsets = neighborhood_offsets(f.schema.m, spec)
        self.X = design_matrix(self.offsets, spec)
        self._levels = np.array(f.schema.levels)

    def local_counts(self, center: CellKey):
        cells = self.offsets + np.asarray(center)
        inside = np.all((cells >= 0) & (cells < self._levels), axis=1)
        get = self.f.counts.get
        y = np.array([get(tuple(c), 0) if ok else 0 for c, ok in zip(cells.tolist(), inside)],
                     dtype=float)
        return y, inside

    def fit(self, center: CellKey) -> LocalFit:
        center = tuple(int(c) for c in center)
        y, inside = self.local_counts(center)
        X = self.X
        if self.spec.boundary == "shrink":
            X, y = X[inside], y[inside]
        if y.sum() <= 0:
            raise ValueError(f"neighborhood of {center} contains no sample records")
        alpha, it, gnorm, conv, ridged, hist = fit_poisson_local(X, y, self.opts)
        return LocalFit(center, alpha, math.exp(alpha[0]), it, gnorm, conv, ridged,
                        hist[-1], hist)


def local_mle(f: FreqTable, center: CellKey, spec: NeighborhoodSpec,
              nr: NewtonOptions = NewtonOptions()) -> LocalFit:
    return LocalSmoother(f, spec, nr).fit(center)


def smooth_estimate(f: FreqTable, spec: NeighborhoodSpec, N: Optional[float] = None,
                    pi: float = None, nr: NewtonOptions = NewtonOptions(),
                    return_fits: bool = False):
    """Smoothing-polynomial risk estimate over all sample uniques.

    ``N`` is accepted for interface symmetry with the log-linear estimator;
    the risk depends on the fitted sample rate and ``pi`` only.
    """
    if pi is None or not 0 < pi < 1:
        raise ValueError(f"sampling fraction must lie in (0, 1), got {pi}")
    smoother = LocalSmoother(f, spec, nr)
    odds = (1.0 - pi) / pi
    cells, fits = [], []
    n_fail = n_ridged = 0
    for k in sample_uniques(f):
        fit = smoother.fit(k)
        n_fail += not fit.converged
        n_ridged += fit.ridged
        mu = fit.lambda_hat * odds
        cells.append(CellRisk(k, poisson_p_unique(mu), poisson_e_inv(mu), rate=fit.lambda_hat))
        fits.append(fit)
    if n_fail:
        logger.warning("smoothing: %d of %d local fits did not converge", n_fail, len(fits))
    diag = {"nonconverged": n_fail, "ridged": n_ridged, "neighborhood_size": len(smoother.offsets),
            "t": spec.t}
    est = RiskEstimate(f"smooth-t{spec.t}", cells, diag)
    return (est, fits) if return_fits else est
