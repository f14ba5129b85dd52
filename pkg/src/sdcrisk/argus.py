"""
Argus-style risk estimation from post-stratified sampling weights.

Each record gets weight ``population_margin(s) / sample_count(s)`` within its
post-stratum ``s``.  Summing weights in a release cell gives an initial
population size estimate F-hat, from which ``pi-hat = f / F-hat`` is plugged
into the Negative Binomial risk formulas.  Cells are handled independently.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Sequence, Tuple

from .countmodels import argus_e_inv, argus_p_unique
from .risk import CellRisk, RiskEstimate
from .tables import CellKey, FreqTable, Microdata, SchemaError, TableSchema, margin

logger = logging.getLogger(__name__)


@dataclass
class PostStrataSpec:
    strata_attrs: List[str]
    population_margins: Dict[tuple, float]

    def __post_init__(self):
        self.strata_attrs = list(self.strata_attrs)
        self.population_margins = {tuple(k): float(v) for k, v in self.population_margins.items()}

    @classmethod
    def single_stratum(cls, population_size: float) -> "PostStrataSpec":
        """Calibrate everything to the overall population total."""
        return cls([], {(): population_size})

    @classmethod
    def from_population(cls, F: FreqTable, strata_attrs: Sequence[str]) -> "PostStrataSpec":
        """Take strata margins from a known population table."""
        if not strata_attrs:
            return cls.single_stratum(F.total)
        mf = margin(F, strata_attrs)
        return cls(list(strata_attrs), dict(mf.counts))


@dataclass
class WeightedSample:
    microdata: Microdata
    weights: List[float]
    diagnostics: Dict[str, object] = field(default_factory=dict)


def compute_weights(sample: Microdata, spec: PostStrataSpec) -> WeightedSample:
    """Post-stratification weights: every record in stratum ``s`` gets
    ``margin(s) / n_s``, so weighted stratum totals equal the margins."""
    strata = sample.project(spec.strata_attrs)
    n_s: Dict[tuple, int] = {}
    for s in strata:
        n_s[s] = n_s.get(s, 0) + 1
    w_s = {}
    for s, n in n_s.items():
        if s not in spec.population_margins:
            raise ValueError(f"stratum {s} has {n} sample records but no population margin")
        pop = spec.population_margins[s]
        if not (pop > 0 and math.isfinite(pop)):
            raise ValueError(f"stratum {s} has non-positive population margin {pop}")
        w_s[s] = pop / n
    empty = sorted(s for s in spec.population_margins if s not in n_s)
    if empty:
        logger.warning("%d post-strata have no sample records", len(empty))
    weights = [w_s[s] for s in strata]
    return WeightedSample(sample, weights, {"empty_strata": [list(s) for s in empty]})


def fhat(ws: WeightedSample, release_schema: TableSchema) -> Dict[CellKey, float]:
    """Sum of weights per release cell, over nonempty sample cells only."""
    names = release_schema.names
    src = ws.microdata.schema.names
    missing = [n for n in names if n not in src]
    if missing:
        raise SchemaError(f"release attributes {missing} not among microdata key variables")
    keys = ws.microdata.project(names)
    out: Dict[CellKey, float] = {}
    for k, w in zip(keys, ws.weights):
        out[k] = out.get(k, 0.0) + w
    return out


def argus_cell_risk(f_k: int, Fhat_k: float) -> Tuple[float, float]:
    """(P-hat, E-hat) for a sample-unique cell, with ``pi-hat = f_k / Fhat_k``
    clamped to (0, 1]."""
    if f_k != 1:
        raise ValueError(f"risk is defined for sample uniques only, got f_k={f_k}")
    Fhat_k = float(Fhat_k)
    if not (math.isfinite(Fhat_k) and Fhat_k > 0):
        raise ValueError(f"F-hat must be positive and finite, got {Fhat_k}")
    pi = f_k / Fhat_k
    pi = min(pi, 1.0)
    return argus_p_unique(pi), argus_e_inv(pi)


def argus_estimate(f: FreqTable, ws: WeightedSample) -> RiskEstimate:
    F_hat = fhat(ws, f.schema)
    cells = []
    n_clamped = 0
    for k, v in f.items():
        if v != 1:
            continue
        if k not in F_hat:
            raise ValueError(f"sample unique {k} has no weighted records; table and weights disagree")
        p, e = argus_cell_risk(1, F_hat[k])
        n_clamped += F_hat[k] < 1.0
        cells.append(CellRisk(k, p, e, rate=p))
    if n_clamped:
        logger.warning("argus: clamped pi-hat to 1 in %d cells", n_clamped)
    diag = {"clamped": n_clamped, **ws.diagnostics}
    return RiskEstimate("argus", cells, diag)
