"""
Synthetic populations, Bernoulli sampling, and exact global risk.

Population cells are drawn as independent ``Poisson(N * gamma_k)``; a sample
takes each population unit independently with probability ``pi``.  Random
streams are named so that a population and its samples can be replayed
separately.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence, Union

import numpy as np

from .tables import FreqTable, SchemaError, TableSchema

STREAMS = {"population": 0, "sample": 1, "oracle": 2}


def stream_rng(seed: int, stream: str) -> np.random.Generator:
    """Independent generator for ``(seed, stream)``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(STREAMS[stream],)))


@dataclass
class IndependenceLaw:
    """gamma_k = prod_i probs[i][k_i]."""

    probs: List[Sequence[float]]

    def gamma(self, schema: TableSchema) -> np.ndarray:
        if len(self.probs) != schema.m:
            raise ValueError(f"need {schema.m} level-probability vectors, got {len(self.probs)}")
        g = np.ones(())
        for p, a in zip(self.probs, schema.attributes):
            p = np.asarray(p, dtype=float)
            if p.shape != (a.levels,) or np.any(p < 0) or p.sum() <= 0:
                raise ValueError(f"attribute {a.name!r}: bad level probabilities")
            g = np.multiply.outer(g, p / p.sum())
        return g


@dataclass
class SmoothLaw:
    """Discretized Gaussian density over the level grid.

    ``location`` and ``scale`` are per attribute (in level units);
    ``correlation`` is a common pairwise correlation.
    """

    location: Sequence[float]
    scale: Sequence[float]
    correlation: float = 0.0

    def gamma(self, schema: TableSchema) -> np.ndarray:
        m = schema.m
        loc = np.asarray(self.location, dtype=float)
        sc = np.asarray(self.scale, dtype=float)
        if loc.shape != (m,) or sc.shape != (m,) or np.any(sc <= 0):
            raise ValueError("location and scale need one positive entry per attribute")
        corr = np.full((m, m), float(self.correlation))
        np.fill_diagonal(corr, 1.0)
        prec = np.linalg.inv(corr * np.outer(sc, sc))
        grids = np.meshgrid(*[np.arange(a.levels) - l for a, l in zip(schema.attributes, loc)],
                            indexing="ij")
        z = np.stack(grids, axis=-1)
        q = np.einsum("...i,ij,...j->...", z, prec, z)
        g = np.exp(-0.5 * (q - q.min()))
        return g / g.sum()


@dataclass
class MixtureLaw:
    components: List[Union[IndependenceLaw, SmoothLaw]]
    weights: Sequence[float]

    def gamma(self, schema: TableSchema) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        if len(w) != len(self.components) or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("mixture weights must be nonnegative, one per component")
        w = w / w.sum()
        return sum(wi * c.gamma(schema) for wi, c in zip(w, self.components))


GammaLaw = Union[IndependenceLaw, SmoothLaw, MixtureLaw]


@dataclass
class PopulationSpec:
    schema: TableSchema
    N: float
    gamma_law: GammaLaw
    seed: int = 0

    def gamma(self) -> np.ndarray:
        g = self.gamma_law.gamma(self.schema)
        if abs(g.sum() - 1.0) > 1e-9:
            raise ValueError(f"cell probabilities sum to {g.sum()}, not 1")
        return g


@dataclass(frozen=True)
class TruthReport:
    tau1: int
    tau2: float
    unique_count: int
    population_uniques: int


def _from_dense(schema: TableSchema, arr: np.ndarray) -> FreqTable:
    idx = np.nonzero(arr)
    keys = zip(*(i.tolist() for i in idx))
    return FreqTable(schema, dict(zip(keys, arr[idx].tolist())), validate=False)


def gen_population(spec: PopulationSpec) -> FreqTable:
    """Independent ``Poisson(N * gamma_k)`` counts in every cell."""
    if not spec.N >= 0:
        raise ValueError(f"N must be nonnegative, got {spec.N}")
    rate = spec.N * spec.gamma()
    F = stream_rng(spec.seed, "population").poisson(rate)
    return _from_dense(spec.schema, F)


def draw_sample(F: FreqTable, pi: float, seed: int) -> FreqTable:
    """Keep each population unit with probability ``pi``: ``f_k ~ Bin(F_k, pi)``."""
    if not 0 < pi <= 1:
        raise ValueError(f"sampling fraction must lie in (0, 1], got {pi}")
    items = F.items()
    if pi == 1:
        return FreqTable(F.schema, dict(items), validate=False)
    rng = stream_rng(seed, "sample")
    sizes = np.array([v for _, v in items], dtype=np.int64)
    draws = rng.binomial(sizes, pi) if len(sizes) else sizes
    return FreqTable(F.schema, {k: int(d) for (k, _), d in zip(items, draws)}, validate=False)


def true_risk(f: FreqTable, F: FreqTable) -> TruthReport:
    """Exact tau1 (sample uniques that are population uniques) and tau2 (sum of 1/F_k over sample uniques)."""
    if f.schema.levels != F.schema.levels:
        raise SchemaError("sample and population tables have different schemas")
    tau1 = 0
    terms = []
    for k, v in f.items():
        Fk = F.get(k)
        if v > Fk:
            raise ValueError(f"cell {k}: sample count {v} exceeds population count {Fk}")
        if v == 1:
            terms.append(1.0 / Fk)
            tau1 += Fk == 1
    pop_uniques = sum(1 for v in F.counts.values() if v == 1)
    return TruthReport(int(tau1), math.fsum(terms), len(terms), pop_uniques)


def expand_records(f: FreqTable) -> List[tuple]:
    """Microdata records (one per unit) in cell order."""
    out = []
    for k, v in f.items():
        out.extend([k] * v)
    return out
