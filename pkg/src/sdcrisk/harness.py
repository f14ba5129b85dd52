"""
End-to-end experiments: population -> repeated samples -> every estimator
plus the exact risk, collected into a comparison report.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import os
import platform
import statistics
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import numpy as np
import yaml

from . import __version__
from .argus import PostStrataSpec, argus_estimate, compute_weights
from .loglinear import fit_independence, fit_two_way, loglin_estimate
from .smoothing import NeighborhoodSpec, NewtonOptions, neighborhood_offsets, smooth_estimate
from .synth import (IndependenceLaw, MixtureLaw, PopulationSpec, SmoothLaw, draw_sample,
                    expand_records, gen_population, true_risk)
from .tables import FreqTable, Microdata, SchemaError, TableSchema, read_table_csv

logger = logging.getLogger(__name__)

REPORT_COLUMNS = ["replicate", "method", "tau1", "tau2", "n_uniques", "sample_sha256", "status"]


class ConfigError(ValueError):
    pass


def fmt(x: float) -> str:
    """Round-trip float formatting for machine outputs."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def parse_schema(d: Mapping) -> TableSchema:
    try:
        return TableSchema.from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad schema section: {exc}") from None


def parse_law(d: Mapping, schema: TableSchema):
    kind = d.get("kind")
    if kind == "independence":
        probs = d.get("probs", "uniform")
        if probs == "uniform":
            probs = [[1.0] * a.levels for a in schema.attributes]
        return IndependenceLaw([list(map(float, p)) for p in probs])
    if kind == "smooth":
        try:
            return SmoothLaw(list(d["location"]), list(d["scale"]), float(d.get("correlation", 0.0)))
        except KeyError as exc:
            raise ConfigError(f"smooth law needs {exc}") from None
    if kind == "mixture":
        comps = [parse_law(c, schema) for c in d.get("components", [])]
        return MixtureLaw(comps, list(d.get("weights", [])))
    raise ConfigError(f"unknown gamma law kind {kind!r}")


def parse_population(d: Mapping, default_seed: int = 0, base: Path = Path(".")):
    """Return either a PopulationSpec or a path to a population table."""
    if "path" in d:
        p = Path(d["path"])
        return p if p.is_absolute() else base / p
    for key in ("schema", "N", "law"):
        if key not in d:
            raise ConfigError(f"population section needs {key!r} (or 'path')")
    schema = parse_schema(d["schema"])
    return PopulationSpec(schema, float(d["N"]), parse_law(d["law"], schema),
                          int(d.get("seed", default_seed)))


@dataclass
class MethodConfig:
    kind: str
    name: str
    params: Dict[str, Any] = field(default_factory=dict)


def _method_name(kind: str, p: Mapping, schema: Optional[TableSchema]) -> str:
    if kind == "argus":
        return "argus"
    if kind == "loglin":
        return f"loglin-{p.get('model', 'independence')}"
    if kind == "smooth":
        label = f"smooth-t{p.get('t', 2)}"
        if schema is not None:
            label += f"-M{len(neighborhood_offsets(schema.m, _neighborhood(p, schema)))}"
        return label
    raise ConfigError(f"unknown method kind {kind!r}")


def _neighborhood(p: Mapping, schema: TableSchema) -> NeighborhoodSpec:
    fixed = schema.resolve(p.get("fixed", []))
    return NeighborhoodSpec(frozenset(fixed), int(p.get("c", 3)),
                            None if p.get("d") is None else int(p["d"]),
                            int(p.get("t", 2)), str(p.get("boundary", "zero")))


@dataclass
class ExperimentConfig:
    population: Any  # PopulationSpec or Path
    pi: float
    replicates: int = 1
    seed: int = 0
    methods: List[MethodConfig] = field(default_factory=list)
    output: Optional[Path] = None
    jobs: int = 1
    raw: Dict[str, Any] = field(default_factory=dict)

    def validate(self, schema: TableSchema) -> None:
        if self.replicates < 1:
            raise ConfigError("replicates must be >= 1")
        if not self.methods:
            raise ConfigError("at least one method is required")
        if not 0 < self.pi < 1:
            raise ConfigError(f"pi must lie in (0, 1), got {self.pi}")
        names = [m.name for m in self.methods]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate method names {names}; set 'name' explicitly")
        for m in self.methods:
            try:
                if m.kind == "smooth":
                    _neighborhood(m.params, schema).validate(schema)
                elif m.kind == "argus":
                    schema.resolve(m.params.get("strata", []))
                elif m.kind == "loglin":
                    if m.params.get("model", "independence") not in ("independence", "two-way"):
                        raise ConfigError(f"unknown log-linear model {m.params.get('model')!r}")
                    if m.params.get("model") == "two-way" and schema.m < 2:
                        raise ConfigError("two-way model needs at least two attributes")
            except (SchemaError, ValueError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError(f"method {m.name!r}: {exc}") from None


def set_path(d: dict, dotted: str, value) -> None:
    """Assign ``value`` at a dotted key path, creating sections as needed.
    Integer path components index into lists."""
    parts = dotted.split(".")
    cur = d
    for part in parts[:-1]:
        if isinstance(cur, list):
            cur = cur[int(part)]
        else:
            cur = cur.setdefault(part, {})
    last = parts[-1]
    if isinstance(cur, list):
        cur[int(last)] = value
    else:
        cur[last] = value


def load_config(source, overrides: Optional[Mapping[str, Any]] = None,
                base: Optional[Path] = None) -> ExperimentConfig:
    """Build a config from a YAML path or mapping; ``overrides`` maps dotted
    keys to values and wins over the file."""
    if isinstance(source, (str, Path)):
        path = Path(source)
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
        base = base or path.parent
    else:
        raw = copy.deepcopy(dict(source))
    base = base or Path(".")
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    if isinstance(raw.get("output"), str):
        raw["output"] = {"path": raw["output"]}
    for k, v in (overrides or {}).items():
        set_path(raw, k, v)
    seed = int(raw.get("seed", 0))
    if "population" not in raw:
        raise ConfigError("missing 'population' section")
    try:
        pop = parse_population(raw["population"], seed, base)
        schema = pop.schema if isinstance(pop, PopulationSpec) else None
        methods = []
        for md in raw.get("methods", []) or []:
            md = dict(md)
            kind = md.pop("kind", None)
            name = md.pop("name", None) or _method_name(kind, md, schema)
            methods.append(MethodConfig(kind, name, md))
        out = raw.get("output", {}) or {}
        out_path = out.get("path") if isinstance(out, dict) else out
        return ExperimentConfig(
            population=pop,
            pi=float(raw.get("pi", 0)),
            replicates=int(raw.get("replicates", 1)),
            seed=seed,
            methods=methods,
            output=Path(out_path) if out_path else None,
            jobs=int(raw.get("jobs", 1)),
            raw=raw,
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


# ---------------------------------------------------------------------------
# running
# ---------------------------------------------------------------------------

@dataclass
class ReportRow:
    replicate: int
    method: str
    tau1: float
    tau2: float
    n_uniques: int
    sample_sha256: str
    status: str = "ok"
    diagnostics: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ExperimentReport:
    rows: List[ReportRow]
    meta: Dict[str, Any] = field(default_factory=dict)

    def methods(self) -> List[str]:
        seen = []
        for r in self.rows:
            if r.method not in seen:
                seen.append(r.method)
        return seen

    def summary(self) -> Dict[str, Dict[str, float]]:
        out = {}
        for m in self.methods():
            rows = [r for r in self.rows if r.method == m and r.status == "ok"]
            t1 = [r.tau1 for r in rows]
            t2 = [r.tau2 for r in rows]
            out[m] = {
                "replicates": len(rows),
                "tau1_mean": statistics.fmean(t1) if t1 else math.nan,
                "tau1_sd": statistics.stdev(t1) if len(t1) > 1 else 0.0,
                "tau2_mean": statistics.fmean(t2) if t2 else math.nan,
                "tau2_sd": statistics.stdev(t2) if len(t2) > 1 else 0.0,
            }
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in self.rows:
            w.writerow([r.replicate, r.method, fmt(r.tau1), fmt(r.tau2), r.n_uniques,
                        r.sample_sha256, r.status])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = dict(self.meta)
        doc["summary"] = self.summary()
        doc["diagnostics"] = [{"replicate": r.replicate, "method": r.method, **r.diagnostics}
                              for r in self.rows if r.diagnostics]
        return json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n"

    def human_table(self) -> str:
        s = self.summary()
        width = max(len(m) for m in s) if s else 6
        lines = [f"{'method':<{width}}  {'tau1':>10}  {'tau2':>10}"]
        for m, v in s.items():
            lines.append(f"{m:<{width}}  {v['tau1_mean']:>10.1f}  {v['tau2_mean']:>10.1f}")
        return "\n".join(lines)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o)}")


def run_method(m: MethodConfig, f: FreqTable, F: FreqTable, pi: float):
    p = m.params
    if m.kind == "argus":
        strata = [f.schema.names[i] for i in f.schema.resolve(p.get("strata", []))]
        ws = compute_weights(Microdata(f.schema, expand_records(f)),
                             PostStrataSpec.from_population(F, strata))
        return argus_estimate(f, ws)
    if m.kind == "loglin":
        model = p.get("model", "independence")
        if model == "independence":
            fit = fit_independence(f)
        else:
            fit = fit_two_way(f, float(p.get("tol", 1e-8)), int(p.get("max_iter", 1000)))
        return loglin_estimate(fit, f, F.total, pi)
    if m.kind == "smooth":
        nr = NewtonOptions(tol=float(p.get("newton_tol", 1e-8)),
                           max_iter=int(p.get("newton_max_iter", 100)))
        return smooth_estimate(f, _neighborhood(p, f.schema), F.total, pi, nr)
    raise ConfigError(f"unknown method kind {m.kind!r}")


def run_replicate(F: FreqTable, cfg: ExperimentConfig, r: int) -> List[ReportRow]:
    """One sample (seeded by ``seed + r``), its truth row, and one row per method."""
    f = draw_sample(F, cfg.pi, cfg.seed + r)
    digest = f.digest()
    truth = true_risk(f, F)
    rows = [ReportRow(r, "truth", truth.tau1, truth.tau2, truth.unique_count, digest,
                      diagnostics={"population_uniques": truth.population_uniques,
                                   "sample_size": f.total})]
    for m in cfg.methods:
        try:
            est = run_method(m, f, F, cfg.pi)
            rows.append(ReportRow(r, m.name, est.tau1, est.tau2, est.n_uniques, digest,
                                  diagnostics=dict(est.diagnostics)))
        except Exception as exc:  # recorded per row, run continues
            logger.exception("replicate %d, method %s failed", r, m.name)
            msg = f"{type(exc).__name__}: {exc}".replace("\n", " ").replace(",", ";")
            rows.append(ReportRow(r, m.name, math.nan, math.nan, 0, digest, f"error: {msg}"))
    return rows


def _load_population(cfg: ExperimentConfig) -> FreqTable:
    if isinstance(cfg.population, PopulationSpec):
        return gen_population(cfg.population)
    path = Path(cfg.population)
    if not path.exists():
        raise ConfigError(f"population table not found: {path}")
    return read_table_csv(path)


def run_experiment(cfg: ExperimentConfig, jobs: Optional[int] = None) -> ExperimentReport:
    """Run all replicates; writes the report files when ``cfg.output`` is set."""
    F = _load_population(cfg)
    # method names may depend on the schema when the population came from a file
    for m in cfg.methods:
        if m.kind == "smooth" and m.name.startswith("smooth-t") and "-M" not in m.name:
            m.name = _method_name(m.kind, m.params, F.schema)
    cfg.validate(F.schema)
    jobs = cfg.jobs if jobs is None else jobs
    reps = list(range(cfg.replicates))
    if jobs > 1 and len(reps) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            chunks = list(pool.map(run_replicate, [F] * len(reps), [cfg] * len(reps), reps))
    else:
        chunks = [run_replicate(F, cfg, r) for r in reps]
    rows = [row for chunk in chunks for row in chunk]
    meta = {
        "config": cfg.raw,
        "seeds": {"population": getattr(cfg.population, "seed", None),
                  "samples": [cfg.seed + r for r in reps]},
        "population": {"total": F.total, "cells": len(F), "K": F.schema.K,
                       "schema": F.schema.to_dict(), "sha256": F.digest()},
        "versions": {"sdcrisk": __version__, "numpy": np.__version__,
                     "python": platform.python_version()},
    }
    report = ExperimentReport(rows, meta)
    if cfg.output is not None:
        write_report(report, cfg.output)
    return report


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_report(report: ExperimentReport, stem) -> tuple:
    """Write ``<stem>.csv`` and ``<stem>.json``."""
    stem = Path(stem)
    if stem.suffix in (".csv", ".json"):
        stem = stem.with_suffix("")
    csv_path = stem.with_name(stem.name + ".csv")
    json_path = stem.with_name(stem.name + ".json")
    _atomic_write(csv_path, report.to_csv())
    _atomic_write(json_path, report.to_json())
    return csv_path, json_path
