"""Command-line interface: ``sdcrisk {gen,sample,truth,estimate,experiment}``."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path
from typing import List, Optional

import yaml

from .argus import PostStrataSpec, argus_estimate, compute_weights
from .harness import ConfigError, fmt, load_config, parse_population, run_experiment
from .loglinear import fit_independence, fit_two_way, loglin_estimate
from .smoothing import NeighborhoodSpec, smooth_estimate
from .synth import PopulationSpec, draw_sample, expand_records, gen_population, true_risk
from .tables import (FreqTable, Microdata, SchemaError, TableFormatError, ingest_microdata,
                     read_microdata_csv, read_table_csv, write_table_csv)

METHODS = ["argus", "loglin-independence", "loglin-two-way", "smooth"]
RATE_COLUMN = {"argus": "pi_hat", "loglin-independence": "mu", "loglin-two-way": "mu",
               "smooth": "lambda_hat"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _levels(text: Optional[str]):
    if not text:
        return None
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise UsageError(f"--levels must be comma-separated integers, got {text!r}") from None


def _emit(pairs) -> None:
    for k, v in pairs:
        print(f"{k}={v}")


def cmd_gen(args) -> None:
    raw = yaml.safe_load(Path(args.config).read_text(encoding="utf-8")) or {}
    section = raw.get("population", raw)
    seed = args.seed if args.seed is not None else int(section.get("seed", raw.get("seed", 0)))
    section = dict(section, seed=seed)
    spec = parse_population(section, seed)
    if not isinstance(spec, PopulationSpec):
        raise ConfigError("gen needs a generative population spec, not a table path")
    F = gen_population(spec)
    write_table_csv(F, args.out)
    _emit([("total", F.total), ("cells", len(F)), ("sha256", F.digest())])


def cmd_sample(args) -> None:
    F = read_table_csv(args.population, levels=_levels(args.levels))
    f = draw_sample(F, args.pi, args.seed)
    write_table_csv(f, args.out)
    if args.records_out:
        with open(args.records_out, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(f.schema.names)
            w.writerows(expand_records(f))
    _emit([("total", f.total), ("cells", len(f)), ("sha256", f.digest())])


def cmd_truth(args) -> None:
    F = read_table_csv(args.population, levels=_levels(args.levels))
    f = read_table_csv(args.sample, schema=F.schema)
    tr = true_risk(f, F)
    _emit([("tau1", tr.tau1), ("tau2", fmt(tr.tau2)), ("unique_count", tr.unique_count),
           ("population_uniques", tr.population_uniques)])


def _read_margins(path) -> PostStrataSpec:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or "population_count" not in rows[0]:
        raise TableFormatError(f"{path}: missing 'population_count' column")
    header = [h.strip() for h in rows[0]]
    ci = header.index("population_count")
    attrs = [h for i, h in enumerate(header) if i != ci]
    margins = {}
    for ln, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise TableFormatError(f"{path}: line {ln}: expected {len(header)} fields")
        key = []
        for i, v in enumerate(row):
            if i == ci:
                continue
            v = v.strip()
            key.append(int(v) if v.lstrip("-").isdigit() else v)
        try:
            margins[tuple(key)] = float(row[ci])
        except ValueError:
            raise TableFormatError(f"{path}: line {ln}: bad population_count {row[ci]!r}") from None
    return PostStrataSpec(attrs, margins)


def _release_table(micro, release: Optional[List[str]]) -> FreqTable:
    if not release:
        return ingest_microdata(micro)
    idx = micro.schema.resolve(release)
    sub = micro.schema.sub(idx)
    return ingest_microdata(Microdata(sub, [tuple(r[i] for i in idx) for r in micro.records]))


def cmd_estimate(args) -> None:
    aux = args.aux or []
    if args.pi is None or not 0 < args.pi < 1:
        raise UsageError("--pi in (0, 1) is required")
    micro = None
    if args.microdata:
        micro, _ = read_microdata_csv(args.microdata, aux=aux, levels=_levels(args.levels))
        f = _release_table(micro, args.release)
    elif args.table:
        f = read_table_csv(args.table, levels=_levels(args.levels))
    else:
        raise UsageError("one of --table or --microdata is required")
    N = args.N if args.N is not None else f.total / args.pi

    if args.method == "argus":
        if micro is None or not args.margins:
            raise UsageError("argus needs --microdata and --margins")
        spec = _read_margins(args.margins)
        ws = compute_weights(micro, spec)
        est = argus_estimate(f, ws)
    elif args.method.startswith("loglin"):
        fit = fit_independence(f) if args.method == "loglin-independence" else fit_two_way(f)
        est = loglin_estimate(fit, f, N, args.pi)
    else:
        fixed = f.schema.resolve(args.fixed or [])
        spec = NeighborhoodSpec(frozenset(fixed), args.c, args.d, args.t, args.boundary)
        est = smooth_estimate(f, spec, N, args.pi)

    _emit([("method", est.method), ("tau1", fmt(est.tau1)), ("tau2", fmt(est.tau2)),
           ("n_uniques", est.n_uniques),
           ("diagnostics", json.dumps(est.diagnostics, sort_keys=True, default=str))])
    if args.per_cell:
        out = sys.stdout if args.per_cell == "-" else open(args.per_cell, "w", newline="", encoding="utf-8")
        try:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(f.schema.names + [RATE_COLUMN[args.method], "p_unique", "e_inv"])
            for c in est.cells:
                w.writerow(list(c.key) + [fmt(c.rate), fmt(c.p_unique), fmt(c.e_inv)])
        finally:
            if out is not sys.stdout:
                out.close()


def _parse_set(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        k, v = item.split("=", 1)
        out[k.strip()] = yaml.safe_load(v)
    return out


def cmd_experiment(args) -> None:
    overrides = _parse_set(args.set)
    for key, val in (("seed", args.seed), ("pi", args.pi), ("replicates", args.replicates),
                     ("jobs", args.jobs), ("output.path", args.out)):
        if val is not None:
            overrides[key] = val
    cfg = load_config(args.config, overrides)
    report = run_experiment(cfg)
    print(report.human_table())
    if cfg.output is not None:
        stem = Path(cfg.output)
        print(f"report={stem.with_suffix('') if stem.suffix in ('.csv', '.json') else stem}.csv")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdcrisk", description="Disclosure risk estimation for sample frequency tables.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a synthetic population table")
    g.add_argument("config", help="YAML population spec (or experiment config)")
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int)
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("sample", help="Bernoulli-sample a population table")
    s.add_argument("population")
    s.add_argument("--pi", type=float, required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.add_argument("--records-out", help="also write one microdata record per sampled unit")
    s.add_argument("--levels")
    s.set_defaults(func=cmd_sample)

    t = sub.add_parser("truth", help="exact tau1, tau2 from sample and population tables")
    t.add_argument("sample")
    t.add_argument("population")
    t.add_argument("--levels")
    t.set_defaults(func=cmd_truth)

    e = sub.add_parser("estimate", help="estimate tau1, tau2 from a sample")
    e.add_argument("--method", choices=METHODS, required=True)
    e.add_argument("--table", help="sample frequency table CSV")
    e.add_argument("--microdata", help="sample microdata CSV")
    e.add_argument("--aux", nargs="*", help="auxiliary (non-key) microdata columns")
    e.add_argument("--release", nargs="*", help="key variables in the released table")
    e.add_argument("--margins", help="population margins CSV for post-stratification")
    e.add_argument("--pi", type=float)
    e.add_argument("--N", type=float, help="population size (default n / pi)")
    e.add_argument("-c", type=int, default=3)
    e.add_argument("-d", type=int)
    e.add_argument("-t", type=int, default=2)
    e.add_argument("--fixed", nargs="*")
    e.add_argument("--boundary", choices=["zero", "shrink"], default="zero")
    e.add_argument("--levels")
    e.add_argument("--per-cell", metavar="PATH", help="write per-unique detail CSV ('-' for stdout)")
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("experiment", help="run a configured experiment")
    x.add_argument("config")
    x.add_argument("--seed", type=int)
    x.add_argument("--pi", type=float)
    x.add_argument("--replicates", type=int)
    x.add_argument("--jobs", type=int)
    x.add_argument("--out")
    x.add_argument("--set", action="append", metavar="KEY=VALUE")
    x.set_defaults(func=cmd_experiment)
    return p


def _fail(prefix: str, msg, code: int = 1) -> int:
    print(f"error: {prefix}: {str(msg).splitlines()[0] if str(msg) else ''}", file=sys.stderr)
    return code


def main(argv: Optional[List[str]] = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        return _fail("usage", exc, 2)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except UsageError as exc:
        return _fail("usage", exc, 2)
    except ConfigError as exc:
        return _fail("config", exc, 3)
    except TableFormatError as exc:
        return _fail("csv", exc, 4)
    except SchemaError as exc:
        return _fail("schema", exc, 5)
    except (FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        return _fail("io", exc, 6)
    except (ValueError, yaml.YAMLError) as exc:
        return _fail("value", exc, 7)
    return 0


if __name__ == "__main__":
    sys.exit(main())
