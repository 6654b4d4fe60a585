"""Batch command-line front end.

Every subcommand writes its tables into ``--out`` and a ``run_report.json``
next to them, and prints a JSON summary on stdout. Warnings go to stderr.
Exit status: 0 on success, 1 on data/validation errors, 2 on usage errors.
"""
from __future__ import annotations

import argparse
import itertools
import json
import logging
import sys
import time
from datetime import date
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__, abm, analytics, graph, ingest, metrics, sweep
from .records import UNLISTED_ENTITY
from .tables import TABLE_FORMATS, table_path, write_table

log = logging.getLogger("benchconc")


class UsageError(Exception):
    pass


def _iso_date(text: str) -> date:
    try:
        return date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date (YYYY-MM-DD): {text!r}") from None


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer: {text}")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return value


def _input_format(path: Path, declared: Optional[str]) -> str:
    if declared:
        return declared
    return "jsonl" if path.suffix.lower() in (".jsonl", ".ndjson") else "csv"


class Run:
    """Collects outputs and manifests for the run report."""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.outputs: list[str] = []
        self.manifests: list[dict] = []
        self.started = time.perf_counter()

    def table(self, stem: str, header, rows) -> Path:
        path = write_table(table_path(self.out, stem, self.args.format), header, rows,
                           self.args.format)
        self.outputs.append(str(path))
        return path

    def add_output(self, path: Path) -> None:
        self.outputs.append(str(path))

    def load_benchmarks(self):
        path = Path(self.args.benchmarks)
        records, manifest = ingest.load_benchmarks(
            path, _input_format(path, self.args.input_format),
            affiliations_path=self.args.affiliations, snapshot_date=self.args.snapshot_date)
        self.manifests.append(manifest.to_json())
        return self._aliased(records)

    def load_models(self):
        path = Path(self.args.models)
        records, manifest = ingest.load_models(
            path, _input_format(path, self.args.input_format),
            snapshot_date=self.args.snapshot_date)
        self.manifests.append(manifest.to_json())
        return self._aliased(records)

    def _aliased(self, records):
        aliases = getattr(self.args, "aliases", None)
        if aliases:
            records = ingest.dedupe_entities(records, ingest.load_aliases(aliases))
        return records

    def finish(self, summary: dict, seed: Optional[int] = None) -> dict:
        params = {k: (v.isoformat() if isinstance(v, date) else v)
                  for k, v in sorted(vars(self.args).items()) if k not in ("handler", "parser")}
        report = {
            "command": self.args.command,
            "parameters": params,
            "input_manifests": self.manifests,
            "outputs": self.outputs,
            "duration_seconds": round(time.perf_counter() - self.started, 6),
            "seed": seed if seed is not None else self.args.seed,
        }
        missing = [p for p in self.outputs if not Path(p).exists()]
        if missing:
            raise RuntimeError(f"declared outputs were not written: {missing}")
        report_path = self.out / "run_report.json"
        report_path.write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
        return summary


# ---------------------------------------------------------------------------
# authority


def _variant(args) -> metrics.RobustnessVariant:
    kind = {"decay": "exponential-decay"}.get(args.variant, args.variant)
    if kind != "baseline" and args.reference_date is None:
        raise UsageError(f"--variant {args.variant} requires --reference-date")
    return metrics.RobustnessVariant(
        kind,
        reference_date=args.reference_date if kind != "baseline" else None,
        window_years=args.window_years if kind == "windowed" else None,
        half_life_years=args.half_life_years if kind == "exponential-decay" else None,
        min_age_years=args.min_age_years if kind == "rate-per-age" else None,
    )


def _table_summary(table: metrics.AuthorityTable, top_k: int) -> dict:
    values = table.values()
    if len(table) < 2:
        log.warning("gini suppressed: only %d entity in the authority table", len(table))
        g = None
    else:
        g = metrics.gini(values)
    return {
        "entities": len(table),
        "total": table.total,
        "gini": g,
        "hhi": metrics.hhi(values),
        "top_shares": [[n, s] for n, s in metrics.top_shares(table, min(top_k, len(table)))],
    }


def cmd_authority(args) -> dict:
    run = Run(args)
    variant = _variant(args)
    records = run.load_benchmarks()
    keep = (lambda name: name != UNLISTED_ENTITY) if args.exclude_unknown else None
    alphas = list(dict.fromkeys(args.blend_alpha))
    tables = {}
    entries = []
    for a in alphas:
        table = metrics.allocate_authority(records, variant, a, args.group_by)
        if keep:
            table = table.filtered(keep)
        if len(table) == 0 or table.total <= 0:
            raise ValueError("authority table is empty or has zero total mass")
        tables[a] = table
        stem = "authority" if len(alphas) == 1 else f"authority_alpha-{a:g}"
        rows = [(name, mass, mass / table.total, rank)
                for rank, (name, mass) in enumerate(table.ranked(), start=1)]
        path = run.table(stem, ["entity", "mass", "share", "rank"], rows)
        entries.append({"blend_alpha": a, "file": str(path), **_table_summary(table, args.top_k)})

    summary = {"command": "authority", "variant": variant.label(), "group_by": args.group_by,
               "benchmarks": len(records), "tables": entries}
    summary.update({k: entries[0][k] for k in ("gini", "hhi", "top_shares")})

    if len(alphas) > 1:
        stability = []
        for a, b in itertools.combinations(alphas, 2):
            ta, tb = tables[a], tables[b]
            jk = min(args.jaccard_k, len(ta), len(tb))
            sk = min(args.spearman_k, len(ta), len(tb))
            try:
                rho = metrics.spearman_top_union(ta, tb, sk)
            except metrics.UndefinedMetricError as exc:
                log.warning("spearman undefined for alpha %g vs %g: %s", a, b, exc)
                rho = None
            stability.append({"alpha_a": a, "alpha_b": b, "jaccard_k": jk,
                              "jaccard": metrics.jaccard_top_k(ta, tb, jk),
                              "spearman_k": sk, "spearman": rho})
        run.table("stability", ["alpha_a", "alpha_b", "jaccard_k", "jaccard", "spearman_k",
                                "spearman"], [tuple(s.values()) for s in stability])
        summary["stability"] = stability

    if args.robustness:
        if args.reference_date is None:
            raise UsageError("--robustness requires --reference-date")
        rows = metrics.robustness_table(
            records, metrics.default_variants(args.reference_date), alphas[0], args.group_by,
            args.jaccard_k, args.spearman_k, keep)
        header = list(rows[0])
        run.table("robustness", header, [tuple(r.values()) for r in rows])
        summary["robustness"] = rows
    return run.finish(summary)


# ---------------------------------------------------------------------------
# graph


def cmd_graph(args) -> dict:
    run = Run(args)
    records = run.load_benchmarks()
    g = graph.build_graph(records)
    edge_path = run.out / "edges.tsv"
    graph.write_edgelist(g, edge_path)
    run.add_output(edge_path)

    by_kind = {k: len(g.nodes_of(k)) for k in graph.NODE_KINDS}
    summary = {"command": "graph", "nodes": g.number_of_nodes(), "edges": g.number_of_edges(),
               "nodes_by_kind": by_kind}
    if g.number_of_nodes() >= 2:
        cent = graph.degree_centrality(g)
        rows = sorted(((v.kind, v.label, g.degree(v), c) for v, c in cent.items()),
                      key=lambda r: (-r[3], r[0], r[1]))
        try:
            summary["degree_gini"] = graph.degree_gini(g, args.kinds)
        except ValueError as exc:
            log.warning("%s", exc)
            summary["degree_gini"] = None
    else:
        log.warning("degree centrality needs at least two nodes")
        rows = []
        summary["degree_gini"] = None
    run.table("degree_centrality", ["kind", "label", "degree", "degree_centrality"], rows)

    core = graph.k_core(g, args.k)
    if len(core) == 0:
        log.warning("the %d-core is empty", args.k)
    bet = graph.betweenness(core)
    rows = sorted(((v.kind, v.label, b) for v, b in bet.items()),
                  key=lambda r: (-r[2], r[0], r[1]))
    run.table("kcore_betweenness", ["kind", "label", "betweenness"], rows)
    summary["kcore"] = {"k": args.k, "nodes": core.number_of_nodes(),
                        "edges": core.number_of_edges()}
    return run.finish(summary)


# ---------------------------------------------------------------------------
# simulate / sweep


def _sim_config(args, seed: int) -> abm.SimConfig:
    try:
        return abm.SimConfig(
            matthew_alpha=args.alpha, overfit_beta=getattr(args, "beta", 0.0),
            entry_gamma=getattr(args, "gamma", 0.0), decay_delta=args.delta,
            steps=args.steps, initial_benchmarks=args.initial, seed=seed,
            decay_mode=args.decay_mode)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_simulate(args) -> dict:
    config = _sim_config(args, args.seed)
    if not 0 < args.tail_fraction <= 1:
        raise UsageError("--tail-fraction must be in (0, 1]")
    run = Run(args)
    traj = abm.run(config)
    traj_path, config_path = abm.write_trajectory(
        traj, table_path(run.out, "trajectory", args.format), args.format)
    run.add_output(traj_path)
    run.add_output(config_path)
    summary = {
        "command": "simulate",
        "config": config.to_json(),
        "final_hhi": float(traj.hhi_per_step[-1]),
        "steady_state_hhi": abm.steady_state_hhi(traj, args.tail_fraction),
        "n_benchmarks": len(traj.final_state),
        "entries": len(traj.final_state) - config.initial_benchmarks,
    }
    return run.finish(summary, config.seed)


def _axis(explicit, lo, hi, count, log_spaced):
    if explicit:
        return tuple(explicit)
    if count == 1:
        return (lo,)
    if log_spaced:
        return tuple(float(v) for v in np.logspace(np.log10(lo), np.log10(hi), count))
    return tuple(float(v) for v in np.linspace(lo, hi, count))


def cmd_sweep(args) -> dict:
    base = _sim_config(args, args.seed)
    betas = _axis(args.betas, args.beta_min, args.beta_max, args.beta_count, False)
    gammas = _axis(args.gammas, args.gamma_min, args.gamma_max, args.gamma_count, True)
    if args.include_gamma_zero and gammas[0] != 0:
        gammas = (0.0,) + gammas
    try:
        grid = sweep.SweepGrid(betas, gammas, args.replicates, base, args.seed,
                               args.tail_fraction)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    run = Run(args)
    diagram = sweep.run_sweep(grid, jobs=args.jobs)
    contour = sweep.tipping_contour(diagram, args.level)
    run.add_output(sweep.write_phase(diagram, table_path(run.out, "phase", args.format),
                                     args.format))
    run.add_output(sweep.write_contour(contour, table_path(run.out, "tipping", args.format),
                                       args.format))
    try:
        sensitivity = sweep.beta_sensitivity(diagram, args.level)
    except ValueError as exc:
        log.warning("beta sensitivity unavailable: %s", exc)
        sensitivity = None
    summary = {
        "command": "sweep",
        "shape": list(grid.shape),
        "replicates": grid.replicates,
        "master_seed": grid.master_seed,
        "level": args.level,
        "contour": [list(p) for p in contour.points],
        "beta_sensitivity": sensitivity,
    }
    return run.finish(summary)


# ---------------------------------------------------------------------------
# analytics / validate


def _trend(series: metrics.ConcentrationSeries, label: str) -> Optional[dict]:
    try:
        fit = metrics.trend_fit(series)
    except ValueError as exc:
        log.warning("%s trend fit unavailable: %s", label, exc)
        return None
    return {"annual_change_rate": fit.annual_change_rate, "ci95": list(fit.ci95),
            "years": list(series.years), "values": list(series.values)}


def cmd_analytics(args) -> dict:
    if not args.models and not args.benchmarks:
        raise UsageError("analytics needs --models and/or --benchmarks")
    run = Run(args)
    summary: dict = {"command": "analytics"}
    if args.models:
        models = run.load_models()
        ind = analytics.derive_indicators(models)
        res = analytics.pca(ind, args.n_components)
        for stem, writer in (("indicators", lambda p: analytics.write_indicators(ind, p, args.format)),
                             ("pca_loadings", lambda p: analytics.write_loadings(res, p, args.format)),
                             ("pca_scores", lambda p: analytics.write_scores(res, ind.years, p, args.format))):
            run.add_output(writer(table_path(run.out, stem, args.format)))
        ratios = [float(r) for r in res.explained_variance_ratio]
        summary["pca"] = {"years": list(ind.years), "explained_variance_ratio": ratios,
                          "top2_sum": sum(ratios[:2])}
        summary["model_trend"] = _trend(analytics.model_concentration_by_year(models), "model")
    if args.benchmarks:
        records = run.load_benchmarks()
        pareto = analytics.country_pareto(records)
        run.add_output(analytics.write_pareto(
            pareto, table_path(run.out, "country_pareto", args.format), args.format))
        top3 = pareto.rows[min(2, len(pareto.rows) - 1)][2]
        summary["country"] = {"countries": len(pareto.rows), "gini": pareto.gini,
                              "top3_cumulative_share": top3}
        summary["benchmark_trend"] = _trend(
            analytics.benchmark_concentration_by_year(records), "benchmark")
    return run.finish(summary)


def cmd_validate(args) -> dict:
    if not args.models and not args.benchmarks:
        raise UsageError("validate needs --models and/or --benchmarks")
    run = Run(args)
    if args.models:
        run.load_models()
    if args.benchmarks:
        run.load_benchmarks()
    return run.finish({"command": "validate", "manifests": run.manifests})


# ---------------------------------------------------------------------------
# parser


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--seed", type=_u64, default=abm.DEFAULT_SEED,
                   help="master random seed (default: %(default)s)")
    g.add_argument("--out", default="out", help="output directory (default: %(default)s)")
    g.add_argument("--format", choices=TABLE_FORMATS, default="csv",
                   help="table output format (default: %(default)s)")
    g.add_argument("-v", "--verbose", action="store_true", help="debug logging on stderr")
    return p


def _inputs(p: argparse.ArgumentParser, models: bool = False, benchmarks: bool = True,
            required: bool = True) -> None:
    g = p.add_argument_group("inputs")
    if models:
        g.add_argument("--models", required=False, help="models snapshot (csv or jsonl)")
    if benchmarks:
        g.add_argument("--benchmarks", required=required and not models,
                       help="benchmarks snapshot (csv or jsonl)")
        g.add_argument("--affiliations", help="affiliations sidecar csv (csv format only)")
    g.add_argument("--input-format", choices=ingest.FORMATS, default=None,
                   help="input format (default: inferred from the file extension)")
    g.add_argument("--snapshot-date", type=_iso_date, default=None,
                   help="latest admissible release date (default: today)")
    g.add_argument("--aliases", default=None, help="alias table csv (variant,canonical)")


def _sim_flags(p: argparse.ArgumentParser, with_beta_gamma: bool) -> None:
    g = p.add_argument_group("model parameters")
    g.add_argument("--alpha", type=float, default=1.5,
                   help="preferential-attachment exponent (default: %(default)s)")
    if with_beta_gamma:
        g.add_argument("--beta", type=float, default=0.02,
                       help="over-fit penalty (default: %(default)s)")
        g.add_argument("--gamma", type=float, default=1e-4,
                       help="per-step entry probability (default: %(default)s)")
    g.add_argument("--delta", type=float, default=0.1,
                   help="debt decay per step (default: %(default)s)")
    g.add_argument("--steps", type=_positive_int, default=10_000,
                   help="steps per run (default: %(default)s)")
    g.add_argument("--initial", type=_positive_int, default=1,
                   help="initial number of benchmarks (default: %(default)s)")
    g.add_argument("--decay-mode", choices=abm.DECAY_MODES, default="subtractive",
                   help="debt decay law (default: %(default)s)")
    g.add_argument("--tail-fraction", type=float, default=0.1,
                   help="trailing fraction of steps averaged as steady state (default: %(default)s)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="benchconc",
        description="Benchmark-ecosystem concentration metrics, graph analysis and simulation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    common = _common()
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("authority", parents=[common], help="institutional authority shares",
                       formatter_class=fmt)
    _inputs(p)
    p.add_argument("--variant", choices=("baseline", "rate-per-age", "windowed", "decay"),
                   default="baseline", help="age/recency adjustment")
    p.add_argument("--reference-date", type=_iso_date, default=None,
                   help="date ages are measured to (required for non-baseline variants)")
    p.add_argument("--window-years", type=float, default=1.0, help="window length W")
    p.add_argument("--half-life-years", type=float, default=1.0, help="decay half-life h")
    p.add_argument("--min-age-years", type=float, default=0.25, help="rate-per-age age floor")
    p.add_argument("--blend-alpha", type=float, nargs="+", default=[0.25],
                   help="star weight(s); several values produce a stability report")
    p.add_argument("--group-by", choices=("institution", "country"), default="institution",
                   help="entity that receives fractional credit")
    p.add_argument("--top-k", type=_positive_int, default=3, help="top shares in the summary")
    p.add_argument("--jaccard-k", type=_positive_int, default=10, help="top-k for Jaccard")
    p.add_argument("--spearman-k", type=_positive_int, default=20,
                   help="top-k union for Spearman")
    p.add_argument("--exclude-unknown", action="store_true",
                   help=f"drop the {UNLISTED_ENTITY!r} bucket before computing indices")
    p.add_argument("--robustness", action="store_true",
                   help="also write the age/recency robustness table")
    p.set_defaults(handler=cmd_authority, parser=p)

    p = sub.add_parser("graph", parents=[common], help="tripartite graph centralities",
                       formatter_class=fmt)
    _inputs(p)
    p.add_argument("--k", type=_positive_int, default=3, help="core order for betweenness")
    p.add_argument("--kinds", nargs="+", choices=graph.NODE_KINDS, default=None,
                   help="node kinds included in the degree Gini (default: all)")
    p.set_defaults(handler=cmd_graph, parser=p)

    p = sub.add_parser("simulate", parents=[common], help="one agent-based model run",
                       formatter_class=fmt)
    _sim_flags(p, with_beta_gamma=True)
    p.set_defaults(handler=cmd_simulate, parser=p)

    p = sub.add_parser("sweep", parents=[common], help="(beta, gamma) phase diagram",
                       formatter_class=fmt)
    _sim_flags(p, with_beta_gamma=False)
    g = p.add_argument_group("grid")
    g.add_argument("--betas", type=float, nargs="+", default=None,
                   help="explicit beta axis (overrides --beta-min/max/count)")
    g.add_argument("--beta-min", type=float, default=0.0, help="lowest beta")
    g.add_argument("--beta-max", type=float, default=0.05, help="highest beta")
    g.add_argument("--beta-count", type=_positive_int, default=11,
                   help="number of evenly spaced betas")
    g.add_argument("--gammas", type=float, nargs="+", default=None,
                   help="explicit gamma axis (overrides --gamma-min/max/count)")
    g.add_argument("--gamma-min", type=float, default=1e-6, help="lowest positive gamma")
    g.add_argument("--gamma-max", type=float, default=2e-3, help="highest gamma")
    g.add_argument("--gamma-count", type=_positive_int, default=25,
                   help="number of log-spaced gammas")
    g.add_argument("--include-gamma-zero", action="store_true", help="prepend gamma = 0")
    g.add_argument("--replicates", type=_positive_int, default=16,
                   help="independent runs per cell")
    g.add_argument("--jobs", type=_positive_int, default=1, help="parallel worker threads")
    g.add_argument("--level", type=float, default=0.5, help="HHI level of the tipping contour")
    p.set_defaults(handler=cmd_sweep, parser=p)

    p = sub.add_parser("analytics", parents=[common], help="indicators, PCA, country Pareto",
                       formatter_class=fmt)
    _inputs(p, models=True)
    p.add_argument("--n-components", type=_positive_int, default=None,
                   help="retained components (default: all)")
    p.set_defaults(handler=cmd_analytics, parser=p)

    p = sub.add_parser("validate", parents=[common], help="ingest-only dry run",
                       formatter_class=fmt)
    _inputs(p, models=True)
    p.set_defaults(handler=cmd_validate, parser=p)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s: %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.DEBUG if args.verbose else logging.WARNING)
    log.propagate = False
    try:
        summary = args.handler(args)
    except UsageError as exc:
        args.parser.error(str(exc))
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    finally:
        log.removeHandler(handler)
    json.dump(summary, sys.stdout, indent=2)
    sys.stdout.write("\n")
    return 0


if __name__ == "__main__":
    sys.exit(main())
