"""Command-line surface: ingest, generate, rank, simulate, sweep, report.

Every command reads one strict JSON config (unknown keys are errors), takes
its randomness from a single recorded seed, and writes a manifest next to
its outputs. Exit codes: 0 success, 2 config error, 3 data error, 4 numeric
error.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import fields

import numpy as np

from .epidemic import DiseaseParams
from .errors import ConfigError, DataError, NumericError, SpdtsimError
from .gdt import GdtParams, generate
from .harness import (EXPERIMENTS, ContainmentResult, ExperimentConfig, SweepResult,
                      containment_search, run_sweep)
from .ingest import IngestionParams, IngestReport, densify, ingest_trace, read_trace
from .manifest import PhaseTimer, RunManifest, canonical_hash
from .network import ContactNetwork, load_network, save_network
from .strategies import (STRATEGIES, LocationClassTable, RankingParams, ScoreTable)
from .harness import compute_scores


def _load_config(path: str | None) -> dict:
    if path is None:
        return {"schema_version": 1}
    try:
        with open(path) as f:
            cfg = json.load(f)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    if cfg.get("schema_version") != 1:
        raise ConfigError("config must declare schema_version 1")
    return cfg


def _check_keys(cfg: dict, allowed: set[str], context: str) -> None:
    unknown = set(cfg) - allowed - {"schema_version"}
    if unknown:
        raise ConfigError(f"unknown {context} config keys: {sorted(unknown)}")


def _build_params(cls, cfg: dict, context: str):
    allowed = {f.name for f in fields(cls)}
    _check_keys(cfg, allowed, context)
    kwargs = dict(cfg)
    kwargs.pop("schema_version", None)
    for key in ("removal_time_range", "infectious_period_range", "degree_exponent_range"):
        if key in kwargs:
            kwargs[key] = tuple(kwargs[key])
    if "infectious_period_weights" in kwargs and kwargs["infectious_period_weights"] is not None:
        kwargs["infectious_period_weights"] = tuple(kwargs["infectious_period_weights"])
    return cls(**kwargs)


def _build_ranking(cfg: dict) -> RankingParams:
    cfg = dict(cfg)
    cap = cfg.pop("class_cap", None)
    allowed = {f.name for f in fields(RankingParams)} - {"class_table"}
    _check_keys(cfg, allowed, "ranking")
    if cap is not None:
        cfg["class_table"] = LocationClassTable.with_cap(int(cap))
    return RankingParams(**cfg)


def _ensure_outdir(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

_INGEST_KEYS = {"radius_m", "delta_seconds", "min_neighbor_updates", "format",
                "densify_to_days", "master_seed"}


def cmd_ingest(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _INGEST_KEYS, "ingest")
    params = IngestionParams(radius_m=cfg.get("radius_m", 20.0),
                             delta_seconds=cfg.get("delta_seconds", 3600),
                             min_neighbor_updates=cfg.get("min_neighbor_updates", 2))
    seed = args.seed if args.seed is not None else cfg.get("master_seed", 0)
    out = _ensure_outdir(args.out)
    config_hash = canonical_hash({"command": "ingest", "radius_m": params.radius_m,
                                  "delta_seconds": params.delta_seconds,
                                  "min_neighbor_updates": params.min_neighbor_updates,
                                  "densify_to_days": cfg.get("densify_to_days"),
                                  "master_seed": seed})
    manifest = RunManifest(sys.argv, config_hash, seed)
    timer = PhaseTimer(manifest)
    manifest.add_input(args.trace)
    timer.start("read")
    updates, report = read_trace(args.trace)
    timer.start("ingest")
    net = ingest_trace(updates, params, report)
    if cfg.get("densify_to_days"):
        net = densify(net, int(cfg["densify_to_days"]), np.random.default_rng(seed))
    timer.start("write")
    ext = ".bin" if cfg.get("format") == "binary" else ".spdt"
    net_path = os.path.join(out, "network" + ext)
    save_network(net, net_path)
    report_path = os.path.join(out, "ingest_report.json")
    with open(report_path, "w") as f:
        json.dump({"n_updates": report.n_updates, "n_rejected": report.n_rejected,
                   "rejected_lines": report.rejected_lines[:100],
                   "n_users": report.n_users, "n_stays": report.n_stays,
                   "n_links": report.n_links}, f, indent=2, sort_keys=True)
        f.write("\n")
    timer.stop()
    manifest.add_output(net_path)
    manifest.add_output(report_path)
    manifest.write(os.path.join(out, "manifest.json"))
    print(f"ingested {report.n_updates} updates ({report.n_rejected} rejected) -> "
          f"{net.n_nodes} nodes, {net.n_links} links over {net.n_days} days")
    if report.n_updates == 0:
        print("warning: empty input trace")
    return 0


def cmd_generate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    gdt_cfg = {k: v for k, v in cfg.items()
               if k not in ("format", "master_seed", "schema_version")}
    params = _build_params(GdtParams, gdt_cfg, "generate")
    seed = args.seed if args.seed is not None else cfg.get("master_seed", 0)
    out = _ensure_outdir(args.out)
    payload = {"command": "generate", "master_seed": seed}
    payload.update({f.name: getattr(params, f.name) for f in fields(GdtParams)})
    payload["degree_exponent_range"] = list(params.degree_exponent_range)
    manifest = RunManifest(sys.argv, canonical_hash(payload), seed)
    timer = PhaseTimer(manifest)
    timer.start("generate")
    net = generate(params, seed)
    timer.start("write")
    ext = ".bin" if cfg.get("format") == "binary" else ".spdt"
    net_path = os.path.join(args.out, "network" + ext)
    save_network(net, net_path)
    timer.stop()
    manifest.add_output(net_path)
    manifest.write(os.path.join(out, "manifest.json"))
    print(f"generated {net.n_nodes} nodes, {net.n_links} links over {net.n_days} days")
    return 0


_SWEEP_KEYS = {"network", "experiment", "strategy", "p_grid", "observed_fraction",
               "n_replicates", "seed_set_size", "simulation_days", "spread_start_day",
               "vaccination_day", "ranking_window_days", "kinds", "profile_kinds",
               "containment_threshold", "master_seed", "disease", "ranking",
               "containment_search"}


def _experiment_config(cfg: dict, args: argparse.Namespace) -> tuple[ExperimentConfig, str]:
    _check_keys(cfg, _SWEEP_KEYS, "sweep")
    if "network" not in cfg:
        raise ConfigError("sweep config needs a 'network' path")
    net_path = cfg["network"]
    seed = args.seed if args.seed is not None else cfg.get("master_seed", 0)
    from .manifest import sha256_file
    try:
        net_digest = sha256_file(net_path)
    except FileNotFoundError:
        raise DataError(f"network file not found: {net_path}") from None
    kwargs = dict(
        experiment=cfg.get("experiment", "preventive"),
        strategy=cfg.get("strategy", "IMV"),
        p_grid=tuple(float(p) for p in cfg.get("p_grid", (0.2, 0.4, 0.6, 0.8, 1.0,
                                                          1.2, 1.4, 1.6, 1.8, 2.0))),
        observed_fraction=float(cfg.get("observed_fraction", 1.0)),
        n_replicates=int(cfg.get("n_replicates", 100)),
        seed_set_size=int(cfg.get("seed_set_size", 1)),
        simulation_days=int(cfg.get("simulation_days", 35)),
        spread_start_day=int(cfg.get("spread_start_day", 7)),
        vaccination_day=int(cfg.get("vaccination_day", 7)),
        ranking_window_days=int(cfg.get("ranking_window_days", 7)),
        kinds=cfg.get("kinds", "direct"),
        profile_kinds=cfg.get("profile_kinds", "direct"),
        master_seed=seed,
        containment_threshold=int(cfg.get("containment_threshold", 100)),
        network_label=net_digest,
        disease=_build_params(DiseaseParams, cfg.get("disease", {}), "disease"),
        ranking=_build_ranking(cfg.get("ranking", {})))
    return ExperimentConfig(**kwargs), net_path


def _read_journal(path: str, config_hash: str) -> dict:
    completed: dict = {}
    if not os.path.exists(path):
        return completed
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue  # truncated tail of an interrupted run
            if rec.get("config_hash") != config_hash:
                continue
            key = (None if rec["P"] < 0 else rec["P"], rec["replicate"])
            completed[key] = rec
    return completed


def cmd_sweep(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    config, net_path = _experiment_config(cfg, args)
    out = _ensure_outdir(args.out)
    manifest = RunManifest(sys.argv, config.config_hash(), config.master_seed)
    timer = PhaseTimer(manifest)
    manifest.add_input(net_path)
    timer.start("load")
    net = load_network(net_path)
    jsonl_path = os.path.join(out, "replicates.jsonl")
    csv_path = os.path.join(out, "sweep.csv")
    completed = _read_journal(jsonl_path, config.config_hash())
    if completed:
        print(f"resuming: {len(completed)} replicate records already complete")
    timer.start("simulate")
    result = run_sweep(net, config, threads=args.threads, completed=completed)
    timer.start("write")
    result.write_csv(csv_path)
    result.write_jsonl(jsonl_path)
    outputs = [csv_path, jsonl_path]
    if cfg.get("containment_search"):
        timer.start("containment")
        containment = containment_search(net, config, threads=args.threads)
        cont_path = os.path.join(out, "containment.json")
        with open(cont_path, "w") as f:
            json.dump({"contained_at": containment.contained_at,
                       "threshold": config.containment_threshold,
                       "over_threshold_counts": {repr(p): c for p, c
                                                 in containment.counts.items()}},
                      f, indent=2, sort_keys=True)
            f.write("\n")
        outputs.append(cont_path)
    timer.stop()
    for path in outputs:
        manifest.add_output(path)
    manifest.write(os.path.join(out, "manifest.json"))
    for row in result.rows:
        eta = "NA" if row.eta is None else f"{row.eta:.2f}"
        print(f"{row.strategy} P={row.p:g} F={row.f:g} mean={row.mean_outbreak:.2f} "
              f"eta={eta} over{config.containment_threshold}={row.over_threshold_count}")
    return 0


_RANK_KEYS = {"network", "strategy", "kinds", "profile_kinds", "observed_fraction",
              "ranking_window_days", "ranking", "master_seed"}


def cmd_rank(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _RANK_KEYS, "rank")
    if "network" not in cfg:
        raise ConfigError("rank config needs a 'network' path")
    strategy = cfg.get("strategy", "IMV")
    if strategy not in STRATEGIES:
        raise ConfigError(f"unknown strategy {strategy!r}")
    seed = args.seed if args.seed is not None else cfg.get("master_seed", 0)
    config = ExperimentConfig(
        strategy=strategy, kinds=cfg.get("kinds", "direct"),
        profile_kinds=cfg.get("profile_kinds", "direct"),
        observed_fraction=float(cfg.get("observed_fraction", 1.0)),
        ranking_window_days=int(cfg.get("ranking_window_days", 7)),
        master_seed=seed, ranking=_build_ranking(cfg.get("ranking", {})))
    out = _ensure_outdir(args.out)
    manifest = RunManifest(sys.argv, config.config_hash(), seed)
    timer = PhaseTimer(manifest)
    manifest.add_input(cfg["network"])
    timer.start("load")
    net = load_network(cfg["network"])
    timer.start("rank")
    table = compute_scores(net, strategy, config)
    timer.start("write")
    scores_path = os.path.join(out, "scores.csv")
    with open(scores_path, "w") as f:
        f.write(f"# strategy={strategy} kinds={config.kinds} "
                f"beta={config.ranking.beta} beta0={config.ranking.beta0} "
                f"F={config.observed_fraction}\n")
        f.write("node_id,score,strategy,config_hash\n")
        for node, score in zip(table.node_ids, table.scores):
            f.write(f"{node},{score!r},{strategy},{config.config_hash()}\n")
    timer.stop()
    manifest.add_output(scores_path)
    manifest.write(os.path.join(out, "manifest.json"))
    print(f"ranked {len(table.node_ids)} nodes with {strategy}")
    return 0


_SIMULATE_KEYS = {"network", "n_replicates", "seed_set_size", "simulation_days",
                  "spread_start_day", "disease", "master_seed"}


def cmd_simulate(args: argparse.Namespace) -> int:
    cfg = _load_config(args.config)
    _check_keys(cfg, _SIMULATE_KEYS, "simulate")
    if "network" not in cfg:
        raise ConfigError("simulate config needs a 'network' path")
    cfg = dict(cfg)
    cfg["experiment"] = "preventive" if int(cfg.get("seed_set_size", 1)) == 1 else "post_outbreak"
    cfg["p_grid"] = []
    args_cfg = dict(cfg)
    config, net_path = _experiment_config(args_cfg, args)
    out = _ensure_outdir(args.out)
    manifest = RunManifest(sys.argv, config.config_hash(), config.master_seed)
    timer = PhaseTimer(manifest)
    manifest.add_input(net_path)
    timer.start("load")
    net = load_network(net_path)
    timer.start("simulate")
    result = run_sweep(net, config, threads=args.threads)
    timer.start("write")
    jsonl_path = os.path.join(out, "replicates.jsonl")
    result.write_jsonl(jsonl_path)
    summary_path = os.path.join(out, "summary.json")
    with open(summary_path, "w") as f:
        json.dump({"reference_mean_outbreak": result.reference_mean,
                   "n_replicates": config.n_replicates,
                   "config_hash": config.config_hash()}, f, indent=2, sort_keys=True)
        f.write("\n")
    timer.stop()
    manifest.add_output(jsonl_path)
    manifest.add_output(summary_path)
    manifest.write(os.path.join(out, "manifest.json"))
    print(f"mean outbreak over {config.n_replicates} replicates: {result.reference_mean:.3f}")
    return 0


def cmd_report(args: argparse.Namespace) -> int:
    import csv as csvmod
    if not os.path.exists(args.csv):
        raise DataError(f"sweep CSV not found: {args.csv}")
    with open(args.csv) as f:
        rows = list(csvmod.DictReader(f))
    if not rows:
        raise DataError(f"sweep CSV is empty: {args.csv}")
    missing = set(SweepResult.CSV_COLUMNS) - set(rows[0])
    if missing:
        raise DataError(f"sweep CSV missing columns: {sorted(missing)}")
    out = _ensure_outdir(args.out)
    by_strategy: dict[str, list[dict]] = {}
    for r in rows:
        by_strategy.setdefault(r["strategy"], []).append(r)
    print(f"{'strategy':>8} {'P':>6} {'F':>5} {'mean':>10} {'eta':>8} {'vaccinated':>11}")
    summary = {}
    for strategy, srows in sorted(by_strategy.items()):
        best = min(srows, key=lambda r: float(r["mean_outbreak"]))
        summary[strategy] = {"best_p": float(best["P"]),
                             "best_mean_outbreak": float(best["mean_outbreak"]),
                             "best_eta": None if best["eta"] == "NA" else float(best["eta"])}
        for r in sorted(srows, key=lambda r: (float(r["P"]), float(r["F"]))):
            print(f"{r['strategy']:>8} {float(r['P']):>6g} {float(r['F']):>5g} "
                  f"{float(r['mean_outbreak']):>10.2f} "
                  f"{r['eta'] if r['eta'] == 'NA' else format(float(r['eta']), '.2f'):>8} "
                  f"{float(r['mean_vaccinated']):>11.1f}")
    summary_path = os.path.join(out, "summary.json")
    with open(summary_path, "w") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    print(f"summary written to {summary_path}")
    return 0


# ---------------------------------------------------------------------------

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spdt", description=__doc__)
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--seed", type=int, default=None, help="master seed override")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                        help="worker processes for replicate simulation")
    parser.add_argument("--out", default=".", help="output directory")
    sub = parser.add_subparsers(dest="cmd", required=True)
    p = sub.add_parser("ingest", help="build a contact network from a GPS trace")
    p.add_argument("trace", help="trace file: user,lat,lon,unix_seconds per line")
    p.set_defaults(fn=cmd_ingest)
    p = sub.add_parser("generate", help="generate a synthetic contact network")
    p.set_defaults(fn=cmd_generate)
    p = sub.add_parser("rank", help="compute per-node vaccination scores")
    p.set_defaults(fn=cmd_rank)
    p = sub.add_parser("simulate", help="reference outbreaks without vaccination")
    p.set_defaults(fn=cmd_simulate)
    p = sub.add_parser("sweep", help="run a vaccination experiment sweep")
    p.set_defaults(fn=cmd_sweep)
    p = sub.add_parser("report", help="summarize a sweep CSV")
    p.add_argument("csv", help="sweep CSV file")
    p.set_defaults(fn=cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except NumericError as e:
        print(f"numeric error: {e}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
