"""Experiment orchestration over the epidemic engine.

Three experiment families share one replicate pool:

* preventive: vaccinate before spreading starts, one random seed per
  replicate, spread over the days after the ranking window;
* post_outbreak: spread from a seed set, vaccinate the top-ranked
  still-susceptible nodes on a fixed day;
* ring: from the vaccination day onward, identified infected nodes trigger
  vaccination of their qualifying susceptible neighbors.

Replicate i uses the same derived run_seed in every strategy and at every
vaccination rate, so comparisons across strategies are paired. All
stochastic choices flow from the recorded master seed; reruns (at any worker
count) reproduce results exactly.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
import multiprocessing
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Sequence

import numpy as np

from .epidemic import (SUSCEPTIBLE, DiseaseParams, OutbreakRecord, SimState, run)
from .errors import ConfigError, DataError
from .network import ALL_KINDS, ContactNetwork, kind_set_from_name
from .rng import (STREAM_RING_IDENTIFY, STREAM_RING_RANDOM, STREAM_SEED_CHOICE,
                  derive_seed, keyed_u01)
from .strategies import (STRATEGIES, RankingParams, ScoreTable, av_rank, dv_rank,
                         movement_scores, rv_scores, sample_observed, score_threshold,
                         select_for_vaccination)

EXPERIMENTS = ("preventive", "post_outbreak", "ring")

_REFERENCE = "REFERENCE"

#: Vaccination-rate grids walked by the containment search, coarse to fine.
CONTAINMENT_GRID = tuple(sorted({0.0}
                                | {round(0.2 * k, 1) for k in range(1, 11)}
                                | {float(k) for k in range(1, 7)}
                                | {float(k) for k in range(0, 30, 5)}
                                | {float(k) for k in range(10, 101, 10)}))


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything that determines a sweep's output, hashed for provenance."""

    experiment: str = "preventive"
    strategy: str = "IMV"
    p_grid: tuple[float, ...] = (0.2, 0.4, 0.6, 0.8, 1.0, 1.2, 1.4, 1.6, 1.8, 2.0)
    observed_fraction: float = 1.0
    n_replicates: int = 100
    seed_set_size: int = 1
    simulation_days: int = 35
    spread_start_day: int = 7
    vaccination_day: int = 7
    ranking_window_days: int = 7
    kinds: str = "direct"
    profile_kinds: str = "direct"
    master_seed: int = 0
    containment_threshold: int = 100
    network_label: str = ""
    disease: DiseaseParams = field(default_factory=DiseaseParams)
    ranking: RankingParams = field(default_factory=RankingParams)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.strategy!r}")
        for p in self.p_grid:
            if not 0.0 <= p <= 100.0:
                raise ConfigError(f"vaccination rate {p} outside [0, 100]")
        if not 0.0 <= self.observed_fraction <= 1.0:
            raise ConfigError("observed_fraction must be in [0, 1]")
        if self.n_replicates < 1:
            raise ConfigError("n_replicates must be >= 1")
        if self.experiment != "preventive" and self.simulation_days < self.vaccination_day:
            raise ConfigError("simulation_days must be >= vaccination_day")
        kind_set_from_name(self.kinds)
        kind_set_from_name(self.profile_kinds)

    def canonical_dict(self) -> dict:
        d = asdict(self)
        d["disease"]["infectious_period_weights"] = (
            list(self.disease.infectious_period_weights)
            if self.disease.infectious_period_weights else None)
        d["ranking"]["class_table"] = [list(b) for b in self.ranking.class_table.bounds]
        d["p_grid"] = list(self.p_grid)
        return d

    def config_hash(self) -> str:
        blob = json.dumps(self.canonical_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class SweepRow:
    strategy: str
    p: float
    f: float
    kinds: str
    mean_outbreak: float
    eta: float | None
    over_threshold_count: int
    mean_vaccinated: float
    n_replicates: int
    config_hash: str


@dataclass
class SweepResult:
    config: ExperimentConfig
    reference_mean: float
    rows: list[SweepRow]
    replicate_records: list[dict]

    CSV_COLUMNS = ("strategy", "P", "F", "kinds", "mean_outbreak", "eta",
                   "over_threshold_count", "mean_vaccinated", "n_replicates",
                   "config_hash")

    def write_csv(self, path: str) -> None:
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(self.CSV_COLUMNS)
            for r in self.rows:
                w.writerow([r.strategy, repr(float(r.p)), repr(float(r.f)), r.kinds,
                            repr(float(r.mean_outbreak)),
                            "NA" if r.eta is None else repr(float(r.eta)),
                            r.over_threshold_count, repr(float(r.mean_vaccinated)),
                            r.n_replicates, r.config_hash])

    def write_jsonl(self, path: str) -> None:
        with open(path, "w") as f:
            for rec in self.replicate_records:
                f.write(json.dumps(rec, sort_keys=True) + "\n")


def efficiency(reference_mean: float, candidate_mean: float) -> float:
    """Percent reduction of mean outbreak size against the no-vaccination run."""
    if reference_mean <= 0:
        raise DataError("efficiency undefined for a zero reference outbreak")
    return (reference_mean - candidate_mean) / reference_mean * 100.0


# ---------------------------------------------------------------------------
# Rankings and selections
# ---------------------------------------------------------------------------

def compute_scores(net: ContactNetwork, strategy: str, config: ExperimentConfig) -> ScoreTable:
    """Score table for one strategy under the configured window/kinds/F.

    Movement strategies always profile the node's own hosted visits
    (``profile_kinds``): what a person can report about their movements does
    not depend on whether the experiment also counts indirect links. AV and
    DV use the experiment's ``kinds``. Under partial observation both the
    ranked nodes and (for AV) the nameable nodes are restricted to the
    observed sample; RV needs no information and scores everyone.
    """
    window = range(min(config.ranking_window_days, net.n_days))
    observed = None
    if config.observed_fraction < 1.0:
        pool = net.active_nodes(window, ALL_KINDS)
        rng = np.random.default_rng(derive_seed(config.master_seed, 11,
                                                int(round(config.observed_fraction * 1000))))
        observed = sample_observed(pool, config.observed_fraction, rng)
    if strategy == "RV":
        rng = np.random.default_rng(derive_seed(config.master_seed, 12))
        return rv_scores(net.n_nodes, rng)
    if strategy == "AV":
        rng = np.random.default_rng(derive_seed(config.master_seed, 13,
                                                int(round(config.observed_fraction * 1000))))
        return av_rank(net, window, kind_set_from_name(config.kinds), rng, observed)
    if strategy == "DV":
        return dv_rank(net, window, kind_set_from_name(config.kinds), observed)
    return movement_scores(net, strategy, config.ranking, window,
                           kind_set_from_name(config.profile_kinds), observed)


def compute_selections(net: ContactNetwork, config: ExperimentConfig,
                       scores: ScoreTable | None = None) -> dict[float, np.ndarray]:
    """Selected node arrays per vaccination rate in the grid."""
    scores = scores if scores is not None else compute_scores(net, config.strategy, config)
    out: dict[float, np.ndarray] = {}
    for p in config.p_grid:
        rng = np.random.default_rng(derive_seed(
            config.master_seed, 21, STRATEGIES.index(config.strategy),
            int(round(p * 1000)), int(round(config.observed_fraction * 1000))))
        sel = select_for_vaccination(scores, p, net.n_nodes, rng)
        out[p] = np.asarray(sorted(sel.selected), dtype=np.int64)
    return out


# ---------------------------------------------------------------------------
# Vaccination hooks
# ---------------------------------------------------------------------------

class PopulationHook:
    """Vaccinate the selected, still-susceptible nodes on one fixed day."""

    def __init__(self, selected: np.ndarray, day: int):
        self.selected = selected
        self.day = day

    def __call__(self, sim_day: int, state: SimState) -> None:
        if sim_day == self.day:
            state.vaccinate(self.selected)


class RingHook:
    """Vaccinate qualifying neighbors of identified infected nodes.

    On the start day every currently infected node is a trigger; afterwards
    each day's newly committed infections trigger. Each infected node is
    identified at most once, with probability ``identify_fraction``. For
    score-based strategies a neighbor qualifies when its precomputed score
    exceeds the threshold; for the random strategy each susceptible neighbor
    is taken independently with probability ``random_fraction``.
    """

    def __init__(self, indptr: np.ndarray, indices: np.ndarray,
                 qualifies: np.ndarray | None, random_fraction: float | None,
                 identify_fraction: float, start_day: int, run_seed: int):
        self.indptr = indptr
        self.indices = indices
        self.qualifies = qualifies
        self.random_fraction = random_fraction
        self.identify_fraction = identify_fraction
        self.start_day = start_day
        self.run_seed = run_seed
        self.triggered = np.zeros(len(indptr) - 1, dtype=bool)

    def __call__(self, sim_day: int, state: SimState) -> None:
        if sim_day < self.start_day:
            return
        if sim_day == self.start_day:
            targets = state.infected_nodes()
        else:
            targets = np.asarray(state.new_infections_last_day, dtype=np.int64)
        if targets.size == 0:
            return
        targets = targets[~self.triggered[targets]]
        self.triggered[targets] = True
        if self.identify_fraction < 1.0:
            u = keyed_u01(self.run_seed, sim_day, STREAM_RING_IDENTIFY, targets)
            targets = targets[u < self.identify_fraction]
        for t in targets:
            nbrs = self.indices[self.indptr[t]:self.indptr[t + 1]]
            sus = nbrs[state.status[nbrs] == SUSCEPTIBLE]
            if sus.size == 0:
                continue
            if self.qualifies is not None:
                chosen = sus[self.qualifies[sus]]
            else:
                u = keyed_u01(self.run_seed, sim_day, STREAM_RING_RANDOM, sus, int(t))
                chosen = sus[u < self.random_fraction]
            state.vaccinate(chosen)


# ---------------------------------------------------------------------------
# Replicate execution (optionally across a worker pool)
# ---------------------------------------------------------------------------

_WORKER_CTX: dict = {}


def _replicate_seed(config: ExperimentConfig, rep: int) -> int:
    return derive_seed(config.master_seed, 101, rep)


def preventive_seed_node(net_n_nodes: int, run_seed: int) -> int:
    return int(keyed_u01(run_seed, 0, STREAM_SEED_CHOICE, 0) * net_n_nodes)


def outbreak_seed_set(n_nodes: int, size: int, run_seed: int) -> np.ndarray:
    rng = np.random.default_rng(derive_seed(run_seed, 7))
    return np.sort(rng.choice(n_nodes, size=min(size, n_nodes), replace=False))


def _run_one(job: tuple) -> tuple[tuple, OutbreakRecord]:
    p_value, rep = job
    net: ContactNetwork = _WORKER_CTX["net"]
    config: ExperimentConfig = _WORKER_CTX["config"]
    run_seed = _replicate_seed(config, rep)
    is_reference = p_value is None
    if config.experiment == "preventive":
        seeds = [preventive_seed_node(net.n_nodes, run_seed)]
        initial = () if is_reference else _WORKER_CTX["selections"][p_value]
        rec = run(net, seeds, config.simulation_days, config.disease,
                  None, run_seed, config.spread_start_day, initial_vaccinated=initial)
    else:
        seeds = outbreak_seed_set(net.n_nodes, config.seed_set_size, run_seed)
        if is_reference:
            hook = None
        elif config.experiment == "post_outbreak":
            hook = PopulationHook(_WORKER_CTX["selections"][p_value], config.vaccination_day)
        else:
            indptr, indices = _WORKER_CTX["ring_adjacency"]
            qualifies, random_fraction = _WORKER_CTX["ring_rules"][p_value]
            hook = RingHook(indptr, indices, qualifies, random_fraction,
                            config.observed_fraction, config.vaccination_day, run_seed)
        rec = run(net, seeds, config.simulation_days, config.disease, hook, run_seed, 0)
    return job, rec


def _parallel_records(jobs: list[tuple], threads: int) -> dict[tuple, OutbreakRecord]:
    if threads <= 1:
        return dict(_run_one(j) for j in jobs)
    ctx = multiprocessing.get_context("fork")
    chunksize = max(1, len(jobs) // (threads * 8))
    with ctx.Pool(threads) as pool:
        return dict(pool.imap_unordered(_run_one, jobs, chunksize=chunksize))


def run_sweep(net: ContactNetwork, config: ExperimentConfig, threads: int = 1,
              completed: dict | None = None) -> SweepResult:
    """Run one experiment sweep; the workhorse behind the CLI ``sweep``.

    ``completed`` maps (p_or_None, replicate) to previously recorded
    replicate dicts (from a resume journal); those jobs are not re-run.
    """
    _WORKER_CTX.clear()
    _WORKER_CTX["net"] = net
    _WORKER_CTX["config"] = config
    if config.experiment in ("preventive", "post_outbreak"):
        _WORKER_CTX["selections"] = compute_selections(net, config)
    else:
        scores = compute_scores(net, config.strategy, config)
        indptr, indices = net.neighbor_sets_csr(None, kind_set_from_name(config.kinds))
        _WORKER_CTX["ring_adjacency"] = (indptr, indices)
        rules: dict[float, tuple] = {}
        for p in config.p_grid:
            if config.strategy == "RV":
                rules[p] = (None, p / 100.0)
            else:
                threshold = score_threshold(scores, p, net.n_nodes)
                qualifies = np.zeros(net.n_nodes, dtype=bool)
                qualifies[scores.node_ids[scores.scores > threshold]] = True
                rules[p] = (qualifies, None)
        _WORKER_CTX["ring_rules"] = rules

    completed = completed or {}
    jobs = []
    for rep in range(config.n_replicates):
        if (None, rep) not in completed:
            jobs.append((None, rep))
    for p in config.p_grid:
        for rep in range(config.n_replicates):
            if (p, rep) not in completed:
                jobs.append((p, rep))
    records = _parallel_records(jobs, threads)
    _WORKER_CTX.clear()

    config_hash = config.config_hash()
    replicate_records: list[dict] = []
    by_key: dict[tuple, dict] = dict(completed)
    for (p_value, rep), rec in records.items():
        d = rec.to_json_dict()
        d.update({"replicate": rep,
                  "strategy": _REFERENCE if p_value is None else config.strategy,
                  "P": -1.0 if p_value is None else p_value,
                  "F": config.observed_fraction,
                  "kinds": config.kinds,
                  "config_hash": config_hash})
        by_key[(p_value, rep)] = d
    ref_finals = [by_key[(None, rep)]["final_outbreak_size"] for rep in range(config.n_replicates)]
    reference_mean = math.fsum(ref_finals) / config.n_replicates

    rows = []
    for rep in range(config.n_replicates):
        replicate_records.append(by_key[(None, rep)])
    for p in config.p_grid:
        finals = []
        vaccinated = []
        over = 0
        for rep in range(config.n_replicates):
            d = by_key[(p, rep)]
            replicate_records.append(d)
            finals.append(d["final_outbreak_size"])
            vaccinated.append(d["vaccinated_count"])
            if d["final_outbreak_size"] > config.containment_threshold:
                over += 1
        mean_outbreak = math.fsum(finals) / config.n_replicates
        eta = None
        if reference_mean > 0:
            eta = efficiency(reference_mean, mean_outbreak)
        rows.append(SweepRow(config.strategy, p, config.observed_fraction, config.kinds,
                             mean_outbreak, eta, over,
                             math.fsum(vaccinated) / config.n_replicates,
                             config.n_replicates, config_hash))
    return SweepResult(config, reference_mean, rows, replicate_records)


def reference_outbreak(net: ContactNetwork, config: ExperimentConfig,
                       threads: int = 1) -> tuple[float, list[OutbreakRecord]]:
    """Mean outbreak size without vaccination, over paired replicate seeds."""
    ref_config = replace(config, p_grid=())
    result = run_sweep(net, ref_config, threads)
    records = [OutbreakRecord(tuple(d["seeds"]), tuple(d["daily_new_infections"]),
                              d["final_outbreak_size"], d["vaccinated_count"],
                              d["rng_seed"], d["vaccination_skipped"])
               for d in result.replicate_records]
    return result.reference_mean, records


@dataclass
class ContainmentResult:
    contained_at: float | None
    counts: dict[float, int]


def containment_search(net: ContactNetwork, config: ExperimentConfig,
                       threads: int = 1, grid: Sequence[float] | None = None) -> ContainmentResult:
    """Smallest grid vaccination rate with zero replicates over the threshold."""
    counts: dict[float, int] = {}
    for p in (grid if grid is not None else CONTAINMENT_GRID):
        step = replace(config, p_grid=(float(p),))
        result = run_sweep(net, step, threads)
        counts[float(p)] = result.rows[0].over_threshold_count
        if counts[float(p)] == 0:
            return ContainmentResult(float(p), counts)
    return ContainmentResult(None, counts)
