"""Per-node ranking and selection for vaccination.

Six rankings are implemented. Movement-based scores (``imv``, ``imve``,
``imvt``) derive from a node's hosted visits: how often it visits locations
of each popularity class, the exact number of people met per visit, and how
long it stayed. ``av`` counts how often a node is named when every active
node names one random neighbor, ``dv`` ranks by distinct-contact degree, and
``rv`` is the uniform-random baseline. Scores are comparable only within one
strategy and configuration.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import ConfigError, DataError
from .network import ALL_KINDS, DIRECT_KINDS, ContactNetwork, LinkKind

STRATEGIES = ("RV", "AV", "DV", "IMV", "IMVE", "IMVT")

#: Visit classes: inclusive ranges of how many people one meets per visit.
DEFAULT_CLASS_BOUNDS = ((1, 5), (6, 15), (16, 25), (26, 50), (51, 100), (101, 500))


@dataclass(frozen=True)
class LocationClassTable:
    """Degree ranges of the six visit classes, ascending and contiguous."""

    bounds: tuple[tuple[int, int], ...] = DEFAULT_CLASS_BOUNDS

    def __post_init__(self):
        if len(self.bounds) != 6:
            raise ConfigError("class table must have exactly six classes")
        for i, (lo, hi) in enumerate(self.bounds):
            if lo > hi:
                raise ConfigError(f"class {i + 1} range inverted")
            if i and lo != self.bounds[i - 1][1] + 1:
                raise ConfigError("class ranges must be contiguous and ascending")

    @classmethod
    def with_cap(cls, cap: int) -> "LocationClassTable":
        if cap < DEFAULT_CLASS_BOUNDS[-1][0]:
            raise ConfigError(f"class-6 cap must be >= {DEFAULT_CLASS_BOUNDS[-1][0]}")
        return cls(DEFAULT_CLASS_BOUNDS[:-1] + ((DEFAULT_CLASS_BOUNDS[-1][0], cap),))

    def class_of(self, degree: int) -> int:
        """0-based class index of a per-visit contact count (degree >= 1)."""
        if degree < 1:
            raise DataError("visit degree must be >= 1 to have a class")
        for i, (lo, hi) in enumerate(self.bounds):
            if degree <= hi:
                return i
        return len(self.bounds) - 1  # beyond the cap still counts as class 6


@dataclass(frozen=True)
class RankingParams:
    """Knobs of the ranking formulas.

    ``beta`` is the assumed per-contact transmission probability behind the
    movement scores; no measured value exists for it, so it is always
    reported alongside results. ``beta0``/``t0`` drive the stay-time variant:
    per-visit transmission probability ``1.6*beta0*(1-exp(-stay/t0))``, which
    stays below one only while ``1.6*beta0 <= 1``. When ``t0`` is omitted it
    is taken as the mean hosted-stay duration in the ranking window.
    """

    beta: float = 0.1
    beta0: float = 0.1
    t0: float | None = None
    window_days: int = 7
    enforce_beta0_bound: bool = True
    class_table: LocationClassTable = field(default_factory=LocationClassTable)

    def __post_init__(self):
        if not 0 < self.beta < 1:
            raise ConfigError("beta must be in (0, 1)")
        if self.enforce_beta0_bound and 1.6 * self.beta0 > 1.0 + 1e-12:
            raise ConfigError("1.6 * beta0 must be <= 1 (set enforce_beta0_bound=False to override)")
        if self.t0 is not None and self.t0 <= 0:
            raise ConfigError("t0 must be positive")
        if self.window_days < 1:
            raise ConfigError("window_days must be >= 1")


@dataclass(frozen=True)
class VisitProfile:
    """What one node could report about its own movements in the window."""

    node: int
    class_counts: tuple[int, ...]        # visits per location class
    visit_degrees: tuple[int, ...]       # exact contacts met per visit
    visit_stays: tuple[int, ...]         # stay duration per visit, seconds


@dataclass
class ScoreTable:
    """Scores of the nodes a strategy could rank, plus the strategy tag."""

    strategy: str
    node_ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        self.node_ids = np.asarray(self.node_ids, dtype=np.int64)
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if len(self.node_ids) != len(self.scores):
            raise DataError("node_ids and scores must align")
        if len(self.node_ids) and self.scores.min() < 0:
            raise DataError("scores must be nonnegative")

    def as_dict(self) -> dict[int, float]:
        return {int(n): float(s) for n, s in zip(self.node_ids, self.scores)}


@dataclass(frozen=True)
class SelectionResult:
    selected: frozenset[int]
    shortfall: int = 0


def _window_days(net: ContactNetwork, window: Iterable[int] | None, params: RankingParams | None = None):
    if window is not None:
        return list(window)
    days = params.window_days if params is not None else 7
    return list(range(min(days, net.n_days)))


def build_visit_profiles(net: ContactNetwork, window: Iterable[int] | None = None,
                         kinds: frozenset = DIRECT_KINDS,
                         class_table: LocationClassTable | None = None) -> dict[int, VisitProfile]:
    """Group each node's hosted links into visits and summarize them.

    A visit is one hosted activation: links sharing a location tag, or
    failing that an identical host interval, within one day. The visit degree
    is the number of distinct neighbors met through links of the requested
    kinds; visits where no such neighbor exists are not reportable and are
    dropped. Nodes hosting nothing get no profile (an all-zero profile is
    implied).
    """
    table = class_table or LocationClassTable()
    kind_codes = np.asarray(sorted(int(k) for k in kinds), dtype=np.uint8)
    counts: dict[int, list[int]] = {}
    degrees: dict[int, list[int]] = {}
    stays: dict[int, list[int]] = {}
    for d in _window_days(net, window):
        dl = net.day(d)
        if not len(dl):
            continue
        keep = np.isin(dl.kind, kind_codes)
        host = dl.host[keep]
        if not len(host):
            continue
        tag = dl.tag[keep]
        hs = dl.host_start[keep]
        he = dl.host_end[keep]
        nbr = dl.neighbor[keep]
        # visit key: (host, tag) when tagged, else (host, interval)
        key_a = np.where(tag >= 0, tag, hs)
        key_b = np.where(tag >= 0, np.int64(-1), he)
        order = np.lexsort((nbr, key_b, key_a, host))
        host, key_a, key_b, nbr = host[order], key_a[order], key_b[order], nbr[order]
        hs, he = hs[order], he[order]
        new_visit = np.ones(len(host), dtype=bool)
        new_visit[1:] = ((host[1:] != host[:-1]) | (key_a[1:] != key_a[:-1])
                         | (key_b[1:] != key_b[:-1]))
        new_contact = new_visit.copy()
        new_contact[1:] |= nbr[1:] != nbr[:-1]
        visit_idx = np.cumsum(new_visit) - 1
        degree_per_visit = np.bincount(visit_idx[new_contact])
        starts = np.flatnonzero(new_visit)
        for v, start in enumerate(starts):
            node = int(host[start])
            deg = int(degree_per_visit[v])
            if deg < 1:
                continue
            counts.setdefault(node, [0] * 6)[table.class_of(deg)] += 1
            degrees.setdefault(node, []).append(deg)
            stays.setdefault(node, []).append(int(he[start] - hs[start]))
    return {node: VisitProfile(node, tuple(counts[node]), tuple(degrees[node]),
                               tuple(stays[node]))
            for node in counts}


def class_potential(beta: float, class_index: int,
                    table: LocationClassTable | None = None) -> float:
    """Average chance that a visit to a class-``i`` location spreads disease.

    Midpoint of ``1-(1-beta)^d`` at the class's degree endpoints.
    """
    if not 0 < beta < 1:
        raise ConfigError("beta must be in (0, 1)")
    table = table or LocationClassTable()
    lo, hi = table.bounds[class_index]
    return 0.5 * (2.0 - (1.0 - beta) ** lo - (1.0 - beta) ** hi)


def imv_rank(profile: VisitProfile, params: RankingParams) -> float:
    """Movement score from class visit frequencies: sum of f_i * w_i."""
    return math.fsum(f * class_potential(params.beta, i, params.class_table)
                     for i, f in enumerate(profile.class_counts))


def imve_rank(profile: VisitProfile, params: RankingParams) -> float:
    """Movement score from exact per-visit contact counts."""
    return math.fsum(1.0 - (1.0 - params.beta) ** d for d in profile.visit_degrees)


def imvt_rank(profile: VisitProfile, params: RankingParams, t0: float) -> float:
    """Movement score with stay-time-modulated transmission probability."""
    if t0 <= 0:
        raise ConfigError("t0 must be positive")
    total = 0.0
    for d, stay in zip(profile.visit_degrees, profile.visit_stays):
        beta_t = 1.6 * params.beta0 * (1.0 - math.exp(-stay / t0))
        if beta_t >= 1.0:
            raise DataError(f"stay-time transmission probability {beta_t} >= 1 "
                            f"for node {profile.node}")
        total += 1.0 - (1.0 - beta_t) ** d
    return total


def mean_hosted_stay(profiles: Mapping[int, VisitProfile]) -> float:
    stays = [s for p in profiles.values() for s in p.visit_stays]
    if not stays:
        raise DataError("no hosted visits in window; cannot infer mean stay time")
    return float(np.mean(stays))


def movement_scores(net: ContactNetwork, strategy: str, params: RankingParams,
                    window: Iterable[int] | None = None,
                    kinds: frozenset = DIRECT_KINDS,
                    restrict_to: np.ndarray | None = None) -> ScoreTable:
    """Score table for IMV / IMVE / IMVT over the ranking window."""
    if strategy not in ("IMV", "IMVE", "IMVT"):
        raise ConfigError(f"not a movement strategy: {strategy}")
    profiles = build_visit_profiles(net, _window_days(net, window, params), kinds,
                                    params.class_table)
    if restrict_to is not None:
        allowed = set(int(n) for n in restrict_to)
        profiles = {n: p for n, p in profiles.items() if n in allowed}
    if strategy == "IMV":
        scorer = lambda p: imv_rank(p, params)
    elif strategy == "IMVE":
        scorer = lambda p: imve_rank(p, params)
    else:
        t0 = params.t0 if params.t0 is not None else mean_hosted_stay(profiles)
        scorer = lambda p: imvt_rank(p, params, t0)
    nodes = np.asarray(sorted(profiles), dtype=np.int64)
    return ScoreTable(strategy, nodes, np.asarray([scorer(profiles[int(n)]) for n in nodes]))


def av_rank(net: ContactNetwork, window: Iterable[int] | None = None,
            kinds: frozenset = DIRECT_KINDS, rng: np.random.Generator | None = None,
            restrict_to: np.ndarray | None = None) -> ScoreTable:
    """Acquaintance scores: every active node names one random neighbor.

    A node's score is how many times it was named. With a restricted
    (observed) node set, both the respondents and the nameable neighbors are
    restricted: nodes outside the sample neither answer nor get named.
    """
    rng = rng or np.random.default_rng()
    days = _window_days(net, window)
    indptr, indices = net.neighbor_sets_csr(days, kinds)
    observed_mask = None
    if restrict_to is not None:
        observed_mask = np.zeros(net.n_nodes, dtype=bool)
        observed_mask[np.asarray(restrict_to, dtype=np.int64)] = True
    named = np.zeros(net.n_nodes, dtype=np.int64)
    respondents = net.active_nodes(days, kinds)
    if observed_mask is not None:
        respondents = respondents[observed_mask[respondents]]
    for node in respondents:
        nbrs = indices[indptr[node]:indptr[node + 1]]
        if observed_mask is not None:
            nbrs = nbrs[observed_mask[nbrs]]
        if len(nbrs) == 0:
            continue
        named[nbrs[rng.integers(len(nbrs))]] += 1
    return ScoreTable("AV", respondents, named[respondents].astype(np.float64))


def dv_rank(net: ContactNetwork, window: Iterable[int] | None = None,
            kinds: frozenset = DIRECT_KINDS,
            restrict_to: np.ndarray | None = None) -> ScoreTable:
    """Degree scores: distinct contacts over the window."""
    days = _window_days(net, window)
    indptr, _ = net.neighbor_sets_csr(days, kinds)
    degrees = np.diff(indptr)
    nodes = net.active_nodes(days, kinds)
    if restrict_to is not None:
        mask = np.zeros(net.n_nodes, dtype=bool)
        mask[np.asarray(restrict_to, dtype=np.int64)] = True
        nodes = nodes[mask[nodes]]
    return ScoreTable("DV", nodes, degrees[nodes].astype(np.float64))


def rv_scores(n_nodes: int, rng: np.random.Generator) -> ScoreTable:
    """Uniform-random scores over the whole population."""
    return ScoreTable("RV", np.arange(n_nodes, dtype=np.int64), rng.random(n_nodes))


def sample_observed(active_nodes: np.ndarray, fraction: float,
                    rng: np.random.Generator) -> np.ndarray:
    """Uniform sample (without replacement) of round(F * n) active nodes."""
    if not 0.0 <= fraction <= 1.0:
        raise ConfigError(f"observed fraction must be in [0, 1], got {fraction}")
    active_nodes = np.asarray(active_nodes, dtype=np.int64)
    size = int(round(fraction * len(active_nodes)))
    if size == len(active_nodes):
        return np.sort(active_nodes)
    return np.sort(rng.choice(active_nodes, size=size, replace=False))


def select_for_vaccination(scores: ScoreTable, rate_percent: float, n_total: int,
                           rng: np.random.Generator) -> SelectionResult:
    """Pick the top floor(P*N/100) scored nodes; cutoff ties break uniformly."""
    if not 0.0 <= rate_percent <= 100.0:
        raise ConfigError(f"vaccination rate must be in [0, 100], got {rate_percent}")
    quota = int(math.floor(rate_percent * n_total / 100.0))
    if quota == 0:
        return SelectionResult(frozenset())
    if quota >= len(scores.node_ids):
        return SelectionResult(frozenset(int(n) for n in scores.node_ids),
                               shortfall=quota - len(scores.node_ids))
    values = scores.scores
    cutoff = np.partition(values, len(values) - quota)[len(values) - quota]
    above = scores.node_ids[values > cutoff]
    tied = scores.node_ids[values == cutoff]
    remaining = quota - len(above)
    picked = rng.choice(np.sort(tied), size=remaining, replace=False) if remaining else []
    return SelectionResult(frozenset(int(n) for n in above) | frozenset(int(n) for n in picked))


def score_threshold(scores: ScoreTable, rate_percent: float, n_total: int) -> float:
    """Smallest score s with at most P*N/100 nodes scoring strictly above s.

    Used by ring vaccination: a neighbor qualifies when its score exceeds the
    threshold. Returns ``-inf`` when every scored node should qualify.
    """
    if not 0.0 <= rate_percent <= 100.0:
        raise ConfigError(f"vaccination rate must be in [0, 100], got {rate_percent}")
    quota = rate_percent * n_total / 100.0
    if len(scores.scores) == 0 or len(scores.scores) <= quota:
        return float("-inf")
    values = np.sort(scores.scores)
    n = len(values)
    # distinct values ascending; count strictly greater than each
    distinct, first_idx = np.unique(values, return_index=True)
    greater_counts = n - (first_idx + np.diff(np.append(first_idx, n)))
    for value, greater in zip(distinct, greater_counts):
        if greater <= quota:
            return float(value)
    return float(distinct[-1])
