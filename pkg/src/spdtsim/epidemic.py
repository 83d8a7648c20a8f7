"""SIR spread on a contact network driven by airborne particle exposure.

Transmission hazard follows a well-mixed concentration model. While an
infected host occupies a location, particle concentration obeys
``dC/dt = g/V - r*C`` starting from zero at the host's arrival; after the
host leaves it decays as ``dC/dt = -r*C``. A susceptible receiver inhaling
at pulmonary rate ``p`` over its own presence window accumulates exposure
``E = p * integral(C dt)``, and converts to infection with probability
``1 - exp(-sigma * E)``. The closed forms below are the exact integrals of
that model for the three link kinds; tests check them against independent
numerical integration.

State updates advance in whole-day steps: exposures received during a day
convert to Bernoulli infections effective the next day, infected nodes
recover after their drawn infectious period, and vaccination (an absorbing
state, excluded from all transmission) is applied through a per-day hook.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import DataError, NumericError
from .network import ContactNetwork, LinkKind, SpdtLink, classify_link
from .rng import (STREAM_INFECTION, STREAM_INFECTIOUS_PERIOD,
                  STREAM_REMOVAL_TIME, keyed_u01)

SUSCEPTIBLE = np.int8(0)
INFECTED = np.int8(1)
RECOVERED = np.int8(2)
VACCINATED = np.int8(3)

STATE_NAMES = {int(SUSCEPTIBLE): "susceptible", int(INFECTED): "infected",
               int(RECOVERED): "recovered", int(VACCINATED): "vaccinated"}


@dataclass(frozen=True)
class DiseaseParams:
    """Airborne-disease constants.

    Units: generation rate PFU/s, pulmonary rate m^3/s, volume m^3, removal
    times minutes, infectious periods whole days. The default pulmonary rate
    is 7.5 L/min expressed in m^3/s. Removal times are drawn per link from a
    piecewise-uniform distribution on ``removal_time_range`` with the given
    median; with the median at the midpoint (default) the draw is plain
    uniform over the range.
    """

    particle_generation_rate: float = 0.304          # g
    pulmonary_rate: float = 7.5e-3 / 60.0            # p, 7.5 L/min
    interaction_volume: float = 2512.0               # V
    removal_time_range: tuple[float, float] = (7.5, 300.0)
    removal_time_median: float = 153.75
    infectiousness: float = 0.33                     # sigma
    infectious_period_range: tuple[int, int] = (3, 5)
    infectious_period_weights: tuple[float, ...] | None = None
    seed_infectious_days: int = 5

    def __post_init__(self):
        lo, hi = self.removal_time_range
        if not (0 < lo <= self.removal_time_median <= hi):
            raise DataError("removal_time_median must lie inside removal_time_range")
        if min(self.particle_generation_rate, self.pulmonary_rate,
               self.interaction_volume) <= 0:
            raise DataError("g, p and V must be positive")
        if self.infectiousness < 0:
            raise DataError("infectiousness must be nonnegative")
        tlo, thi = self.infectious_period_range
        if not (1 <= tlo <= thi):
            raise DataError("infectious_period_range must satisfy 1 <= low <= high")
        if self.infectious_period_weights is not None:
            w = self.infectious_period_weights
            if len(w) != thi - tlo + 1 or min(w) < 0 or sum(w) <= 0:
                raise DataError("infectious_period_weights must cover the range with nonnegative mass")
        if self.seed_infectious_days < 1:
            raise DataError("seed_infectious_days must be >= 1")


@dataclass
class OutbreakRecord:
    """Result of one simulation run.

    ``final_outbreak_size`` counts new infections only; seed nodes are not
    included.
    """

    seeds: tuple[int, ...]
    daily_new_infections: tuple[int, ...]
    final_outbreak_size: int
    vaccinated_count: int
    rng_seed: int
    vaccination_skipped: int = 0

    def to_json_dict(self) -> dict:
        return {"seeds": list(self.seeds),
                "daily_new_infections": list(self.daily_new_infections),
                "final_outbreak_size": self.final_outbreak_size,
                "vaccinated_count": self.vaccinated_count,
                "rng_seed": self.rng_seed,
                "vaccination_skipped": self.vaccination_skipped}


# ---------------------------------------------------------------------------
# Exposure
# ---------------------------------------------------------------------------

def effective_intervals(host_start, host_end, nbr_start, nbr_end):
    """Intersect the neighbor window with the time concentration can exist.

    Any neighbor presence before the host's arrival sees zero concentration
    and is dropped from the integral.
    """
    ns = np.maximum(nbr_start, host_start)
    ne = np.maximum(nbr_end, ns)
    return host_start, host_end, ns, ne


def bulk_exposure(host_start, host_end, nbr_start, nbr_end, removal_rate,
                  params: DiseaseParams) -> np.ndarray:
    """Exposure in PFU for column arrays of links and per-link removal rates.

    ``removal_rate`` is per second. Times are shifted so the host arrival is
    zero before exponentiation, and each link kind uses the algebraic form
    with only decaying exponentials, so the evaluation is stable for any
    epoch-scale inputs.
    """
    hs, he, ns, ne = effective_intervals(
        np.asarray(host_start, dtype=np.float64), np.asarray(host_end, dtype=np.float64),
        np.asarray(nbr_start, dtype=np.float64), np.asarray(nbr_end, dtype=np.float64))
    r = np.asarray(removal_rate, dtype=np.float64)
    scale = (params.particle_generation_rate * params.pulmonary_rate
             / (params.interaction_volume * r * r))
    he_rel = he - hs
    ns_rel = ns - hs
    ne_rel = ne - hs
    # rise phase: neighbor present while the host is still emitting
    overlap_end = np.minimum(ne_rel, he_rel)
    t_direct = np.maximum(overlap_end - ns_rel, 0.0)
    direct = r * t_direct + np.exp(-r * ns_rel) * np.expm1(-r * t_direct)
    # decay phase: neighbor present after the host has left
    tail_start = np.maximum(ns_rel, he_rel)
    t_tail = np.maximum(ne_rel - tail_start, 0.0)
    tail = (np.expm1(-r * he_rel) * np.exp(-r * (tail_start - he_rel))
            * np.expm1(-r * t_tail))
    return scale * (direct + tail)


def link_exposure(link: SpdtLink, removal_rate: float, params: DiseaseParams) -> float:
    """Exposure in PFU received by the neighbor of one link.

    ``removal_rate`` is the per-second particle removal rate for this link.
    """
    if removal_rate <= 0:
        raise DataError(f"removal rate must be positive, got {removal_rate}")
    value = float(bulk_exposure(
        np.array([link.host_start], dtype=np.float64), np.array([link.host_end], dtype=np.float64),
        np.array([link.nbr_start], dtype=np.float64), np.array([link.nbr_end], dtype=np.float64),
        np.array([removal_rate], dtype=np.float64), params)[0])
    if not math.isfinite(value):
        raise NumericError(f"non-finite exposure for link {link} at r={removal_rate}")
    return value


def total_exposure(links: Sequence[SpdtLink], removal_rates: Sequence[float],
                   params: DiseaseParams) -> float:
    """Summed exposure over the links a node received in one day."""
    if len(links) != len(removal_rates):
        raise DataError("links and removal_rates must align")
    return math.fsum(link_exposure(l, r, params) for l, r in zip(links, removal_rates))


def infection_probability(exposure: float, sigma: float) -> float:
    """Dose-response conversion of accumulated exposure to infection risk."""
    if exposure < 0:
        raise DataError(f"exposure must be nonnegative, got {exposure}")
    return -math.expm1(-sigma * exposure)


def draw_removal_times(u: np.ndarray, params: DiseaseParams) -> np.ndarray:
    """Map uniforms to removal times (minutes), piecewise-uniform at the median."""
    lo, hi = params.removal_time_range
    med = params.removal_time_median
    u = np.asarray(u, dtype=np.float64)
    return np.where(u < 0.5,
                    lo + (u / 0.5) * (med - lo),
                    med + ((u - 0.5) / 0.5) * (hi - med))


# ---------------------------------------------------------------------------
# Daily state machine
# ---------------------------------------------------------------------------

class SimState:
    """Mutable per-run node state: status codes plus infectious days left."""

    __slots__ = ("status", "days_left", "new_infections_last_day", "vaccination_skipped")

    def __init__(self, n_nodes: int):
        self.status = np.full(n_nodes, SUSCEPTIBLE, dtype=np.int8)
        self.days_left = np.zeros(n_nodes, dtype=np.int16)
        self.new_infections_last_day: np.ndarray = np.empty(0, dtype=np.int64)
        self.vaccination_skipped = 0

    @property
    def n_nodes(self) -> int:
        return len(self.status)

    def infected_nodes(self) -> np.ndarray:
        return np.flatnonzero(self.status == INFECTED)

    def susceptible_mask(self) -> np.ndarray:
        return self.status == SUSCEPTIBLE

    def counts(self) -> dict[str, int]:
        return {name: int(np.count_nonzero(self.status == code))
                for code, name in STATE_NAMES.items()}

    def vaccinate(self, nodes: Iterable[int]) -> int:
        """Vaccinate the susceptible subset of ``nodes``; returns how many.

        Non-susceptible targets are skipped and counted, never overwritten:
        vaccination cannot reach an already infected or recovered node.
        """
        nodes = np.asarray(list(nodes) if not isinstance(nodes, np.ndarray) else nodes,
                           dtype=np.int64)
        if nodes.size == 0:
            return 0
        ok = self.status[nodes] == SUSCEPTIBLE
        self.status[nodes[ok]] = VACCINATED
        self.vaccination_skipped += int(np.count_nonzero(~ok))
        return int(np.count_nonzero(ok))


VaccinationHook = Callable[[int, SimState], None]


def _draw_infectious_periods(nodes: np.ndarray, day: int, run_seed: int,
                             params: DiseaseParams) -> np.ndarray:
    lo, hi = params.infectious_period_range
    u = keyed_u01(run_seed, day, STREAM_INFECTIOUS_PERIOD, nodes)
    if params.infectious_period_weights is None:
        return lo + np.minimum((u * (hi - lo + 1)).astype(np.int16), hi - lo)
    w = np.asarray(params.infectious_period_weights, dtype=np.float64)
    cdf = np.cumsum(w) / w.sum()
    return (lo + np.searchsorted(cdf, u, side="right")).astype(np.int16)


def step_day(state: SimState, net: ContactNetwork, day: int, params: DiseaseParams,
             run_seed: int) -> np.ndarray:
    """Advance one day; returns the node ids newly infected during this day.

    The returned nodes become infectious the following day. Draws are keyed
    by (run_seed, day, node), so the outcome is independent of evaluation
    order and thread scheduling.
    """
    new_infected = _transmit(state, net, day, params, run_seed)
    _commit_day(state, new_infected, day, run_seed, params)
    return new_infected


def _transmit(state: SimState, net: ContactNetwork, day: int, params: DiseaseParams,
              run_seed: int) -> np.ndarray:
    infected = state.infected_nodes()
    if infected.size == 0 or params.infectiousness == 0.0:
        return np.empty(0, dtype=np.int64)
    dl = net.day(day)
    rows = dl.rows_hosted_by(infected)
    if rows.size == 0:
        return np.empty(0, dtype=np.int64)
    receivers = dl.neighbor[rows]
    sus = state.susceptible_mask()
    keep = sus[receivers]
    rows = rows[keep]
    if rows.size == 0:
        return np.empty(0, dtype=np.int64)
    receivers = receivers[keep].astype(np.int64)
    # canonical per-receiver link order: sort by receiver, storage order within
    order = np.argsort(receivers, kind="stable")
    rows = rows[order]
    receivers = receivers[order]
    exposed, start_idx = np.unique(receivers, return_index=True)
    counts = np.diff(np.append(start_idx, receivers.size))
    within = np.arange(receivers.size, dtype=np.int64) - np.repeat(start_idx, counts)
    u_b = keyed_u01(run_seed, day, STREAM_REMOVAL_TIME, receivers, within)
    removal_rate = 1.0 / (60.0 * draw_removal_times(u_b, params))
    exposures = bulk_exposure(dl.host_start[rows], dl.host_end[rows],
                              dl.nbr_start[rows], dl.nbr_end[rows], removal_rate, params)
    if not np.all(np.isfinite(exposures)):
        bad = int(rows[~np.isfinite(exposures)][0])
        raise NumericError(f"non-finite exposure on day {day} for link {dl.link(bad)}")
    total = np.add.reduceat(exposures, start_idx)
    p_infect = -np.expm1(-params.infectiousness * total)
    u_i = keyed_u01(run_seed, day, STREAM_INFECTION, exposed)
    return exposed[u_i < p_infect]


def _commit_day(state: SimState, new_infected: np.ndarray, day: int, run_seed: int,
                params: DiseaseParams) -> None:
    infected_mask = state.status == INFECTED
    state.days_left[infected_mask] -= 1
    done = infected_mask & (state.days_left <= 0)
    state.status[done] = RECOVERED
    if new_infected.size:
        state.status[new_infected] = INFECTED
        state.days_left[new_infected] = _draw_infectious_periods(
            new_infected, day, run_seed, params)
    state.new_infections_last_day = new_infected


def run(net: ContactNetwork, seeds: Iterable[int], n_days: int, params: DiseaseParams,
        vaccination_hook: VaccinationHook | None = None, run_seed: int = 0,
        start_day: int = 0, initial_vaccinated: Iterable[int] = ()) -> OutbreakRecord:
    """Simulate ``n_days`` of spread from ``seeds`` and record the outbreak.

    Simulation day k uses the network's day ``start_day + k``. The hook is
    invoked with (k, state) before each day's transmissions; at that point
    ``state.new_infections_last_day`` holds the infections committed at the
    end of day k-1, which is what ring-style responses react to. Seeds are
    infectious for ``params.seed_infectious_days``; seeds that are not
    susceptible when seeding (for example already vaccinated) stay in their
    state and spread nothing.
    """
    seeds = tuple(int(s) for s in seeds)
    for s in seeds:
        if not 0 <= s < net.n_nodes:
            raise DataError(f"seed node {s} outside [0, {net.n_nodes})")
    if n_days < 0:
        raise DataError("n_days must be nonnegative")
    if n_days and not (0 <= start_day and start_day + n_days <= net.n_days):
        raise DataError(f"simulation window [{start_day}, {start_day + n_days}) "
                        f"outside network days [0, {net.n_days})")
    state = SimState(net.n_nodes)
    state.vaccinate(initial_vaccinated)
    seed_arr = np.asarray(seeds, dtype=np.int64)
    if seed_arr.size:
        plantable = state.status[seed_arr] == SUSCEPTIBLE
        state.status[seed_arr[plantable]] = INFECTED
        state.days_left[seed_arr[plantable]] = params.seed_infectious_days
    daily: list[int] = []
    for k in range(n_days):
        if vaccination_hook is not None:
            vaccination_hook(k, state)
        new_infected = step_day(state, net, start_day + k, params, run_seed)
        daily.append(int(new_infected.size))
    return OutbreakRecord(
        seeds=seeds,
        daily_new_infections=tuple(daily),
        final_outbreak_size=int(sum(daily)),
        vaccinated_count=int(np.count_nonzero(state.status == VACCINATED)),
        rng_seed=int(run_seed),
        vaccination_skipped=state.vaccination_skipped)
