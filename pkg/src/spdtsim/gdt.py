"""Synthetic SPDT contact networks from an activity-driven generative model.

Each day every node activates a Poisson number of times, mimicking visits to
locations. An activation lasts a geometric time (60 s quantum) and attracts a
power-law number of distinct neighbors, drawn with a per-node exponent so
nodes differ in their propensity to meet people. Neighbors join after a
geometric delay, possibly only after the host has left (an indirect link,
kept while the join happens within the particle window ``delta``), and stay
for a geometric time truncated at ``host_end + delta``.

All randomness is keyed per (seed, node, day), so generation is reproducible
bit-for-bit regardless of scheduling or chunking.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .network import DAY_SECONDS, ContactNetwork
from .rng import derive_seed

TIME_QUANTUM = 60  # seconds


@dataclass(frozen=True)
class GdtParams:
    n_nodes: int = 10_000
    n_days: int = 42
    active_period_mean: float = 1800.0     # seconds
    activation_rate: float = 3.0           # expected activations per node-day
    degree_exponent_range: tuple[float, float] = (2.0, 3.0)
    degree_min: int = 1
    degree_cap: int = 120
    join_delay_mean: float = 900.0         # seconds
    stay_mean: float = 1800.0              # seconds
    delta_seconds: int = 3600

    def __post_init__(self):
        if self.n_nodes < 2:
            raise ConfigError("need at least 2 nodes")
        if self.n_days < 1:
            raise ConfigError("need at least 1 day")
        for name in ("active_period_mean", "join_delay_mean", "stay_mean"):
            if getattr(self, name) < TIME_QUANTUM:
                raise ConfigError(f"{name} must be >= {TIME_QUANTUM} s")
        if self.activation_rate < 0:
            raise ConfigError("activation_rate must be nonnegative")
        lo, hi = self.degree_exponent_range
        if not (1.5 < lo <= hi <= 4.0):
            raise ConfigError("degree exponents must lie in (1.5, 4.0]")
        if self.degree_min < 0 or self.degree_cap < max(self.degree_min, 1):
            raise ConfigError("need 0 <= degree_min <= degree_cap and degree_cap >= 1")
        if self.delta_seconds < 0:
            raise ConfigError("delta must be nonnegative")


def _degree_cdf(exponent: float, k_min: int, k_max: int) -> np.ndarray:
    ks = np.arange(k_min, k_max + 1, dtype=np.float64)
    w = ks ** (-exponent)
    return np.cumsum(w) / w.sum()


def _pair_rng(seed: int, node: int, day: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array(
        [seed & 0xFFFFFFFFFFFFFFFF, (node << 24) | day], dtype=np.uint64)))


def _emit_activation(rng: np.random.Generator, node: int, start: int, duration: int,
                     k: int, n_nodes: int, params: GdtParams, tag: int, out: list) -> None:
    if k <= 0:
        return
    host_end = start + duration
    horizon = host_end + params.delta_seconds
    others = rng.choice(n_nodes - 1, size=min(k, n_nodes - 1), replace=False)
    others = others + (others >= node)
    join = TIME_QUANTUM * rng.geometric(TIME_QUANTUM / params.join_delay_mean, size=len(others))
    stay = TIME_QUANTUM * rng.geometric(TIME_QUANTUM / params.stay_mean, size=len(others))
    for nbr, d, s in zip(others, join, stay):
        nbr_start = start + int(d)
        if nbr_start > horizon:
            continue  # the visit never coincides with the particle window
        out.append((node, int(nbr), start, host_end, nbr_start,
                    min(nbr_start + int(s), horizon), tag))


def generate(params: GdtParams, seed: int = 0) -> ContactNetwork:
    """Generate a synthetic contact network; identical output for a fixed seed."""
    exp_lo, exp_hi = params.degree_exponent_range
    exponents = np.random.default_rng(derive_seed(seed, 31)).uniform(
        exp_lo, exp_hi, params.n_nodes)
    k_min = max(params.degree_min, 1)
    chunks: list[np.ndarray] = []
    for node in range(params.n_nodes):
        cdf = _degree_cdf(exponents[node], k_min, params.degree_cap)
        rows: list[tuple] = []
        for day in range(params.n_days):
            rng = _pair_rng(seed, node, day)
            n_act = rng.poisson(params.activation_rate) if params.activation_rate > 0 else 0
            for j in range(n_act):
                start = day * DAY_SECONDS + int(rng.integers(DAY_SECONDS))
                duration = TIME_QUANTUM * int(rng.geometric(
                    TIME_QUANTUM / params.active_period_mean))
                k = k_min + int(np.searchsorted(cdf, rng.random(), side="right"))
                k = min(k, params.degree_cap)
                tag = (node * params.n_days + day) * 1024 + j
                _emit_activation(rng, node, start, duration, k, params.n_nodes,
                                 params, tag, rows)
        if rows:
            chunks.append(np.asarray(rows, dtype=np.int64))
    if chunks:
        arr = np.concatenate(chunks)
        cols = (arr[:, 0].astype(np.int32), arr[:, 1].astype(np.int32),
                arr[:, 2].copy(), arr[:, 3].copy(), arr[:, 4].copy(),
                arr[:, 5].copy(), arr[:, 6].copy())
    else:
        empty64 = np.empty(0, dtype=np.int64)
        cols = (np.empty(0, dtype=np.int32), np.empty(0, dtype=np.int32),
                empty64, empty64, empty64, empty64, empty64)
    return ContactNetwork(params.n_nodes, params.n_days, cols, provenance="synthetic")


def activation_degree_draws(params: GdtParams, seed: int, node: int,
                            n_draws: int) -> np.ndarray:
    """Degree draws for one node's distribution, for statistical checks."""
    exp_lo, exp_hi = params.degree_exponent_range
    exponent = np.random.default_rng(derive_seed(seed, 31)).uniform(
        exp_lo, exp_hi, params.n_nodes)[node]
    k_min = max(params.degree_min, 1)
    cdf = _degree_cdf(exponent, k_min, params.degree_cap)
    u = np.random.default_rng(derive_seed(seed, 32, node)).random(n_draws)
    return k_min + np.searchsorted(cdf, u, side="right")
