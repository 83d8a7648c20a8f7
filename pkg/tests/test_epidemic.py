import math

import numpy as np
import pytest

from conftest import make_random_links, make_random_network
from oracles import exposure_by_integration, temporal_reach
from spdtsim.errors import DataError
from spdtsim.epidemic import (DiseaseParams, OutbreakRecord, SimState, SUSCEPTIBLE,
                              INFECTED, RECOVERED, VACCINATED, draw_removal_times,
                              infection_probability, link_exposure, run, step_day,
                              total_exposure)
from spdtsim.network import ContactNetwork, SpdtLink

PARAMS = DiseaseParams()

# frozen from the numerical-integration oracle (tests/oracles.py)
CO_PRESENCE_EXPOSURE = 0.02088543761754698       # host [0,1800], nbr [0,1800], r=1/3600
AFTER_DEPARTURE_EXPOSURE = 0.03035224068374012   # host [0,1800], nbr [1800,3600], r=1/3600
HAND_LINKS = [
    (SpdtLink(0, 1, 0, 1800, 600, 1500), 60.0, 0.012303943346729688),
    (SpdtLink(0, 1, 0, 3600, 1200, 5400), 120.0, 0.14148399740885234),
    (SpdtLink(0, 1, 0, 900, 900, 2700), 30.0, 0.012190451312351282),
]


def test_zero_length_neighbor_presence_gives_zero():
    assert link_exposure(SpdtLink(0, 1, 0, 1800, 900, 900), 1 / 3600, PARAMS) == 0.0


def test_full_co_presence_matches_oracle_value():
    got = link_exposure(SpdtLink(0, 1, 0, 1800, 0, 1800), 1 / 3600, PARAMS)
    assert got == pytest.approx(CO_PRESENCE_EXPOSURE, rel=1e-9)
    assert got == pytest.approx(0.0209, abs=5e-5)


def test_after_departure_matches_oracle_value():
    got = link_exposure(SpdtLink(0, 1, 0, 1800, 1800, 3600), 1 / 3600, PARAMS)
    assert got == pytest.approx(AFTER_DEPARTURE_EXPOSURE, rel=1e-9)
    assert got == pytest.approx(0.0304, abs=5e-5)


def test_hand_links_match_frozen_oracle_values():
    for link, b_minutes, expected in HAND_LINKS:
        got = link_exposure(link, 1 / (60 * b_minutes), PARAMS)
        assert got == pytest.approx(expected, rel=1e-9)


def test_exposure_shift_invariance():
    shift = 86400 * 12000 + 54321
    base = link_exposure(SpdtLink(0, 1, 0, 1800, 600, 2400), 1 / 3600, PARAMS)
    moved = link_exposure(SpdtLink(0, 1, shift, shift + 1800, shift + 600, shift + 2400),
                          1 / 3600, PARAMS)
    assert moved == pytest.approx(base, rel=1e-12)


def test_exposure_agrees_with_integration_oracle(rng):
    for _ in range(150):
        hs = 60 * int(rng.integers(0, 1000))
        he = hs + 60 * int(rng.integers(1, 200))
        ns = hs + 60 * int(rng.integers(0, (he - hs) // 60 + 60))
        ne = ns + 60 * int(rng.integers(1, 120))
        r = 1 / (60 * rng.uniform(7.5, 300))
        got = link_exposure(SpdtLink(0, 1, hs, he, ns, ne), r, PARAMS)
        want = exposure_by_integration(hs, he, ns, ne, r, PARAMS)
        assert got == pytest.approx(want, rel=1e-8, abs=1e-15)


def test_exposure_monotone_in_neighbor_interval(rng):
    for _ in range(60):
        hs = 0
        he = 60 * int(rng.integers(1, 120))
        ns = 60 * int(rng.integers(0, 150))
        r = 1 / (60 * rng.uniform(7.5, 300))
        last = -1.0
        for ext in range(1, 30):
            e = link_exposure(SpdtLink(0, 1, hs, he, ns, ns + 60 * ext), r, PARAMS)
            assert e >= last - 1e-15
            last = e


def test_exposure_additive_over_neighbor_splits(rng):
    for _ in range(60):
        he = 60 * int(rng.integers(1, 120))
        a = 60 * int(rng.integers(0, 90))
        b = a + 60 * int(rng.integers(2, 90))
        c = 60 * int(rng.integers(a // 60 + 1, b // 60))
        r = 1 / (60 * rng.uniform(7.5, 300))
        whole = link_exposure(SpdtLink(0, 1, 0, he, a, b), r, PARAMS)
        left = link_exposure(SpdtLink(0, 1, 0, he, a, c), r, PARAMS)
        right = link_exposure(SpdtLink(0, 1, 0, he, c, b), r, PARAMS)
        assert left + right == pytest.approx(whole, rel=1e-9, abs=1e-18)


def test_total_exposure():
    assert total_exposure([], [], PARAMS) == 0.0
    link = SpdtLink(0, 1, 0, 1800, 0, 1800)
    single = link_exposure(link, 1 / 3600, PARAMS)
    assert total_exposure([link, link], [1 / 3600, 1 / 3600], PARAMS) == pytest.approx(
        2 * single, rel=1e-12)
    links = [l for l, _, _ in HAND_LINKS]
    rates = [1 / (60 * b) for _, b, _ in HAND_LINKS]
    expected = math.fsum(e for _, _, e in HAND_LINKS)
    assert total_exposure(links, rates, PARAMS) == pytest.approx(expected, rel=1e-9)


def test_infection_probability():
    assert infection_probability(0.0, 0.33) == 0.0
    assert infection_probability(2.1, 0.33) == pytest.approx(0.50, abs=1e-3)
    with pytest.raises(DataError):
        infection_probability(-1.0, 0.33)


def test_infection_probability_combination_identity(rng):
    for _ in range(50):
        e1, e2 = rng.uniform(0, 5, size=2)
        combined = infection_probability(e1 + e2, 0.33)
        split = 1 - (1 - infection_probability(e1, 0.33)) * (1 - infection_probability(e2, 0.33))
        assert combined == pytest.approx(split, rel=1e-12)


def test_removal_time_draws_respect_range_and_median():
    u = np.linspace(0, 0.999999, 100001)
    b = draw_removal_times(u, PARAMS)
    assert b.min() >= 7.5 and b.max() <= 300.0
    assert np.count_nonzero(b < PARAMS.removal_time_median) == pytest.approx(
        len(b) / 2, rel=0.01)
    skewed = DiseaseParams(removal_time_median=60.0)
    b = draw_removal_times(np.random.default_rng(0).random(200000), skewed)
    assert np.median(b) == pytest.approx(60.0, rel=0.02)


def two_node_network(duration):
    link = SpdtLink(0, 1, 0, duration, 0, duration)
    return ContactNetwork(2, 1, [link])


def co_presence_duration_for_probability(target_p, params):
    """Invert the dose-response for a full co-presence link at b = 60 min."""
    def prob(t):
        e = link_exposure(SpdtLink(0, 1, 0, int(t), 0, int(t)), 1 / 3600, params)
        return infection_probability(e, params.infectiousness)
    lo, hi = 60, 10_000_000
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if prob(mid) < target_p:
            lo = mid
        else:
            hi = mid
    return hi


def test_step_day_no_infected_nodes_changes_nothing(rng):
    net = make_random_network(rng)
    state = SimState(net.n_nodes)
    before = state.status.copy()
    new = step_day(state, net, 0, PARAMS, run_seed=1)
    assert new.size == 0
    assert np.array_equal(state.status, before)


def test_vaccinated_neighbors_block_all_infection():
    params = DiseaseParams(infectiousness=1e12, removal_time_range=(60, 60),
                           removal_time_median=60)
    net = two_node_network(7200)
    rec = run(net, [0], 1, params, run_seed=5, initial_vaccinated=[1])
    assert rec.final_outbreak_size == 0
    assert rec.vaccinated_count == 1


def test_bernoulli_infection_frequency_matches_oracle_probability():
    params = DiseaseParams(removal_time_range=(60.0, 60.0), removal_time_median=60.0)
    duration = co_presence_duration_for_probability(0.5, params)
    e = link_exposure(SpdtLink(0, 1, 0, duration, 0, duration), 1 / 3600, params)
    p_target = infection_probability(e, params.infectiousness)
    assert abs(p_target - 0.5) < 0.01
    net = two_node_network(duration)
    hits = sum(run(net, [0], 1, params, run_seed=seed).final_outbreak_size
               for seed in range(10_000))
    assert hits / 10_000 == pytest.approx(p_target, abs=0.02)


def test_run_zero_days_and_zero_sigma(rng):
    net = make_random_network(rng)
    assert run(net, [0], 0, PARAMS, run_seed=1).final_outbreak_size == 0
    silent = DiseaseParams(infectiousness=0.0)
    rec = run(net, [0], net.n_days, silent, run_seed=1)
    assert rec.final_outbreak_size == 0


def test_run_is_deterministic(rng):
    net = make_random_network(rng, n_nodes=30, n_days=4, n_links=400)
    hot = DiseaseParams(infectiousness=5.0)
    a = run(net, [3], 4, hot, run_seed=99)
    b = run(net, [3], 4, hot, run_seed=99)
    assert a == b
    c = run(net, [3], 4, hot, run_seed=100)
    assert a != c or a.final_outbreak_size == c.final_outbreak_size


def test_population_is_conserved_every_day(rng):
    net = make_random_network(rng, n_nodes=40, n_days=4, n_links=600)
    hot = DiseaseParams(infectiousness=5.0)
    seen = []

    def hook(day, state):
        if day == 1:
            state.vaccinate(np.arange(0, 10))
        counts = state.counts()
        seen.append(sum(counts.values()))

    run(net, [0, 1], 4, hot, vaccination_hook=hook, run_seed=3)
    assert seen == [net.n_nodes] * 4


def test_vaccinated_never_infected(rng):
    hot = DiseaseParams(infectiousness=1e6)
    for trial in range(10):
        net = make_random_network(rng, n_nodes=25, n_days=4, n_links=500)
        vaccinated = list(range(5, 15))
        infected_ever: set[int] = set()

        def hook(day, state):
            infected_ever.update(int(n) for n in state.new_infections_last_day)

        rec = run(net, [0], 4, hot, vaccination_hook=hook, run_seed=trial,
                  initial_vaccinated=vaccinated)
        assert not infected_ever & set(vaccinated)
        assert rec.final_outbreak_size == sum(rec.daily_new_infections)


def test_seed_out_of_range_rejected(rng):
    net = make_random_network(rng)
    with pytest.raises(DataError):
        run(net, [999], 1, PARAMS, run_seed=0)


def test_seed_infectious_days_and_recovery():
    params = DiseaseParams(infectiousness=0.0, seed_infectious_days=2)
    net = two_node_network(600)
    state = SimState(net.n_nodes)
    state.status[0] = INFECTED
    state.days_left[0] = params.seed_infectious_days
    step_day(state, net, 0, params, 1)
    assert state.status[0] == INFECTED
    step_day(state, net, 0, params, 1)
    assert state.status[0] == RECOVERED


def test_outbreak_statistically_nondecreasing_in_sigma(rng):
    net = make_random_network(rng, n_nodes=50, n_days=6, n_links=900)
    means = []
    for sigma in (0.1, 0.33, 1.0, 3.0):
        params = DiseaseParams(infectiousness=sigma)
        finals = [run(net, [int(s % net.n_nodes)], 6, params, run_seed=s).final_outbreak_size
                  for s in range(150)]
        means.append(np.mean(finals))
    assert all(b >= a - 0.3 for a, b in zip(means, means[1:]))


def simulate_infected_set(net, seeds, n_days, params, run_seed, start_day=0):
    """Drive step_day directly so the infected node set is observable."""
    state = SimState(net.n_nodes)
    for s in seeds:
        state.status[s] = INFECTED
        state.days_left[s] = params.seed_infectious_days
    infected: set[int] = set()
    for k in range(n_days):
        infected.update(int(n) for n in step_day(state, net, start_day + k, params, run_seed))
    return infected


def test_forced_transmission_matches_reachability_oracle(rng):
    params = DiseaseParams(infectiousness=1e12, infectious_period_range=(3, 3),
                           seed_infectious_days=5)
    for trial in range(10):
        links = make_random_links(rng, n_nodes=10, n_days=6, n_links=40)
        net = ContactNetwork(10, 6, links)
        seed = int(rng.integers(10))
        got = simulate_infected_set(net, [seed], 6, params, run_seed=trial)
        want = temporal_reach(net, [seed], 6, seed_days=5, period_days=3)
        assert got == want
