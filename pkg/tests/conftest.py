import numpy as np
import pytest

from spdtsim.network import DAY_SECONDS, ContactNetwork, SpdtLink


def make_random_links(rng, n_nodes, n_days, n_links, delta=3600, granularity=60):
    """Valid random links: minute granularity, neighbor start within delta."""
    links = []
    for _ in range(n_links):
        host = int(rng.integers(n_nodes))
        nbr = int(rng.integers(n_nodes - 1))
        nbr += nbr >= host
        day = int(rng.integers(n_days))
        hs = day * DAY_SECONDS + granularity * int(rng.integers(0, 1200))
        he = hs + granularity * int(rng.integers(1, 240))
        ns = hs + granularity * int(rng.integers(0, (he - hs) // granularity + delta // granularity))
        ns = min(ns, he + delta)
        ne = ns + granularity * int(rng.integers(1, 180))
        ne = min(ne, he + delta)
        ne = max(ne, ns)
        links.append(SpdtLink(host, nbr, hs, he, ns, ne))
    return links


def make_random_network(rng, n_nodes=20, n_days=4, n_links=120, delta=3600):
    return ContactNetwork(n_nodes, n_days,
                          make_random_links(rng, n_nodes, n_days, n_links, delta),
                          provenance="synthetic")


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
