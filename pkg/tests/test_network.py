import itertools

import numpy as np
import pytest

from conftest import make_random_network
from spdtsim.errors import DataError
from spdtsim.network import (ALL_KINDS, DAY_SECONDS, DIRECT_KINDS, ContactNetwork,
                             LinkKind, SpdtLink, classify_link, concat_ranges,
                             load_network, read_network_binary, read_network_text,
                             save_network, write_network_binary, write_network_text)


def test_classify_containment_is_direct():
    assert classify_link(SpdtLink(0, 1, 0, 1800, 600, 1500)) == LinkKind.DIRECT_ONLY


def test_classify_straddle_is_mixed():
    assert classify_link(SpdtLink(0, 1, 0, 1800, 600, 2400)) == LinkKind.MIXED


def test_classify_after_departure_is_indirect():
    assert classify_link(SpdtLink(0, 1, 0, 1800, 1800, 3600)) == LinkKind.INDIRECT_ONLY


def test_classify_boundaries():
    # neighbor leaving exactly with the host: direct
    assert classify_link(SpdtLink(0, 1, 0, 1800, 600, 1800)) == LinkKind.DIRECT_ONLY
    # neighbor arriving exactly at departure: indirect
    assert classify_link(SpdtLink(0, 1, 0, 1800, 1800, 2400)) == LinkKind.INDIRECT_ONLY


def test_classify_partitions_all_interval_configurations():
    # exhaustive small grid: every valid link gets exactly one kind and the
    # kind matches the boundary rules
    grid = range(5)
    for he, ns, ne in itertools.product(grid, repeat=3):
        if not (0 <= he and 0 <= ns <= ne):
            continue
        link = SpdtLink(0, 1, 0, he, ns, ne)
        kind = classify_link(link)
        direct = ne <= he and ns < he
        mixed = ns < he < ne
        indirect = ns >= he
        assert [direct, mixed, indirect].count(True) == 1
        assert kind == (LinkKind.DIRECT_ONLY if direct
                        else LinkKind.MIXED if mixed else LinkKind.INDIRECT_ONLY)


def hand_network():
    # node 0 hosts links to 1 and 2, receives one from 3; node 4 isolated
    links = [SpdtLink(0, 1, 100, 700, 200, 600),       # direct
             SpdtLink(0, 2, 100, 700, 700, 1300),      # indirect
             SpdtLink(3, 0, 2000, 2600, 2100, 3200)]   # mixed
    return ContactNetwork(5, 1, links, provenance="ingested")


def test_neighbors_of_hand_built():
    net = hand_network()
    assert net.neighbors_of(0, [0], ALL_KINDS) == {1, 2, 3}
    assert net.neighbors_of(0, [0], DIRECT_KINDS) == {1, 3}
    assert net.neighbors_of(4, [0], ALL_KINDS) == set()
    assert net.contact_degree(0, [0], ALL_KINDS) == 3
    assert net.contact_degree(4, [0]) == 0


def test_neighbors_of_unknown_node_is_error():
    with pytest.raises(DataError):
        hand_network().neighbors_of(99, [0])


def test_neighbors_superset_with_more_kinds(rng):
    net = make_random_network(rng)
    for node in range(net.n_nodes):
        direct = net.neighbors_of(node, kinds=DIRECT_KINDS)
        everything = net.neighbors_of(node, kinds=ALL_KINDS)
        assert direct <= everything
        assert net.contact_degree(node, kinds=ALL_KINDS) >= net.contact_degree(
            node, kinds=DIRECT_KINDS)


def test_link_storage_is_symmetric(rng):
    net = make_random_network(rng)
    for link in net.iter_links():
        kinds = frozenset({classify_link(link)})
        assert link.neighbor in net.neighbors_of(link.host, [link.day], kinds)
        assert link.host in net.neighbors_of(link.neighbor, [link.day], kinds)


def test_degree_over_disjoint_day_union_is_set_semantics(rng):
    net = make_random_network(rng, n_days=4)
    for node in range(net.n_nodes):
        union = net.neighbors_of(node, [0, 1]) | net.neighbors_of(node, [2, 3])
        assert net.contact_degree(node, [0, 1, 2, 3]) == len(union)


def test_links_from_infected_empty_cases():
    net = hand_network()
    assert net.links_from_infected(0, set()) == {}
    assert net.links_from_infected(0, {0, 1, 2, 3, 4}) == {}


def test_links_from_infected_grouping():
    net = hand_network()
    grouped = net.links_from_infected(0, {0})
    assert set(grouped) == {1, 2}
    assert [l.neighbor for l in grouped[1]] == [1]
    assert [l.neighbor for l in grouped[2]] == [2]
    grouped = net.links_from_infected(0, {3})
    assert set(grouped) == {0}


def test_day_bucketing_by_host_arrival():
    late = SpdtLink(0, 1, DAY_SECONDS - 600, DAY_SECONDS + 600,
                    DAY_SECONDS - 300, DAY_SECONDS + 1200)
    net = ContactNetwork(2, 2, [late])
    assert len(net.day(0)) == 1
    assert len(net.day(1)) == 0


def test_invalid_links_rejected():
    with pytest.raises(DataError):
        ContactNetwork(2, 1, [SpdtLink(0, 0, 0, 10, 0, 10)])
    with pytest.raises(DataError):
        ContactNetwork(2, 1, [SpdtLink(0, 1, 10, 5, 10, 10)])
    with pytest.raises(DataError):
        ContactNetwork(2, 1, [SpdtLink(0, 1, 100, 200, 50, 300)])
    with pytest.raises(DataError):
        ContactNetwork(2, 1, [SpdtLink(0, 5, 0, 10, 0, 10)])


def _per_day_multisets(net):
    return [sorted((l.host, l.neighbor, l.host_start, l.host_end, l.nbr_start,
                    l.nbr_end, l.location_tag) for l in net.iter_links([d]))
            for d in range(net.n_days)]


@pytest.mark.parametrize("fmt", ["text", "binary"])
def test_serialization_round_trip(rng, tmp_path, fmt):
    net = make_random_network(rng, n_nodes=15, n_days=3, n_links=200)
    path = str(tmp_path / ("net.spdt" if fmt == "text" else "net.bin"))
    save_network(net, path)
    back = load_network(path)
    assert back.n_nodes == net.n_nodes
    assert back.n_days == net.n_days
    assert back.provenance == net.provenance
    assert _per_day_multisets(back) == _per_day_multisets(net)
    # canonical storage makes a rewrite byte-identical
    path2 = str(tmp_path / ("net2.spdt" if fmt == "text" else "net2.bin"))
    save_network(back, path2)
    assert open(path, "rb").read() == open(path2, "rb").read()


def test_text_format_errors(tmp_path):
    bad = tmp_path / "bad.spdt"
    bad.write_text("#nodes=2 days=1 provenance=synthetic\n0,1,0\n")
    with pytest.raises(DataError):
        read_network_text(str(bad))
    noheader = tmp_path / "no.spdt"
    noheader.write_text("0,1,0,10,0,10\n")
    with pytest.raises(DataError):
        read_network_text(str(noheader))


def test_binary_format_truncation(tmp_path):
    net = hand_network()
    path = str(tmp_path / "net.bin")
    write_network_binary(net, path)
    blob = open(path, "rb").read()
    open(path, "wb").write(blob[:-10])
    with pytest.raises(DataError):
        read_network_binary(path)


def test_concat_ranges():
    starts = np.array([0, 5, 9, 9])
    stops = np.array([3, 5, 12, 10])
    assert concat_ranges(starts, stops).tolist() == [0, 1, 2, 9, 10, 11, 9]
    assert concat_ranges(np.array([], dtype=int), np.array([], dtype=int)).size == 0
