import numpy as np
import pytest

from oracles import great_circle_distance
from spdtsim.errors import DataError
from spdtsim.ingest import (IngestionParams, LocationUpdate, Stay, densify,
                            detect_stays, extract_links, haversine_m, ingest_trace,
                            parse_trace_line)
from spdtsim.network import (DAY_SECONDS, ContactNetwork, LinkKind, SpdtLink,
                             classify_link)

PARAMS = IngestionParams()

BASE_LAT, BASE_LON = 39.9042, 116.4074


def offset_m(lat, lon, north_m, east_m):
    dlat = north_m / 111194.93
    dlon = east_m / (111194.93 * np.cos(np.radians(lat)))
    return lat + dlat, lon + dlon


def test_haversine_agrees_with_great_circle_oracle(rng):
    for _ in range(300):
        lat1 = rng.uniform(-60, 60)
        lon1 = rng.uniform(-179, 179)
        lat2, lon2 = offset_m(lat1, lon1, rng.uniform(-700, 700), rng.uniform(-700, 700))
        got = haversine_m(lat1, lon1, lat2, lon2)
        want = great_circle_distance(lat1, lon1, lat2, lon2)
        assert abs(got - want) < 0.1


def test_single_update_is_single_point_stay():
    stays = detect_stays([LocationUpdate("u", BASE_LAT, BASE_LON, 1000)], PARAMS)
    assert stays == [Stay("u", BASE_LAT, BASE_LON, 1000, 1000, 1)]


def test_two_close_updates_merge_into_one_stay():
    lat2, lon2 = offset_m(BASE_LAT, BASE_LON, 10, 0)
    assert haversine_m(BASE_LAT, BASE_LON, lat2, lon2) < 20
    stays = detect_stays([LocationUpdate("u", BASE_LAT, BASE_LON, 0),
                          LocationUpdate("u", lat2, lon2, 900)], PARAMS)
    assert len(stays) == 1
    assert stays[0].end - stays[0].start == 900
    assert stays[0].update_count == 2


def test_two_far_updates_make_two_stays():
    lat2, lon2 = offset_m(BASE_LAT, BASE_LON, 50, 0)
    assert haversine_m(BASE_LAT, BASE_LON, lat2, lon2) > 20
    stays = detect_stays([LocationUpdate("u", BASE_LAT, BASE_LON, 0),
                          LocationUpdate("u", lat2, lon2, 900)], PARAMS)
    assert len(stays) == 2


def test_anchor_is_first_update_not_running_mean():
    # drifting points: each within 20 m of the anchor keeps extending
    updates = [LocationUpdate("u", *offset_m(BASE_LAT, BASE_LON, 6 * i, 0), 60 * i)
               for i in range(4)]
    stays = detect_stays(updates, PARAMS)
    assert [s.update_count for s in stays] == [4]
    far = detect_stays(updates + [LocationUpdate("u", *offset_m(BASE_LAT, BASE_LON, 25, 0), 300)],
                       PARAMS)
    assert [s.update_count for s in far] == [4, 1]


def test_duplicate_timestamps_keep_last():
    lat2, lon2 = offset_m(BASE_LAT, BASE_LON, 500, 0)
    stays = detect_stays([LocationUpdate("u", BASE_LAT, BASE_LON, 100),
                          LocationUpdate("u", lat2, lon2, 100)], PARAMS)
    assert stays[0].lat == pytest.approx(lat2)


def test_parse_trace_line_validation():
    assert parse_trace_line("u1,39.9,116.4,1000").user == "u1"
    with pytest.raises(DataError):
        parse_trace_line("u1,139.9,116.4,1000")  # latitude out of range
    with pytest.raises(DataError):
        parse_trace_line("u1,39.9,116.4")
    with pytest.raises(DataError):
        parse_trace_line("u1,abc,116.4,1000")


def _stay(user, north_m, start, end, count=3):
    lat, lon = offset_m(BASE_LAT, BASE_LON, north_m, 0)
    return Stay(user, lat, lon, start, end, count)


def test_extract_links_basic_window_rules():
    ids = {"h": 0, "n": 1}
    host = _stay("h", 0, 0, 1800)
    # starting after host_end + delta: no link
    assert extract_links([host, _stay("n", 5, 1800 + 3600 + 1, 9000)], PARAMS, ids) == []
    # single-update neighbor: no link
    assert extract_links([host, _stay("n", 5, 600, 900, count=1)], PARAMS, ids) == []
    # boundary: indirect join at host_end
    links = extract_links([host, _stay("n", 5, 1800, 2700)], PARAMS, ids)
    assert len(links) == 1
    assert classify_link(links[0]) == LinkKind.INDIRECT_ONLY
    # too far away: no link
    assert extract_links([host, _stay("n", 30, 600, 900)], PARAMS, ids) == []


def test_extract_links_truncates_at_delta_horizon():
    ids = {"h": 0, "n": 1}
    links = extract_links([_stay("h", 0, 0, 1800), _stay("n", 5, 5000, 99999)], PARAMS, ids)
    assert len(links) == 1
    assert links[0].nbr_end == 1800 + PARAMS.delta_seconds
    links[0].validate(delta=PARAMS.delta_seconds)


def test_extract_links_zero_delta_emits_no_indirect():
    params = IngestionParams(delta_seconds=0)
    ids = {"h": 0, "n": 1}
    stays = [_stay("h", 0, 0, 1800), _stay("n", 5, 600, 2400), _stay("n", 5, 1900, 2700)]
    links = extract_links(stays, params, ids)
    assert links and all(classify_link(l) != LinkKind.INDIRECT_ONLY for l in links)


def test_extract_links_distinct_stay_pairs_make_distinct_links():
    ids = {"h": 0, "n": 1}
    stays = [_stay("h", 0, 0, 1800), _stay("h", 0, 4000, 5000),
             _stay("n", 5, 600, 1200), _stay("n", 5, 4200, 4600)]
    links = extract_links(stays, PARAMS, ids)
    host_links = [l for l in links if l.host == 0]
    assert len(host_links) == 3  # both of n's stays fit the first visit window
    assert len({(l.host_start, l.nbr_start) for l in host_links}) == 3


def test_both_users_act_as_hosts():
    ids = {"a": 0, "b": 1}
    # neighbor presence only counts from the host's arrival onward, so the
    # reverse link exists exactly when the other stay starts inside the window
    stays = [_stay("a", 0, 0, 1800), _stay("b", 5, 600, 1500)]
    links = extract_links(stays, PARAMS, ids)
    assert {(l.host, l.neighbor) for l in links} == {(0, 1)}
    stays = [_stay("a", 0, 0, 1800), _stay("b", 5, 0, 1500)]
    links = extract_links(stays, PARAMS, ids)
    assert {(l.host, l.neighbor) for l in links} == {(0, 1), (1, 0)}


def test_ingest_trace_end_to_end():
    lat2, lon2 = offset_m(BASE_LAT, BASE_LON, 8, 0)
    updates = []
    for t in (0, 600, 1200):
        updates.append(LocationUpdate("alice", BASE_LAT, BASE_LON, 5_000_000 + t))
    for t in (700, 1400):
        updates.append(LocationUpdate("bob", lat2, lon2, 5_000_000 + t))
    net = ingest_trace(updates, PARAMS)
    assert net.n_nodes == 2
    assert net.provenance == "ingested"
    # alice's visit attracts bob (starts at 700); bob's visit cannot count
    # alice, whose presence began before bob arrived
    assert net.n_links == 1
    link = next(net.iter_links())
    assert (link.host, link.neighbor) == (0, 1)
    assert net.n_days == 1   # days normalized to start at 0
    link.validate(delta=PARAMS.delta_seconds)


def _user_day_links(net):
    out = {}
    for link in net.iter_links():
        out.setdefault(link.host, {}).setdefault(link.day, []).append(
            (link.neighbor, link.host_start % DAY_SECONDS, link.host_end - link.host_start,
             link.nbr_start - link.host_start, link.nbr_end - link.nbr_start))
    return out


def test_densify_fills_every_active_user_day(rng):
    links = [SpdtLink(0, 1, 600, 1800, 700, 1700, 1),
             SpdtLink(0, 2, 600, 1800, 900, 2500, 1),
             SpdtLink(1, 0, DAY_SECONDS + 100, DAY_SECONDS + 900,
                      DAY_SECONDS + 200, DAY_SECONDS + 800, 2)]
    net = ContactNetwork(3, 4, links, provenance="ingested")
    dense = densify(net, 6, np.random.default_rng(1))
    assert dense.provenance == "densified"
    assert dense.n_days == 6
    per_user = _user_day_links(dense)
    assert sorted(per_user[0]) == list(range(6))
    assert sorted(per_user[1]) == list(range(6))
    assert 2 not in per_user  # never hosted anything
    # every copied day of user 0 is the day-0 visit, shifted whole days
    original = sorted(per_user[0][0])
    for day in range(6):
        assert sorted(per_user[0][day]) == original
    assert dense.n_links == 2 * 6 + 1 * 6


def test_densify_preserves_original_days(rng):
    net = make_net = ContactNetwork(3, 2, [
        SpdtLink(0, 1, 100, 700, 150, 650, 7),
        SpdtLink(1, 2, DAY_SECONDS + 50, DAY_SECONDS + 500, DAY_SECONDS + 60,
                 DAY_SECONDS + 400, 8)], provenance="ingested")
    dense = densify(net, 2, np.random.default_rng(0))
    originals = {(l.host, l.neighbor, l.host_start, l.host_end, l.nbr_start, l.nbr_end)
                 for l in net.iter_links()}
    copied = {(l.host, l.neighbor, l.host_start, l.host_end, l.nbr_start, l.nbr_end)
              for l in dense.iter_links()}
    assert originals <= copied


def test_densify_deterministic_and_never_removes(rng):
    links = [SpdtLink(i % 5, (i + 1) % 5, (i % 3) * DAY_SECONDS + 60 * i,
                      (i % 3) * DAY_SECONDS + 60 * i + 600,
                      (i % 3) * DAY_SECONDS + 60 * i + 60,
                      (i % 3) * DAY_SECONDS + 60 * i + 500, i) for i in range(12)]
    net = ContactNetwork(5, 3, links, provenance="ingested")
    a = densify(net, 5, np.random.default_rng(42))
    b = densify(net, 5, np.random.default_rng(42))
    key = lambda n: sorted((l.host, l.neighbor, l.host_start, l.nbr_start) for l in n.iter_links())
    assert key(a) == key(b)
    assert a.n_links >= net.n_links


def test_densify_rejects_empty_or_shrinking():
    net = ContactNetwork(2, 1, [SpdtLink(0, 1, 0, 600, 0, 600)])
    with pytest.raises(DataError):
        densify(ContactNetwork(2, 1, []), 4, np.random.default_rng(0))
    with pytest.raises(DataError):
        densify(net, 0, np.random.default_rng(0))
