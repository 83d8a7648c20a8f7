"""GPS location-update streams to SPDT contact networks.

Pipeline: per-user stay detection (greedy segmentation against a fixed
anchor within a distance radius), link extraction between co-located stays
(a neighbor stay starting while the host is present or within ``delta``
seconds after the host leaves), and densification of sparse networks by
copying a user's active days onto its empty days.
"""
from __future__ import annotations

import gzip
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import DataError
from .network import DAY_SECONDS, ContactNetwork, SpdtLink

EARTH_RADIUS_M = 6371000.0


@dataclass(frozen=True)
class LocationUpdate:
    user: str
    lat: float
    lon: float
    t: int

    def validate(self) -> None:
        if not -90.0 <= self.lat <= 90.0:
            raise DataError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise DataError(f"longitude {self.lon} outside [-180, 180]")


@dataclass(frozen=True)
class Stay:
    """A maximal run of one user's updates near the run's first location."""

    user: str
    lat: float          # anchor: coordinates of the first update
    lon: float
    start: int
    end: int
    update_count: int


@dataclass(frozen=True)
class IngestionParams:
    radius_m: float = 20.0
    delta_seconds: int = 3600
    min_neighbor_updates: int = 2

    def __post_init__(self):
        if self.radius_m <= 0:
            raise DataError("radius must be positive")
        if self.delta_seconds < 0:
            raise DataError("delta must be nonnegative")
        if self.min_neighbor_updates < 2:
            raise DataError("a neighbor needs at least two updates to count as staying")


def haversine_m(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Great-circle distance in meters."""
    p1, l1, p2, l2 = map(math.radians, (lat1, lon1, lat2, lon2))
    a = (math.sin((p2 - p1) / 2.0) ** 2
         + math.cos(p1) * math.cos(p2) * math.sin((l2 - l1) / 2.0) ** 2)
    return 2.0 * EARTH_RADIUS_M * math.asin(math.sqrt(a))


def detect_stays(updates: Sequence[LocationUpdate], params: IngestionParams) -> list[Stay]:
    """Greedy stay segmentation of one user's time-sorted updates.

    A stay opens at the first update not within the radius of the current
    anchor; updates within the radius extend it. Duplicate timestamps keep
    the last record seen.
    """
    stays: list[Stay] = []
    deduped: list[LocationUpdate] = []
    for u in updates:
        if deduped and u.t == deduped[-1].t:
            deduped[-1] = u
            continue
        if deduped and u.t < deduped[-1].t:
            raise DataError(f"updates for user {u.user!r} not time-sorted")
        deduped.append(u)
    anchor: LocationUpdate | None = None
    last_t = 0
    count = 0
    for u in deduped:
        if anchor is not None and haversine_m(anchor.lat, anchor.lon, u.lat, u.lon) <= params.radius_m:
            last_t = u.t
            count += 1
            continue
        if anchor is not None:
            stays.append(Stay(anchor.user, anchor.lat, anchor.lon, anchor.t, last_t, count))
        anchor, last_t, count = u, u.t, 1
    if anchor is not None:
        stays.append(Stay(anchor.user, anchor.lat, anchor.lon, anchor.t, last_t, count))
    return stays


class _AnchorGrid:
    """Spatial hash of stay anchors; cells are at least 2R on a side."""

    def __init__(self, stays: Sequence[Stay], radius_m: float):
        self.stays = stays
        mean_lat = sum(s.lat for s in stays) / len(stays) if stays else 0.0
        self.dlat = max(2.0 * radius_m / 111320.0, 1e-9)
        coslat = max(abs(math.cos(math.radians(mean_lat))), 0.01)
        self.dlon = max(2.0 * radius_m / (111320.0 * coslat), 1e-9)
        self.cells: dict[tuple[int, int], list[int]] = {}
        for i, s in enumerate(stays):
            self.cells.setdefault(self._cell(s.lat, s.lon), []).append(i)

    def _cell(self, lat: float, lon: float) -> tuple[int, int]:
        return (int(math.floor(lat / self.dlat)), int(math.floor(lon / self.dlon)))

    def candidates_near(self, lat: float, lon: float) -> Iterator[int]:
        ci, cj = self._cell(lat, lon)
        for di in (-1, 0, 1):
            for dj in (-1, 0, 1):
                yield from self.cells.get((ci + di, cj + dj), ())


def extract_links(stays: Sequence[Stay], params: IngestionParams,
                  user_ids: dict[str, int]) -> list[SpdtLink]:
    """SPDT links between every host stay and co-located neighbor stays.

    A neighbor stay qualifies when its anchor lies within the radius of the
    host's anchor, it has enough updates to count as actually staying, and it
    begins between the host's arrival and ``delta`` seconds after the host
    leaves. Neighbor presence is truncated at ``host_end + delta``; every
    overlapping stay pair yields its own link. The link's location tag is the
    host stay's index, so links from one visit stay grouped.
    """
    links: list[SpdtLink] = []
    if not stays:
        return links
    grid = _AnchorGrid(stays, params.radius_m)
    for host_idx, host in enumerate(stays):
        horizon = host.end + params.delta_seconds
        for nbr_idx in grid.candidates_near(host.lat, host.lon):
            nbr = grid.stays[nbr_idx]
            if nbr.user == host.user:
                continue
            if nbr.update_count < params.min_neighbor_updates:
                continue
            if not host.start <= nbr.start <= horizon:
                continue
            if haversine_m(host.lat, host.lon, nbr.lat, nbr.lon) > params.radius_m:
                continue
            links.append(SpdtLink(user_ids[host.user], user_ids[nbr.user],
                                  host.start, host.end,
                                  nbr.start, min(nbr.end, horizon),
                                  location_tag=host_idx))
    links.sort(key=lambda l: (l.host, l.host_start, l.neighbor, l.nbr_start))
    return links


@dataclass
class IngestReport:
    n_updates: int = 0
    n_rejected: int = 0
    n_users: int = 0
    n_stays: int = 0
    n_links: int = 0
    rejected_lines: list[int] = field(default_factory=list)


def parse_trace_line(line: str) -> LocationUpdate:
    parts = line.strip().split(",")
    if len(parts) != 4:
        raise DataError(f"expected 4 fields, got {len(parts)}")
    user, lat_s, lon_s, t_s = parts
    try:
        update = LocationUpdate(user, float(lat_s), float(lon_s), int(t_s))
    except ValueError:
        raise DataError("non-numeric coordinate or timestamp") from None
    update.validate()
    return update


def read_trace(path: str) -> tuple[list[LocationUpdate], IngestReport]:
    """Read a `user,lat,lon,unix_seconds` trace; rejects bad records."""
    report = IngestReport()
    updates: list[LocationUpdate] = []
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                updates.append(parse_trace_line(line))
            except DataError:
                report.n_rejected += 1
                report.rejected_lines.append(lineno)
    report.n_updates = len(updates)
    return updates, report


def ingest_trace(updates: Iterable[LocationUpdate], params: IngestionParams,
                 report: IngestReport | None = None) -> ContactNetwork:
    """Full pipeline from updates to an SPDT network with normalized days.

    User ids map to dense node ids in sorted order; timestamps shift by whole
    days so the earliest stay falls on day 0.
    """
    report = report if report is not None else IngestReport()
    by_user: dict[str, list[LocationUpdate]] = {}
    for u in updates:
        by_user.setdefault(u.user, []).append(u)
    user_ids = {user: i for i, user in enumerate(sorted(by_user))}
    report.n_users = len(user_ids)
    stays: list[Stay] = []
    for user in sorted(by_user):
        stays.extend(detect_stays(sorted(by_user[user], key=lambda u: u.t), params))
    report.n_stays = len(stays)
    links = extract_links(stays, params, user_ids)
    report.n_links = len(links)
    if links:
        day0 = min(l.host_start for l in links) // DAY_SECONDS
        shift = day0 * DAY_SECONDS
        links = [SpdtLink(l.host, l.neighbor, l.host_start - shift, l.host_end - shift,
                          l.nbr_start - shift, l.nbr_end - shift, l.location_tag)
                 for l in links]
        n_days = max(l.host_start for l in links) // DAY_SECONDS + 1
    else:
        n_days = 0
    return ContactNetwork(len(user_ids), n_days, links, provenance="ingested")


def densify(net: ContactNetwork, target_days: int, rng: np.random.Generator) -> ContactNetwork:
    """Fill every active user's empty days with copies of its active days.

    For each user with at least one hosted-link day: every day without hosted
    links, within the original range and out to ``target_days``, receives a
    whole-day-shifted copy of the host links of one uniformly chosen active
    day. Copied links get fresh location tags so copied visits stay distinct.
    """
    if net.n_days < 1 or net.n_links == 0:
        raise DataError("cannot densify an empty network")
    if target_days < net.n_days:
        raise DataError("target_days must be >= the network's day count")
    by_user_day: dict[int, dict[int, list[SpdtLink]]] = {}
    all_links: list[SpdtLink] = []
    max_tag = -1
    for link in net.iter_links():
        all_links.append(link)
        by_user_day.setdefault(link.host, {}).setdefault(link.day, []).append(link)
        if link.location_tag is not None:
            max_tag = max(max_tag, link.location_tag)
    next_tag = max_tag + 1
    tag_map: dict[tuple[int, int, int | None], int] = {}
    for host in sorted(by_user_day):
        days = by_user_day[host]
        active = sorted(days)
        for day in range(target_days):
            if day in days:
                continue
            src = active[int(rng.integers(len(active)))]
            shift = (day - src) * DAY_SECONDS
            for l in days[src]:
                tag = None
                if l.location_tag is not None:
                    key = (host, day, l.location_tag)
                    if key not in tag_map:
                        tag_map[key] = next_tag
                        next_tag += 1
                    tag = tag_map[key]
                all_links.append(SpdtLink(l.host, l.neighbor, l.host_start + shift,
                                          l.host_end + shift, l.nbr_start + shift,
                                          l.nbr_end + shift, tag))
    return ContactNetwork(net.n_nodes, target_days, all_links, provenance="densified")
