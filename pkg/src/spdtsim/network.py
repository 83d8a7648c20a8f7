"""Temporal contact networks of same-place different-time (SPDT) links.

An SPDT link records one transmission opportunity: a host occupied a location
over ``[host_start, host_end]`` and a neighbor was present at the same place
over ``[nbr_start, nbr_end]``, possibly only after the host had already left.
Links are bucketed by the day of the host's arrival and stored as immutable
column arrays so that many simulation workers can read one network
concurrently.
"""
from __future__ import annotations

import gzip
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DataError

DAY_SECONDS = 86400

PROVENANCES = ("ingested", "densified", "synthetic")


class LinkKind(IntEnum):
    """How the neighbor's presence relates to the host's stay."""

    DIRECT_ONLY = 0   # neighbor arrives and leaves while the host is present
    MIXED = 1         # neighbor arrives during the stay, leaves after the host
    INDIRECT_ONLY = 2  # neighbor arrives only once the host has left


#: Kinds in which host and neighbor actually met (share presence time).
DIRECT_KINDS = frozenset({LinkKind.DIRECT_ONLY, LinkKind.MIXED})
ALL_KINDS = frozenset(LinkKind)

KIND_SET_NAMES: Mapping[str, frozenset] = {
    "direct": DIRECT_KINDS,
    "all": ALL_KINDS,
}


def kind_set_from_name(name: str) -> frozenset:
    try:
        return KIND_SET_NAMES[name]
    except KeyError:
        raise DataError(f"unknown link-kind set {name!r}; expected one of {sorted(KIND_SET_NAMES)}") from None


def kind_set_name(kinds: frozenset) -> str:
    for name, ks in KIND_SET_NAMES.items():
        if ks == frozenset(kinds):
            return name
    return "+".join(sorted(k.name for k in kinds))


@dataclass(frozen=True)
class SpdtLink:
    """One host-to-neighbor transmission opportunity.

    Times are integer seconds. The neighbor's presence window never starts
    before the host's arrival; it may extend past the host's departure, which
    is what makes indirect (same place, different time) transmission possible.
    """

    host: int
    neighbor: int
    host_start: int
    host_end: int
    nbr_start: int
    nbr_end: int
    location_tag: int | None = None

    def validate(self, delta: int | None = None) -> None:
        if self.host == self.neighbor:
            raise DataError(f"link host equals neighbor ({self.host})")
        if self.host < 0 or self.neighbor < 0:
            raise DataError(f"negative node id in link {self}")
        if self.host_start > self.host_end:
            raise DataError(f"host interval inverted in link {self}")
        if self.nbr_start > self.nbr_end:
            raise DataError(f"neighbor interval inverted in link {self}")
        if self.nbr_start < self.host_start:
            raise DataError(f"neighbor presence starts before host arrival in link {self}")
        if delta is not None and self.nbr_start > self.host_end + delta:
            raise DataError(f"neighbor presence starts beyond host_end + delta in link {self}")

    @property
    def day(self) -> int:
        return self.host_start // DAY_SECONDS


def classify_link(link: SpdtLink) -> LinkKind:
    """Classify a link by the overlap of neighbor presence with the host stay.

    Boundary rules: a neighbor leaving exactly at the host's departure is
    DIRECT_ONLY; a neighbor arriving exactly at the host's departure is
    INDIRECT_ONLY.
    """
    if link.nbr_start >= link.host_end:
        return LinkKind.INDIRECT_ONLY
    if link.nbr_end <= link.host_end:
        return LinkKind.DIRECT_ONLY
    return LinkKind.MIXED


def classify_arrays(host_end, nbr_start, nbr_end) -> np.ndarray:
    """Vectorized :func:`classify_link` over column arrays."""
    kind = np.full(len(host_end), LinkKind.MIXED, dtype=np.uint8)
    kind[np.asarray(nbr_end) <= np.asarray(host_end)] = LinkKind.DIRECT_ONLY
    kind[np.asarray(nbr_start) >= np.asarray(host_end)] = LinkKind.INDIRECT_ONLY
    return kind


class DayLinks:
    """Column store for one day's links, sorted canonically and CSR-indexed.

    ``host_ptr`` gives, for each node, the slice of rows it hosts;
    ``by_neighbor``/``nbr_ptr`` give the same for the receiving side.
    """

    __slots__ = ("host", "neighbor", "host_start", "host_end", "nbr_start",
                 "nbr_end", "tag", "kind", "host_ptr", "by_neighbor", "nbr_ptr")

    def __init__(self, n_nodes: int, host, neighbor, host_start, host_end,
                 nbr_start, nbr_end, tag):
        order = np.lexsort((nbr_end, nbr_start, host_end, neighbor, host_start, host))
        self.host = np.asarray(host, dtype=np.int32)[order]
        self.neighbor = np.asarray(neighbor, dtype=np.int32)[order]
        self.host_start = np.asarray(host_start, dtype=np.int64)[order]
        self.host_end = np.asarray(host_end, dtype=np.int64)[order]
        self.nbr_start = np.asarray(nbr_start, dtype=np.int64)[order]
        self.nbr_end = np.asarray(nbr_end, dtype=np.int64)[order]
        self.tag = np.asarray(tag, dtype=np.int64)[order]
        self.kind = classify_arrays(self.host_end, self.nbr_start, self.nbr_end)
        self.host_ptr = _csr_pointers(self.host, n_nodes)
        self.by_neighbor = np.argsort(self.neighbor, kind="stable").astype(np.int64)
        self.nbr_ptr = _csr_pointers(self.neighbor[self.by_neighbor], n_nodes)

    def __len__(self) -> int:
        return len(self.host)

    def rows_hosted_by(self, nodes) -> np.ndarray:
        """Row indices of links hosted by any of ``nodes``."""
        nodes = np.asarray(nodes, dtype=np.int64)
        return concat_ranges(self.host_ptr[nodes], self.host_ptr[nodes + 1])

    def rows_received_by(self, nodes) -> np.ndarray:
        nodes = np.asarray(nodes, dtype=np.int64)
        return self.by_neighbor[concat_ranges(self.nbr_ptr[nodes], self.nbr_ptr[nodes + 1])]

    def link(self, row: int) -> SpdtLink:
        tag = int(self.tag[row])
        return SpdtLink(int(self.host[row]), int(self.neighbor[row]),
                        int(self.host_start[row]), int(self.host_end[row]),
                        int(self.nbr_start[row]), int(self.nbr_end[row]),
                        None if tag < 0 else tag)


def _csr_pointers(sorted_keys: np.ndarray, n_keys: int) -> np.ndarray:
    counts = np.bincount(sorted_keys, minlength=n_keys)
    ptr = np.zeros(n_keys + 1, dtype=np.int64)
    np.cumsum(counts, out=ptr[1:])
    return ptr


def concat_ranges(starts: np.ndarray, stops: np.ndarray) -> np.ndarray:
    """Concatenate ``[arange(a, b) for a, b in zip(starts, stops)]`` without a loop."""
    lengths = stops - starts
    total = int(lengths.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    keep = lengths > 0
    starts = starts[keep]
    lengths = lengths[keep]
    out = np.ones(total, dtype=np.int64)
    out[0] = starts[0]
    boundaries = np.cumsum(lengths)[:-1]
    out[boundaries] = starts[1:] - (starts[:-1] + lengths[:-1] - 1)
    return np.cumsum(out)


class ContactNetwork:
    """Day-indexed multiset of SPDT links over a fixed node universe.

    Immutable after construction; all queries are read-only, so one network
    can back many concurrent simulation runs.
    """

    def __init__(self, n_nodes: int, n_days: int, links: Iterable[SpdtLink] | Sequence[np.ndarray],
                 provenance: str = "synthetic", validate: bool = True):
        if n_nodes < 0 or n_days < 0:
            raise DataError("n_nodes and n_days must be nonnegative")
        if provenance not in PROVENANCES:
            raise DataError(f"unknown provenance {provenance!r}")
        self.n_nodes = int(n_nodes)
        self.n_days = int(n_days)
        self.provenance = provenance
        if isinstance(links, tuple) and len(links) == 7 and isinstance(links[0], np.ndarray):
            cols = links
        else:
            cols = _links_to_columns(links)
        if validate:
            _validate_columns(cols, self.n_nodes, self.n_days)
        host, neighbor, hs, he, ns, ne, tag = cols
        day = hs // DAY_SECONDS if len(hs) else hs
        self._days: list[DayLinks] = []
        for d in range(self.n_days):
            sel = day == d
            self._days.append(DayLinks(self.n_nodes, host[sel], neighbor[sel], hs[sel],
                                       he[sel], ns[sel], ne[sel], tag[sel]))

    @property
    def n_links(self) -> int:
        return sum(len(d) for d in self._days)

    def day(self, day: int) -> DayLinks:
        if not 0 <= day < self.n_days:
            raise DataError(f"day {day} outside [0, {self.n_days})")
        return self._days[day]

    def iter_links(self, days: Iterable[int] | None = None) -> Iterator[SpdtLink]:
        for d in range(self.n_days) if days is None else days:
            dl = self.day(d)
            for row in range(len(dl)):
                yield dl.link(row)

    def _check_node(self, node: int) -> None:
        if not 0 <= node < self.n_nodes:
            raise DataError(f"node {node} outside [0, {self.n_nodes})")

    def neighbors_of(self, node: int, days: Iterable[int] | None = None,
                     kinds: frozenset = ALL_KINDS) -> set[int]:
        """Distinct opposite endpoints of ``node``'s links in ``days``.

        Symmetric in storage: a link u->v makes v a neighbor of u and u a
        neighbor of v for the matching kinds and days.
        """
        self._check_node(node)
        kind_codes = _kind_codes(kinds)
        out: set[int] = set()
        for d in range(self.n_days) if days is None else days:
            dl = self.day(d)
            hosted = slice(dl.host_ptr[node], dl.host_ptr[node + 1])
            sel = np.isin(dl.kind[hosted], kind_codes)
            out.update(dl.neighbor[hosted][sel].tolist())
            received = dl.by_neighbor[dl.nbr_ptr[node]:dl.nbr_ptr[node + 1]]
            sel = np.isin(dl.kind[received], kind_codes)
            out.update(dl.host[received][sel].tolist())
        return out

    def contact_degree(self, node: int, days: Iterable[int] | None = None,
                       kinds: frozenset = ALL_KINDS) -> int:
        """Number of distinct contacts of ``node`` over the day window."""
        return len(self.neighbors_of(node, days, kinds))

    def links_from_infected(self, day: int, infected: Iterable[int]) -> dict[int, list[SpdtLink]]:
        """Group the day's links from infected hosts by susceptible receiver.

        Returns only receivers (nodes outside ``infected``) with at least one
        qualifying link. Reference implementation for tests and small runs;
        the epidemic engine uses the vectorized row interface directly.
        """
        dl = self.day(day)
        infected_set = set(int(i) for i in infected)
        for i in infected_set:
            self._check_node(i)
        out: dict[int, list[SpdtLink]] = {}
        if not infected_set:
            return out
        hosts = np.fromiter(sorted(infected_set), dtype=np.int64, count=len(infected_set))
        for row in dl.rows_hosted_by(hosts):
            nbr = int(dl.neighbor[row])
            if nbr in infected_set:
                continue
            out.setdefault(nbr, []).append(dl.link(row))
        return out

    def active_nodes(self, days: Iterable[int] | None = None,
                     kinds: frozenset = ALL_KINDS) -> np.ndarray:
        """Sorted ids of nodes appearing on either end of a link in the window."""
        kind_codes = _kind_codes(kinds)
        seen = np.zeros(self.n_nodes, dtype=bool)
        for d in range(self.n_days) if days is None else days:
            dl = self.day(d)
            sel = np.isin(dl.kind, kind_codes)
            seen[dl.host[sel]] = True
            seen[dl.neighbor[sel]] = True
        return np.flatnonzero(seen)

    def neighbor_sets_csr(self, days: Iterable[int] | None = None,
                          kinds: frozenset = ALL_KINDS) -> tuple[np.ndarray, np.ndarray]:
        """Distinct-neighbor adjacency over a window as (indptr, indices).

        Both directions of every link are included, so ``indices[indptr[v]:
        indptr[v+1]]`` is exactly ``neighbors_of(v, days, kinds)``, sorted.
        """
        kind_codes = _kind_codes(kinds)
        ends = []
        for d in range(self.n_days) if days is None else days:
            dl = self.day(d)
            sel = np.isin(dl.kind, kind_codes)
            ends.append(np.stack([dl.host[sel], dl.neighbor[sel]]))
            ends.append(np.stack([dl.neighbor[sel], dl.host[sel]]))
        if ends:
            pairs = np.unique(np.concatenate(ends, axis=1), axis=1)
            src, dst = pairs[0].astype(np.int64), pairs[1].astype(np.int64)
        else:
            src = dst = np.empty(0, dtype=np.int64)
        indptr = _csr_pointers(src, self.n_nodes)
        return indptr, dst

    def links_as_columns(self) -> tuple[np.ndarray, ...]:
        cols = [[], [], [], [], [], [], []]
        for d in range(self.n_days):
            dl = self.day(d)
            for c, arr in zip(cols, (dl.host, dl.neighbor, dl.host_start, dl.host_end,
                                     dl.nbr_start, dl.nbr_end, dl.tag)):
                c.append(arr)
        return tuple(np.concatenate(c) if c else np.empty(0, dtype=np.int64) for c in cols)


def _kind_codes(kinds: frozenset) -> np.ndarray:
    if not kinds:
        raise DataError("empty link-kind set")
    return np.asarray(sorted(int(k) for k in kinds), dtype=np.uint8)


def _links_to_columns(links: Iterable[SpdtLink]) -> tuple[np.ndarray, ...]:
    rows = list(links)
    n = len(rows)
    host = np.empty(n, dtype=np.int32)
    nbr = np.empty(n, dtype=np.int32)
    hs = np.empty(n, dtype=np.int64)
    he = np.empty(n, dtype=np.int64)
    ns = np.empty(n, dtype=np.int64)
    ne = np.empty(n, dtype=np.int64)
    tag = np.empty(n, dtype=np.int64)
    for i, l in enumerate(rows):
        host[i] = l.host
        nbr[i] = l.neighbor
        hs[i] = l.host_start
        he[i] = l.host_end
        ns[i] = l.nbr_start
        ne[i] = l.nbr_end
        tag[i] = -1 if l.location_tag is None else l.location_tag
    return host, nbr, hs, he, ns, ne, tag


def _validate_columns(cols, n_nodes: int, n_days: int) -> None:
    host, nbr, hs, he, ns, ne, _tag = cols
    if len(host) == 0:
        return
    if host.min() < 0 or nbr.min() < 0 or host.max() >= n_nodes or nbr.max() >= n_nodes:
        raise DataError("link endpoint outside node universe")
    if np.any(host == nbr):
        raise DataError("self-link present")
    if np.any(hs > he) or np.any(ns > ne) or np.any(ns < hs):
        raise DataError("link interval invariant violated")
    day = hs // DAY_SECONDS
    if day.min() < 0 or day.max() >= n_days:
        raise DataError("link day bucket outside [0, n_days)")


# ---------------------------------------------------------------------------
# File formats.
#
# Text: header line `#nodes=N days=D provenance=P`, then one link per line
#   host,neighbor,host_start,host_end,nbr_start,nbr_end[,location_tag]
# Binary: magic "SPDT", version u16, provenance u8, pad u8, then u64
#   n_nodes/n_days/n_links, then fixed-width little-endian records in the
#   same field order (tag -1 when absent).
# ---------------------------------------------------------------------------

_BINARY_MAGIC = b"SPDT"
_BINARY_VERSION = 1
_RECORD_DTYPE = np.dtype([("host", "<u4"), ("neighbor", "<u4"),
                          ("host_start", "<i8"), ("host_end", "<i8"),
                          ("nbr_start", "<i8"), ("nbr_end", "<i8"),
                          ("tag", "<i8")])


def write_network_text(net: ContactNetwork, path: str) -> None:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "wt", encoding="utf-8") as f:
        f.write(f"#nodes={net.n_nodes} days={net.n_days} provenance={net.provenance}\n")
        for d in range(net.n_days):
            dl = net.day(d)
            for i in range(len(dl)):
                base = (f"{dl.host[i]},{dl.neighbor[i]},{dl.host_start[i]},"
                        f"{dl.host_end[i]},{dl.nbr_start[i]},{dl.nbr_end[i]}")
                if dl.tag[i] >= 0:
                    base += f",{dl.tag[i]}"
                f.write(base + "\n")


def read_network_text(path: str) -> ContactNetwork:
    opener = gzip.open if str(path).endswith(".gz") else open
    with opener(path, "rt", encoding="utf-8") as f:
        header = f.readline().strip()
        meta = _parse_header(header)
        cols: list[list[int]] = [[], [], [], [], [], [], []]
        for lineno, line in enumerate(f, start=2):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) not in (6, 7):
                raise DataError(f"{path}:{lineno}: expected 6 or 7 fields, got {len(parts)}")
            try:
                vals = [int(p) for p in parts]
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-integer field") from None
            if len(vals) == 6:
                vals.append(-1)
            for c, v in zip(cols, vals):
                c.append(v)
    arrays = (np.asarray(cols[0], dtype=np.int32), np.asarray(cols[1], dtype=np.int32),
              np.asarray(cols[2], dtype=np.int64), np.asarray(cols[3], dtype=np.int64),
              np.asarray(cols[4], dtype=np.int64), np.asarray(cols[5], dtype=np.int64),
              np.asarray(cols[6], dtype=np.int64))
    return ContactNetwork(meta["nodes"], meta["days"], arrays, meta["provenance"])


def _parse_header(header: str) -> dict:
    if not header.startswith("#"):
        raise DataError("missing network header line")
    fields = dict(part.split("=", 1) for part in header[1:].split())
    try:
        return {"nodes": int(fields["nodes"]), "days": int(fields["days"]),
                "provenance": fields["provenance"]}
    except (KeyError, ValueError):
        raise DataError(f"malformed network header: {header!r}") from None


def write_network_binary(net: ContactNetwork, path: str) -> None:
    host, nbr, hs, he, ns, ne, tag = net.links_as_columns()
    records = np.empty(len(host), dtype=_RECORD_DTYPE)
    records["host"] = host
    records["neighbor"] = nbr
    records["host_start"] = hs
    records["host_end"] = he
    records["nbr_start"] = ns
    records["nbr_end"] = ne
    records["tag"] = tag
    prov_code = PROVENANCES.index(net.provenance)
    with open(path, "wb") as f:
        f.write(_BINARY_MAGIC)
        f.write(np.uint16(_BINARY_VERSION).tobytes())
        f.write(bytes([prov_code, 0]))
        f.write(np.asarray([net.n_nodes, net.n_days, len(records)], dtype="<u8").tobytes())
        records.tofile(f)


def read_network_binary(path: str) -> ContactNetwork:
    with open(path, "rb") as f:
        if f.read(4) != _BINARY_MAGIC:
            raise DataError(f"{path}: not a binary network file")
        version = int(np.frombuffer(f.read(2), dtype="<u2")[0])
        if version != _BINARY_VERSION:
            raise DataError(f"{path}: unsupported binary version {version}")
        prov_code = f.read(2)[0]
        if prov_code >= len(PROVENANCES):
            raise DataError(f"{path}: unknown provenance code {prov_code}")
        n_nodes, n_days, n_links = (int(x) for x in np.frombuffer(f.read(24), dtype="<u8"))
        records = np.fromfile(f, dtype=_RECORD_DTYPE, count=n_links)
    if len(records) != n_links:
        raise DataError(f"{path}: truncated binary network file")
    arrays = (records["host"].astype(np.int32), records["neighbor"].astype(np.int32),
              records["host_start"].astype(np.int64), records["host_end"].astype(np.int64),
              records["nbr_start"].astype(np.int64), records["nbr_end"].astype(np.int64),
              records["tag"].astype(np.int64))
    return ContactNetwork(n_nodes, n_days, arrays, PROVENANCES[prov_code])


def save_network(net: ContactNetwork, path: str) -> None:
    """Save by extension: ``.spdt``/``.csv``/``.txt`` text, ``.bin`` binary."""
    if str(path).endswith(".bin"):
        write_network_binary(net, path)
    else:
        write_network_text(net, path)


def load_network(path: str) -> ContactNetwork:
    if str(path).endswith(".bin"):
        return read_network_binary(path)
    return read_network_text(path)
