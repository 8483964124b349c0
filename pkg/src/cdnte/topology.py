"""ISP backbone model: PoPs, directed capacitated links, shortest paths.

The topology file format is line oriented, UTF-8, `#` starts a comment:

    pop <int-id> <name>
    link <src-id> <dst-id> <capacity-mbps>     # creates both directions
    arc <src-id> <dst-id> <capacity-mbps>      # one direction only
    origin <pop-id>                            # exactly one

Capacities are stored in bits/sec (mbps * 10^6), converted with exact
integer arithmetic at parse time.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, List, Tuple

from .traffic import RoutingSolution

WeightMap = Dict[int, float]


class TopologyError(ValueError):
    pass


@dataclass(frozen=True)
class Link:
    id: int
    src: int
    dst: int
    capacity: int  # bits/sec


class Topology:
    """Immutable directed capacitated graph of PoPs."""

    def __init__(self, pops: List[int], names: Dict[int, str],
                 links: List[Link], origin_pop: int):
        self.pops = tuple(sorted(pops))
        self.names = dict(names)
        self.links = tuple(links)
        self.origin_pop = origin_pop
        self.link_by_id = {l.id: l for l in self.links}
        self.out_links: Dict[int, Tuple[Link, ...]] = {p: () for p in self.pops}
        self.in_links: Dict[int, Tuple[Link, ...]] = {p: () for p in self.pops}
        out: Dict[int, List[Link]] = {p: [] for p in self.pops}
        inc: Dict[int, List[Link]] = {p: [] for p in self.pops}
        for l in self.links:
            out[l.src].append(l)
            inc[l.dst].append(l)
        for p in self.pops:
            self.out_links[p] = tuple(out[p])
            self.in_links[p] = tuple(inc[p])
        self._validate()

    def _validate(self) -> None:
        if not self.pops:
            raise TopologyError("topology has no pops")
        seen_pairs = set()
        for l in self.links:
            if l.capacity <= 0:
                raise TopologyError(f"link {l.id}: capacity must be positive")
            if l.src == l.dst:
                raise TopologyError(f"link {l.id}: self-loop at pop {l.src}")
            if l.src not in self.names or l.dst not in self.names:
                raise TopologyError(f"link {l.id}: unknown pop")
            if (l.src, l.dst) in seen_pairs:
                raise TopologyError(
                    f"duplicate directed link {l.src}->{l.dst}")
            seen_pairs.add((l.src, l.dst))
        if self.origin_pop not in self.names:
            raise TopologyError(f"origin pop {self.origin_pop} not declared")
        if len(self.pops) > 1 and not self._strongly_connected():
            raise TopologyError("topology is not strongly connected")

    def _strongly_connected(self) -> bool:
        def reaches_all(adjacency):
            start = self.pops[0]
            seen = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                for v in adjacency[u]:
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            return len(seen) == len(self.pops)

        fwd = {p: [l.dst for l in self.out_links[p]] for p in self.pops}
        bwd = {p: [l.src for l in self.in_links[p]] for p in self.pops}
        return reaches_all(fwd) and reaches_all(bwd)


def _capacity_bits(field: str, lineno: int) -> int:
    try:
        mbps = Fraction(field)
    except (ValueError, ZeroDivisionError):
        raise TopologyError(f"line {lineno}: bad capacity {field!r}") from None
    bits = mbps * 1_000_000
    if bits.denominator != 1:
        raise TopologyError(
            f"line {lineno}: capacity {field!r} is finer than 1 bit/sec")
    if bits <= 0:
        raise TopologyError(f"line {lineno}: capacity must be positive")
    return int(bits)


def parse_topology(text: str) -> Topology:
    """Parse the topology file format; raises TopologyError naming the
    offending line on malformed input."""
    names: Dict[int, str] = {}
    links: List[Link] = []
    origin = None
    next_id = 0
    pairs = set()

    def add_link(src: int, dst: int, cap: int, lineno: int) -> None:
        nonlocal next_id
        if (src, dst) in pairs:
            raise TopologyError(f"line {lineno}: duplicate link {src}->{dst}")
        pairs.add((src, dst))
        links.append(Link(next_id, src, dst, cap))
        next_id += 1

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        kind = fields[0]
        try:
            if kind == "pop":
                if len(fields) < 3:
                    raise TopologyError(f"line {lineno}: pop needs id and name")
                pid = int(fields[1])
                if pid in names:
                    raise TopologyError(f"line {lineno}: duplicate pop {pid}")
                names[pid] = " ".join(fields[2:])
            elif kind in ("link", "arc"):
                if len(fields) != 4:
                    raise TopologyError(
                        f"line {lineno}: {kind} needs src dst capacity")
                src, dst = int(fields[1]), int(fields[2])
                if src == dst:
                    raise TopologyError(f"line {lineno}: self-loop at {src}")
                cap = _capacity_bits(fields[3], lineno)
                add_link(src, dst, cap, lineno)
                if kind == "link":
                    add_link(dst, src, cap, lineno)
            elif kind == "origin":
                if len(fields) != 2:
                    raise TopologyError(f"line {lineno}: origin needs a pop id")
                if origin is not None:
                    raise TopologyError(f"line {lineno}: origin declared twice")
                origin = int(fields[1])
            else:
                raise TopologyError(f"line {lineno}: unknown directive {kind!r}")
        except TopologyError:
            raise
        except ValueError:
            raise TopologyError(f"line {lineno}: malformed integer field") from None

    if origin is None:
        raise TopologyError("no origin directive")
    for l in links:
        if l.src not in names or l.dst not in names:
            raise TopologyError(f"link {l.src}->{l.dst} references unknown pop")
    return Topology(list(names), names, links, origin)


def load_topology(path) -> Topology:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_topology(fh.read())


def inverse_cap_weights(topo: Topology) -> WeightMap:
    """InverseCap link weights: C_max / capacity, so the fastest link has
    weight 1. Any positive rescaling gives the same shortest paths."""
    cmax = max(l.capacity for l in topo.links)
    return {l.id: cmax / l.capacity for l in topo.links}


# Relative slack when deciding two path weights are equal (ECMP ties).
_TIE_REL = 1e-12


def _dijkstra_to(topo: Topology, w: WeightMap, dst: int) -> Dict[int, float]:
    """Distance from every pop TO dst (runs on the reversed graph)."""
    dist = {p: float("inf") for p in topo.pops}
    dist[dst] = 0.0
    heap = [(0.0, dst)]
    done = set()
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        done.add(u)
        for l in topo.in_links[u]:
            nd = d + w[l.id]
            if nd < dist[l.src]:
                dist[l.src] = nd
                heapq.heappush(heap, (nd, l.src))
    return dist


def path_distance(topo: Topology, w: WeightMap, s: int, t: int) -> float:
    """Weight of the minimum-weight s->t path; 0 when s == t."""
    if s == t:
        return 0.0
    return _dijkstra_to(topo, w, t)[s]


def all_pairs_distances(topo: Topology, w: WeightMap) -> Dict[Tuple[int, int], float]:
    dists = {}
    for t in topo.pops:
        to_t = _dijkstra_to(topo, w, t)
        for s in topo.pops:
            dists[(s, t)] = 0.0 if s == t else to_t[s]
    return dists


def shortest_path_routes(topo: Topology, w: WeightMap) -> RoutingSolution:
    """ECMP routing over all minimum-weight paths, for every ordered pair.

    At each node the commodity's mass splits evenly across all outgoing
    links that lie on some minimum-weight path to the destination.
    """
    for link_id, weight in w.items():
        if not (weight > 0) or weight == float("inf"):
            raise TopologyError(f"weight for link {link_id} must be positive "
                                "and finite")
    routes: RoutingSolution = {}
    for t in topo.pops:
        dist = _dijkstra_to(topo, w, t)
        # Links on some shortest path to t, grouped by tail node.
        dag: Dict[int, List[Link]] = {}
        for l in topo.links:
            target = w[l.id] + dist[l.dst]
            if dist[l.src] < float("inf") and \
                    abs(dist[l.src] - target) <= _TIE_REL * (1.0 + abs(target)):
                dag.setdefault(l.src, []).append(l)
        # Propagate unit mass from each source in decreasing-distance order
        # (every DAG edge strictly decreases distance-to-t).
        order = sorted((p for p in topo.pops if p != t),
                       key=lambda p: (-dist[p], p))
        for s in topo.pops:
            if s == t:
                continue
            if dist[s] == float("inf"):
                raise TopologyError(f"pop {t} unreachable from {s}")
            mass = {s: 1.0}
            fracs: Dict[int, float] = {}
            for u in order:
                mu = mass.get(u, 0.0)
                if mu == 0.0 or u == t:
                    continue
                nexts = dag.get(u)
                if not nexts:
                    raise TopologyError(
                        f"no shortest-path successor at pop {u} toward {t}")
                share = mu / len(nexts)
                for l in nexts:
                    fracs[l.id] = fracs.get(l.id, 0.0) + share
                    mass[l.dst] = mass.get(l.dst, 0.0) + share
            routes[(s, t)] = fracs
    return routes
