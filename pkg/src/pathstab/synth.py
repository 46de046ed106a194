"""Synthetic traces with known stability counters.

The observer is a route collector: it peers with its neighbors and never
provides transit, so a peer's paths to the origin are the simple paths in the
graph with the observer removed. Each scenario also returns the counter every
(peer, prefix) entry should have at every tick, computed here by direct
bookkeeping rather than through the metrics module.
"""

from __future__ import annotations

import enum
import ipaddress
import json
import random
from dataclasses import dataclass, field
from typing import IO, Optional

import networkx as nx

from .model import AttributeSet, Kind, Origin, UpdateRecord, parse_prefix

DEFAULT_PREFIX = "203.0.113.0/24"
DEFAULT_BASE_TS = 1_243_804_800


class ScenarioKind(enum.Enum):
    QUIESCENT = "quiescent"
    FLAP = "flap"
    PATH_EXPLORATION = "explore"


@dataclass(frozen=True)
class SynthTopology:
    nodes: tuple
    edges: tuple
    origin: int
    observer: int

    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(self.nodes)
        g.add_edges_from(self.edges)
        return g

    def validate(self) -> None:
        g = self.graph()
        if any(a == b for a, b in self.edges):
            raise ValueError("self-loops are not allowed")
        if len({frozenset(e) for e in self.edges}) != len(self.edges):
            raise ValueError("duplicate edge")
        if not nx.is_connected(g):
            raise ValueError("topology is disconnected")
        for v in (self.origin, self.observer):
            if v not in g:
                raise ValueError(f"node {v} not in topology")
        if self.origin == self.observer:
            raise ValueError("observer cannot originate the prefix")
        if g.degree(self.observer) < 1:
            raise ValueError("observer has no neighbor")

    @property
    def peers(self) -> list:
        return sorted(self.graph().neighbors(self.observer))


def line(n: int) -> SynthTopology:
    """Observer 0 - 1 - 2 - ... - n, origin n."""
    nodes = tuple(range(n + 1))
    return SynthTopology(nodes, tuple((i, i + 1) for i in range(n)), n, 0)


def ring(n: int = 4, observer_links: tuple = (1,), origin: int = 2) -> SynthTopology:
    """Ring 1..n plus an observer node 0 linked to ``observer_links``."""
    edges = [(i, i % n + 1) for i in range(1, n + 1)]
    edges += [(0, p) for p in observer_links]
    return SynthTopology(tuple(range(n + 1)), tuple(edges), origin, 0)


def mesh(n: int = 4, observer_links: tuple = (1, 2), origin: Optional[int] = None, stub_origin: bool = False) -> SynthTopology:
    """Full mesh 1..n plus observer 0; ``stub_origin`` hangs origin n+1 off node n."""
    edges = [(a, b) for a in range(1, n + 1) for b in range(a + 1, n + 1)]
    edges += [(0, p) for p in observer_links]
    nodes = list(range(n + 1))
    if stub_origin:
        nodes.append(n + 1)
        edges.append((n, n + 1))
        origin = n + 1
    return SynthTopology(tuple(nodes), tuple(edges), n if origin is None else origin, 0)


@dataclass(frozen=True)
class ScenarioSpec:
    kind: ScenarioKind
    duration: int
    period: int = 1
    failed_edge: Optional[tuple] = None
    failure_tick: int = 0
    mrai_secs: int = 30

    def validate(self, topo: SynthTopology) -> None:
        if self.duration < 1:
            raise ValueError("duration must be >= 1 tick")
        if self.period < 1:
            raise ValueError("period must be >= 1")
        if self.mrai_secs < 1:
            raise ValueError("mrai must be >= 1")
        if self.kind is ScenarioKind.PATH_EXPLORATION:
            if self.failed_edge is None or not topo.graph().has_edge(*self.failed_edge):
                raise ValueError(f"failed edge {self.failed_edge} not in topology")
            if not 0 <= self.failure_tick < self.duration:
                raise ValueError("failure tick must be inside the scenario")


def peer_address(asn: int) -> str:
    return str(ipaddress.IPv4Address(0xC0000200 + asn))


def peer_paths(topo: SynthTopology, peer: int) -> list:
    """Simple paths peer -> origin avoiding the observer, by (length, hops)."""
    g = topo.graph()
    g.remove_node(topo.observer)
    if peer == topo.origin:
        return [(peer,)]
    paths = [tuple(p) for p in nx.all_simple_paths(g, peer, topo.origin)]
    return sorted(paths, key=lambda p: (len(p), p))


def _uses(path: tuple, edge: tuple) -> bool:
    e = frozenset(edge)
    return any(frozenset(pair) == e for pair in zip(path, path[1:]))


def exploration_sequence(paths: list, failed_edge: tuple) -> list:
    """Paths announced after ``failed_edge`` fails, one per tick.

    Walks increasing path lengths; at each length the first surviving path is
    announced and ends the walk, otherwise the first (doomed) path of that
    length is announced. ``None`` at the end means the peer withdraws.
    """
    if not paths or not _uses(paths[0], failed_edge):
        return []
    rest = paths[1:]
    lengths = sorted({len(p) for p in rest})
    out = []
    for n in lengths:
        at_n = [p for p in rest if len(p) == n]
        alive = [p for p in at_n if not _uses(p, failed_edge)]
        if alive:
            out.append(alive[0])
            return out
        out.append(at_n[0])
    out.append(None)
    return out


@dataclass
class GroundTruth:
    t0: float
    mrai_secs: int
    duration: int
    prefix: str
    # one dict per tick: (peer id, prefix) -> phi; absent entries are omitted
    phi: list = field(default_factory=list)
    explored: dict = field(default_factory=dict)

    def series(self, peer: str, prefix: Optional[str] = None) -> list:
        key = (peer, prefix or self.prefix)
        return [t.get(key) for t in self.phi]

    def write(self, fh: IO[str]) -> None:
        meta = {
            "kind": "meta",
            "t0": self.t0,
            "mrai_secs": self.mrai_secs,
            "duration": self.duration,
            "prefix": self.prefix,
            "explored": self.explored,
        }
        fh.write(json.dumps(meta, sort_keys=True) + "\n")
        for k, tick in enumerate(self.phi):
            entries = [{"peer": p, "prefix": d, "phi": v} for (p, d), v in sorted(tick.items())]
            fh.write(json.dumps({"kind": "tick", "tick": k, "entries": entries}, sort_keys=True) + "\n")

    @classmethod
    def read(cls, fh: IO[str]) -> "GroundTruth":
        meta = json.loads(fh.readline())
        truth = cls(meta["t0"], meta["mrai_secs"], meta["duration"], meta["prefix"], [], meta.get("explored", {}))
        for line in fh:
            obj = json.loads(line)
            truth.phi.append({(e["peer"], e["prefix"]): e["phi"] for e in obj["entries"]})
        return truth


@dataclass
class Synthetic:
    records: list
    truth: GroundTruth


_WITHDRAW = object()


def _schedule(topo: SynthTopology, spec: ScenarioSpec) -> tuple:
    """Per-peer {tick: path or _WITHDRAW} event tables."""
    events: dict = {}
    explored: dict = {}
    peers = topo.peers
    best = {}
    for p in peers:
        paths = peer_paths(topo, p)
        if not paths:
            continue
        best[p] = paths[0]
        events[p] = {0: paths[0]}
        if spec.kind is ScenarioKind.PATH_EXPLORATION:
            seq = exploration_sequence(paths, spec.failed_edge)
            for i, path in enumerate(seq):
                tick = spec.failure_tick + i
                if tick >= spec.duration:
                    break
                events[p][tick] = _WITHDRAW if path is None else path
            if seq:
                explored[peer_address(p)] = len({len(x) for x in seq if x is not None})
    if spec.kind is ScenarioKind.FLAP and best:
        flapper = min(best, key=lambda p: (len(best[p]), p))
        base = best[flapper]
        prepended = base + (base[-1],)
        for i, tick in enumerate(range(spec.period, spec.duration, spec.period)):
            events[flapper][tick] = prepended if i % 2 == 0 else base
    return events, explored


def generate(
    topo: SynthTopology,
    spec: ScenarioSpec,
    *,
    prefix: str = DEFAULT_PREFIX,
    base_ts: float = DEFAULT_BASE_TS,
    seed: int = 0,
) -> Synthetic:
    topo.validate()
    spec.validate(topo)
    dest = parse_prefix(prefix)
    rng = random.Random(seed)
    events, explored = _schedule(topo, spec)
    attrs = AttributeSet(origin=Origin.IGP)

    records = []
    for tick in range(spec.duration):
        firing = [p for p in sorted(events) if tick in events[p]]
        offsets = sorted(rng.uniform(0, spec.mrai_secs / 2) for _ in firing)
        if tick == 0 and offsets:
            offsets[0] = 0.0
        for p, off in zip(firing, offsets):
            ts = base_ts + tick * spec.mrai_secs + round(off, 3)
            ev = events[p][tick]
            if ev is _WITHDRAW:
                records.append(UpdateRecord(ts, peer_address(p), Kind.WITHDRAW, dest))
            else:
                records.append(UpdateRecord(ts, peer_address(p), Kind.ANNOUNCE, dest, tuple(ev), attrs))

    # counters by direct bookkeeping
    truth = GroundTruth(float(base_ts), spec.mrai_secs, spec.duration, str(dest), [], explored)
    state = {p: None for p in events}  # peer -> [phi, value] or None
    for tick in range(spec.duration):
        row = {}
        for p in sorted(events):
            ev = events[p].get(tick)
            entry = state[p]
            if entry is None:
                if ev is not None and ev is not _WITHDRAW:
                    entry = [0, ev]
            elif ev is not None and ev != entry[1]:
                entry = [entry[0] + 1, ev]
            elif entry[0] > 0:
                entry = [entry[0] - 1, entry[1]]
            if entry is not None:
                row[(peer_address(p), str(dest))] = entry[0]
                if entry[1] is _WITHDRAW and entry[0] == 0:
                    entry = None
            state[p] = entry
        truth.phi.append(row)
    return Synthetic(records, truth)
