"""Zebra-style best path selection over Adj_RIB_In candidates.

Selection is sequential elimination: each criterion keeps only the best
routes under it and passes them on. The default chain is

1. highest LOCAL_PREF (absent counts as 100)
2. shortest AS path
3. lowest ORIGIN (IGP < EGP < INCOMPLETE; absent counts as INCOMPLETE)
4. lowest MED, compared only among routes with the same first AS hop
   (absent counts as 0)
5. lowest peer ordinal

Step 4 is not transitive across neighbor ASes, which is the usual BGP MED
anomaly: dropping a losing route can change the winner when two routes share
a first hop. Without a same-hop MED conflict the chain is a total order.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

from .model import Origin, Prefix, Route

DEFAULT_LOCAL_PREF = 100


def _key_filter(key: Callable[[Route], object]) -> Callable[[list], list]:
    def keep(routes: list) -> list:
        best = min(key(r) for r in routes)
        return [r for r in routes if key(r) == best]

    return keep


def _local_pref(r: Route) -> int:
    lp = r.attrs.local_pref
    return -(DEFAULT_LOCAL_PREF if lp is None else lp)


def _origin(r: Route) -> int:
    o = r.attrs.origin
    return int(Origin.INCOMPLETE if o is None else o)


def _med_filter(routes: list) -> list:
    best: dict = {}
    for r in routes:
        med = _med(r)
        hop = r.path[0]
        if hop not in best or med < best[hop]:
            best[hop] = med
    return [r for r in routes if _med(r) == best[r.path[0]]]


def _med(r: Route) -> int:
    return r.attrs.med or 0


def _always_med_filter(routes: list) -> list:
    return _key_filter(_med)(routes)


# per-route sort keys for the criteria that are plain "keep the minimum" steps
KEYS: dict[str, Callable[[Route], object]] = {
    "local_pref": _local_pref,
    "as_path_len": lambda r: len(r.path),
    "origin": _origin,
    "med_always": _med,
    "peer_ordinal": lambda r: r.learned_from.ordinal,
}


def med_conflict(routes: Iterable[Route]) -> bool:
    """True if two routes share a first AS hop but differ in MED."""
    seen: dict = {}
    for r in routes:
        if seen.setdefault(r.path[0], _med(r)) != _med(r):
            return True
    return False


CRITERIA: dict[str, Callable[[list], list]] = {
    "local_pref": _key_filter(_local_pref),
    "as_path_len": _key_filter(lambda r: len(r.path)),
    "origin": _key_filter(_origin),
    "med": _med_filter,
    "med_always": _always_med_filter,
    "peer_ordinal": _key_filter(lambda r: r.learned_from.ordinal),
}

DEFAULT_CRITERIA = ("local_pref", "as_path_len", "origin", "med", "peer_ordinal")


def _default_key(r: Route) -> tuple:
    # the default chain's sort key, inlined; same as the KEYS composition
    a = r.attrs
    lp = DEFAULT_LOCAL_PREF if a.local_pref is None else a.local_pref
    origin = Origin.INCOMPLETE if a.origin is None else a.origin
    return (-lp, len(r.path), int(origin), r.learned_from.ordinal)


@dataclass(frozen=True)
class CandidateSet:
    dest: Prefix
    routes: tuple

    def __post_init__(self) -> None:
        peers = [r.learned_from for r in self.routes]
        if len(set(peers)) != len(peers):
            raise ValueError("at most one route per peer")
        if any(r.dest != self.dest for r in self.routes):
            raise ValueError("all candidates must share the destination")
        if any(r.withdrawn for r in self.routes):
            raise ValueError("withdrawn routes are not candidates")


class DecisionProcess:
    """A configurable criteria chain. ``peer_ordinal`` is always the last step."""

    def __init__(self, criteria: Sequence[str] = DEFAULT_CRITERIA):
        unknown = [c for c in criteria if c not in CRITERIA]
        if unknown:
            raise ValueError(f"unknown decision criteria: {', '.join(unknown)}")
        names = [c for c in criteria if c != "peer_ordinal"] + ["peer_ordinal"]
        self.criteria = tuple(names)
        self._steps = [CRITERIA[c] for c in names]
        self._keys = [KEYS[c] for c in names if c != "med"]
        self._same_hop_med = "med" in names
        if self.criteria == DEFAULT_CRITERIA:
            self._key = _default_key

    def _key(self, r: Route) -> tuple:
        return tuple(k(r) for k in self._keys)

    def _lexicographic(self, routes: list) -> bool:
        # Without a same-hop MED conflict the "med" step never removes
        # anything, and the other steps form a plain lexicographic order.
        return not (self._same_hop_med and med_conflict(routes))

    def _eliminate(self, routes: list) -> Route:
        for step in self._steps:
            if len(routes) == 1:
                break
            routes = step(routes)
        return routes[0]

    def select(self, routes: Iterable[Route]) -> Optional[Route]:
        routes = list(routes)
        if not routes:
            return None
        if len(routes) == 1:
            return routes[0]
        if self._lexicographic(routes):
            return min(routes, key=self._key)
        return self._eliminate(routes)

    def order(self, routes: Iterable[Route]) -> list:
        """Routes from most to least preferred, by repeated selection."""
        rest = list(routes)
        if self._lexicographic(rest):
            return sorted(rest, key=self._key)
        out = []
        while rest:
            best = self.select(rest)
            out.append(best)
            rest.remove(best)
        return out

    def rank(self, routes: Iterable[Route]) -> dict:
        """λ per route: dense non-negative integers, larger means preferred."""
        ordered = self.order(routes)
        top = len(ordered) - 1
        return {r: top - i for i, r in enumerate(ordered)}


DEFAULT_PROCESS = DecisionProcess()


def select_best(c: CandidateSet, process: DecisionProcess = DEFAULT_PROCESS) -> Optional[Route]:
    """Best route of ``c``, or None when there is no candidate."""
    return process.select(c.routes)


def rank(c: CandidateSet, process: DecisionProcess = DEFAULT_PROCESS) -> dict:
    if not c.routes:
        raise ValueError("cannot rank an empty candidate set")
    return process.rank(c.routes)
