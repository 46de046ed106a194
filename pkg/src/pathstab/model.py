"""Routes, RIB tables and the MRAI tick clock.

A withdrawal is stored as a route value with an empty AS path and an empty
attribute set, not as a deletion. Withdrawn Adj_RIB_In entries stay in the
table until their stability counter decays to zero; the pipeline purges them.
"""

from __future__ import annotations

import enum
import functools
import ipaddress
import math
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Mapping, Optional, Union

Prefix = Union[ipaddress.IPv4Network, ipaddress.IPv6Network]
AsPath = tuple  # tuple[int, ...]; empty means withdrawn

MAX_ASN = 2**32 - 1


class _HashOnce:
    # ipaddress networks recompute their hash from the address on every
    # call; prefixes are dictionary keys on every hot path, so keep it.
    def __init__(self, address, strict: bool = True):
        super().__init__(address, strict)
        self._hash = super().__hash__()

    def __hash__(self) -> int:
        return self._hash

    def __repr__(self) -> str:
        return f"ip_network({str(self)!r})"


class IPv4Prefix(_HashOnce, ipaddress.IPv4Network):
    pass


class IPv6Prefix(_HashOnce, ipaddress.IPv6Network):
    pass


@functools.lru_cache(maxsize=1 << 16)
def parse_prefix(text: str) -> Prefix:
    """Parse ``a.b.c.d/len`` or an IPv6 prefix; host bits must be zero."""
    net = ipaddress.ip_network(text.strip(), strict=True)
    return (IPv4Prefix if net.version == 4 else IPv6Prefix)(net)


def prefix_key(p: Prefix) -> tuple:
    # v4 and v6 networks do not compare with each other
    return (p.version, p.network_address.packed, p.prefixlen)


def check_as_path(hops) -> AsPath:
    path = tuple(int(h) for h in hops)
    for h in path:
        if not 0 <= h <= MAX_ASN:
            raise ValueError(f"AS number out of range: {h}")
    return path


class Origin(enum.IntEnum):
    IGP = 0
    EGP = 1
    INCOMPLETE = 2


@dataclass(frozen=True)
class AttributeSet:
    origin: Optional[Origin] = None
    med: Optional[int] = None
    local_pref: Optional[int] = None
    communities: Optional[tuple] = None
    next_hop: Optional[str] = None

    @property
    def empty(self) -> bool:
        return self == EMPTY_ATTRS


EMPTY_ATTRS = AttributeSet()


@dataclass(frozen=True, order=True)
class PeerId:
    """A BGP peer. ``ordinal`` is the order of first appearance in a run."""

    ordinal: int
    id: str = field(compare=False)

    def __hash__(self) -> int:
        return self.ordinal

    def __str__(self) -> str:
        return self.id


class PeerRegistry:
    def __init__(self) -> None:
        self._by_id: dict[str, PeerId] = {}

    def intern(self, peer: str) -> PeerId:
        pid = self._by_id.get(peer)
        if pid is None:
            pid = PeerId(len(self._by_id), peer)
            self._by_id[peer] = pid
        return pid

    def get(self, peer: str) -> Optional[PeerId]:
        return self._by_id.get(peer)

    def __len__(self) -> int:
        return len(self._by_id)

    def __iter__(self):
        return iter(self._by_id.values())


@dataclass(frozen=True)
class Route:
    dest: Prefix
    path: AsPath
    attrs: AttributeSet
    learned_from: PeerId

    @property
    def withdrawn(self) -> bool:
        return not self.path

    def same_value(self, other: Optional["Route"]) -> bool:
        """True if path and every attribute match (peer is not compared)."""
        return other is not None and self.path == other.path and self.attrs == other.attrs


class Kind(enum.Enum):
    ANNOUNCE = "A"
    WITHDRAW = "W"


@dataclass(frozen=True)
class UpdateRecord:
    ts: float
    peer: str
    kind: Kind
    dest: Prefix
    path: AsPath = ()
    attrs: AttributeSet = EMPTY_ATTRS

    def __post_init__(self) -> None:
        if self.kind is Kind.WITHDRAW:
            if self.path or not self.attrs.empty:
                raise ValueError("withdrawal must carry an empty path and attribute set")
        elif not self.path:
            raise ValueError("announcement needs a non-empty AS path")


@dataclass(frozen=True)
class TickClock:
    t0: float
    mrai_secs: int = 30

    def __post_init__(self) -> None:
        if self.mrai_secs < 1:
            raise ValueError("mrai_secs must be >= 1")

    def tick_of(self, ts: float) -> int:
        if ts < self.t0:
            raise ValueError(f"timestamp {ts} precedes t0={self.t0}")
        return math.floor((ts - self.t0) / self.mrai_secs)


@dataclass(frozen=True)
class RibSnapshot:
    adj_in: Mapping[PeerId, Mapping[Prefix, Route]]
    loc: Mapping[Prefix, Route]

    @property
    def n(self) -> int:
        return len(self.loc)

    @property
    def m(self) -> int:
        return sum(len(t) for t in self.adj_in.values())


class RibState:
    """Per-peer Adj_RIB_In tables plus the Loc_RIB.

    Single writer. ``loc`` is filled by whoever runs the decision process;
    this class only stores it.
    """

    def __init__(self) -> None:
        self.peers = PeerRegistry()
        self.adj_in: dict[PeerId, dict[Prefix, Route]] = {}
        self.by_dest: dict[Prefix, dict[PeerId, Route]] = {}
        self.loc: dict[Prefix, Route] = {}
        self.unknown_withdrawals = 0
        self._dests: dict[Prefix, Prefix] = {}

    def intern_dest(self, dest: Prefix) -> Prefix:
        """The table's own object for ``dest``; identical keys make lookups cheap."""
        return self._dests.setdefault(dest, dest)

    def canonical_dest(self, dest: Prefix) -> Prefix:
        return self._dests.get(dest, dest)

    @property
    def n(self) -> int:
        return len(self.loc)

    @property
    def m(self) -> int:
        return sum(len(t) for t in self.adj_in.values())

    def get(self, peer: PeerId, dest: Prefix) -> Optional[Route]:
        table = self.adj_in.get(peer)
        return None if table is None else table.get(dest)

    def entries(self, dest: Prefix) -> Mapping[PeerId, Route]:
        return self.by_dest.get(dest, {})

    def candidates(self, dest: Prefix) -> list[Route]:
        """Live (non-withdrawn) routes for ``dest``, in peer-ordinal order."""
        routes = [r for r in self.by_dest.get(dest, {}).values() if r.path]
        routes.sort(key=lambda r: r.learned_from.ordinal)
        return routes

    def apply_update(self, u: UpdateRecord) -> bool:
        """Store ``u`` in its peer's Adj_RIB_In; return whether the entry changed."""
        peer = self.peers.intern(u.peer)
        old = self.get(peer, u.dest)
        if u.kind is Kind.WITHDRAW:
            if old is None:
                self.unknown_withdrawals += 1
                return False
            new = Route(old.dest, (), EMPTY_ATTRS, peer)
        else:
            new = Route(self.intern_dest(u.dest), u.path, u.attrs, peer)
        if new.same_value(old):
            return False
        self.adj_in.setdefault(peer, {})[new.dest] = new
        self.by_dest.setdefault(new.dest, {})[peer] = new
        return True

    def purge(self, peer: PeerId, dest: Prefix) -> None:
        del self.adj_in[peer][dest]
        if not self.adj_in[peer]:
            del self.adj_in[peer]
        del self.by_dest[dest][peer]
        if not self.by_dest[dest]:
            del self.by_dest[dest]
            self._dests.pop(dest, None)

    def snapshot(self) -> RibSnapshot:
        adj = {p: MappingProxyType(dict(t)) for p, t in self.adj_in.items()}
        return RibSnapshot(MappingProxyType(adj), MappingProxyType(dict(self.loc)))
