"""Stability counters and the table-level metrics built on them."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence


def update_phi(prev: Optional[int], changed: bool) -> int:
    """Advance one route's stability counter by one tick.

    ``prev`` is None for a route created during this tick.
    """
    if prev is None:
        return 0
    if changed:
        return prev + 1
    return prev - 1 if prev > 0 else 0


class AsPrintedDivisionError(ZeroDivisionError):
    pass


def route_delta(phi_t: int, phi_t1: int, is_new: bool = False, as_printed: bool = False) -> float:
    """Per-route change in stability between two ticks, in [0, 1].

    When the counter does not grow, the ratio is phi_t1 / phi_t, so a route
    decaying towards zero drives its delta to zero. ``as_printed`` uses the
    inverse ratio instead, which exceeds 1 and divides by zero on 1 -> 0.
    """
    if is_new:
        return 0.0
    if phi_t == 0 and phi_t1 == 0:
        return 0.0
    if phi_t1 > phi_t:
        return (phi_t + 1) / (phi_t1 + 1)
    if as_printed:
        if phi_t1 == 0:
            raise AsPrintedDivisionError(f"phi {phi_t} -> {phi_t1}: division by zero")
        return phi_t / phi_t1
    return phi_t1 / phi_t


@dataclass(frozen=True)
class TableDelta:
    mu: float
    sigma2: float
    n: int


def moments(values: Sequence[float], n_const: int = 0, const: float = 0.0) -> tuple:
    """(mean, population variance, max) of ``values`` plus ``n_const`` copies of ``const``.

    Returns (0.0, 0.0, None) for an empty population.
    """
    n = len(values) + n_const
    if n == 0:
        return 0.0, 0.0, None
    mu = math.fsum([*values, n_const * const]) / n
    ss = math.fsum([*((x - mu) ** 2 for x in values), n_const * (const - mu) ** 2])
    top = max(values) if values else const
    if n_const and const > top:
        top = const
    return mu, ss / n, top


def table_delta(deltas: Sequence[float]) -> TableDelta:
    mu, sigma2, _ = moments(list(deltas))
    return TableDelta(mu, sigma2, len(deltas))


def most_stable(per_peer_phi: Mapping) -> Optional[tuple]:
    """(peer, phi) with the smallest phi; ties go to the lowest peer ordinal.

    Keys must order by peer ordinal (``PeerId`` does). None if empty.
    """
    if not per_peer_phi:
        return None
    peer = min(per_peer_phi, key=lambda p: (per_peer_phi[p], p))
    return peer, per_peer_phi[peer]


def relative_stability(phi_j_t1: int, phi_ref_t: int) -> float:
    return (phi_j_t1 + 1) / (phi_ref_t + 1)


class Reference(enum.Enum):
    MOST_STABLE = "stable"
    BEST_SELECTED = "selected"


@dataclass
class RelativeStabilityReport:
    reference: Reference
    per_dest: dict
    mu: Optional[float]
    sigma2: Optional[float]
    max: Optional[float]
    n: int
    skipped: int = 0


def aggregate_relative(
    per_dest_per_peer: Mapping,
    references: Mapping,
    reference: Reference,
    *,
    n_steady: int = 0,
) -> RelativeStabilityReport:
    """Average relative stability per destination, then over destinations.

    ``per_dest_per_peer[dest]`` holds each peer's phi at t+1 and
    ``references[dest]`` the reference phi at t (None when there is none, in
    which case the destination is skipped). ``n_steady`` counts destinations
    left out of the mapping because every value is known to be exactly 1.
    """
    per_dest = {}
    skipped = 0
    for dest, peers in per_dest_per_peer.items():
        ref = references.get(dest)
        if ref is None or not peers:
            skipped += 1
            continue
        vals = [relative_stability(phi, ref) for phi in peers.values()]
        per_dest[dest] = math.fsum(vals) / len(vals)
    mu, sigma2, top = moments(list(per_dest.values()), n_steady, 1.0)
    n = len(per_dest) + n_steady
    if n == 0:
        return RelativeStabilityReport(reference, per_dest, None, None, None, 0, skipped)
    return RelativeStabilityReport(reference, per_dest, mu, sigma2, top, n, skipped)


class Decision(enum.Enum):
    REPLACE = "replace"
    KEEP = "keep"


@dataclass(frozen=True)
class DifferentialStability:
    delta_phi: int
    decision: Decision
    dest: object = None


def differential_stability(phi_current: int, phi_candidate: int, dest=None) -> DifferentialStability:
    d = phi_current - phi_candidate
    return DifferentialStability(d, Decision.REPLACE if d > 0 else Decision.KEEP, dest)


class Equilibrium(enum.Enum):
    STABLE = "stable"
    MARGINALLY_STABLE = "marginal"
    UNSTABLE = "unstable"


def check_thresholds(alpha: float, beta: float) -> None:
    if not 0 < alpha:
        raise ValueError("alpha must be > 0")
    if not alpha < beta:
        raise ValueError("alpha must be < beta")


def classify(mu: float, alpha: float = 0.01, beta: float = 0.1) -> Equilibrium:
    check_thresholds(alpha, beta)
    if mu <= alpha:
        return Equilibrium.STABLE
    if mu <= beta:
        return Equilibrium.MARGINALLY_STABLE
    return Equilibrium.UNSTABLE


@dataclass(frozen=True)
class Violation:
    condition: int
    lam1: int
    phi1: int
    lam2: int
    phi2: int
    dest: object = None
    tick: Optional[int] = None


def check_consistency(ranked_pairs: Iterable[tuple], dest=None, tick=None) -> list:
    """Pairs (λ1, φ1, λ2, φ2) that break ranking/stability consistency.

    Condition 1: λ1 < λ2 requires φ1 - φ2 >= 0.
    Condition 2: λ1 == λ2 requires φ1 == φ2.
    """
    out = []
    for lam1, phi1, lam2, phi2 in ranked_pairs:
        if lam1 < lam2 and phi1 - phi2 < 0:
            out.append(Violation(1, lam1, phi1, lam2, phi2, dest, tick))
        elif lam1 == lam2 and phi1 != phi2:
            out.append(Violation(2, lam1, phi1, lam2, phi2, dest, tick))
    return out


def candidate_pairs(lam_phi: Sequence[tuple]) -> list:
    """All ordered pairs of distinct candidates as (λ1, φ1, λ2, φ2)."""
    return [
        (l1, p1, l2, p2)
        for i, (l1, p1) in enumerate(lam_phi)
        for j, (l2, p2) in enumerate(lam_phi)
        if i != j
    ]


def count_violations(lam_phi: Sequence[tuple]) -> int:
    """Same count as ``len(check_consistency(candidate_pairs(lam_phi)))``."""
    n = 0
    for i, (l1, p1) in enumerate(lam_phi):
        for l2, p2 in lam_phi[i + 1 :]:
            if p1 == p2:
                continue
            if l1 == l2:
                n += 2
            elif (l1 < l2) == (p1 < p2):
                n += 1
    return n
