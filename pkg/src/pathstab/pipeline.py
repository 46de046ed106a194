"""Tick-by-tick replay of an update trace through Adj_RIBs_In and Loc_RIB.

Every tick the analyzer

* collapses each (peer, prefix) to its end-of-tick route,
* advances one stability counter per Adj_RIB_In entry and one per Loc_RIB
  destination,
* reruns the decision process for prefixes whose candidates changed,
* computes the table delta, the relative-stability aggregates against the
  most stable and the selected route, and the ranking consistency check.

Only routes whose counter is non-zero or that were touched this tick are
visited. Every other route is known to contribute a zero delta and a relative
stability of exactly 1, and is folded in by count. ``detail=True`` visits
every route instead and records per-route values.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional, Union

from .decision import DEFAULT_CRITERIA, DecisionProcess
from .ingest import IngestStats, TraceSource, stream_updates
from .metrics import (
    Decision,
    Equilibrium,
    Reference,
    RelativeStabilityReport,
    TableDelta,
    aggregate_relative,
    check_thresholds,
    classify,
    count_violations,
    differential_stability,
    moments,
    most_stable,
    relative_stability,
    route_delta,
    update_phi,
)
from .model import Prefix, RibSnapshot, RibState, TickClock, UpdateRecord, prefix_key

log = logging.getLogger(__name__)

BOTH_REFERENCES = frozenset(Reference)


class ConfigError(ValueError):
    pass


@dataclass
class AnalysisConfig:
    mrai_secs: int = 30
    alpha: float = 0.01
    beta: float = 0.1
    t0: Optional[float] = None
    references: frozenset = BOTH_REFERENCES
    criteria: tuple = DEFAULT_CRITERIA
    end_tick: Optional[int] = None
    drain: bool = False
    stability_lane: bool = False
    detail: bool = False
    as_printed_delta: bool = False
    stretch_bounds: tuple = (-10, 10)

    def validate(self) -> None:
        try:
            check_thresholds(self.alpha, self.beta)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if int(self.mrai_secs) != self.mrai_secs or self.mrai_secs < 1:
            raise ConfigError("mrai must be an integer >= 1")
        lo, hi = self.stretch_bounds
        if lo > 0 or hi < 0:
            raise ConfigError("stretch bounds must include 0")
        try:
            DecisionProcess(self.criteria)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if self.end_tick is not None and self.end_tick < 0:
            raise ConfigError("end_tick must be >= 0")


@dataclass
class TickDetail:
    """Per-route values of one tick, keyed by (peer id, prefix text)."""

    adj_phi: dict = field(default_factory=dict)
    loc_phi: dict = field(default_factory=dict)
    loc_delta: dict = field(default_factory=dict)
    loc_peer: dict = field(default_factory=dict)
    ref_stable: dict = field(default_factory=dict)
    ref_selected: dict = field(default_factory=dict)
    dphi_stable: dict = field(default_factory=dict)
    dphi_selected: dict = field(default_factory=dict)
    lane_peer: dict = field(default_factory=dict)


@dataclass
class TickReport:
    tick: int
    n_routes: int
    m_routes: int
    rt_delta: TableDelta
    state: Equilibrium
    dphi_stable: Optional[RelativeStabilityReport]
    dphi_selected: Optional[RelativeStabilityReport]
    cumvar_stable: float
    cumvar_selected: float
    added: int
    deleted: int
    changed: int
    unchanged: int
    adj_delta: TableDelta
    violations: int = 0
    lane_delta: Optional[TableDelta] = None
    lane_divergent: Optional[int] = None
    diagnostics: dict = field(default_factory=dict)
    detail: Optional[TickDetail] = None


@dataclass
class StretchHistogram:
    """Route counts per AS-path length difference (selected minus reference)."""

    counts: dict = field(default_factory=dict)
    missing: int = 0

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def cumulative(self) -> list:
        """(diff, percentage of routes with difference <= diff), ascending."""
        total = self.total
        out, run = [], 0
        for diff in sorted(self.counts):
            run += self.counts[diff]
            out.append((diff, 100.0 * run / total))
        return out

    def share_at_least(self, diff: int) -> float:
        total = self.total
        if not total:
            return 0.0
        return 100.0 * sum(c for d, c in self.counts.items() if d >= diff) / total

    def as_dict(self) -> dict:
        return {
            "counts": {str(d): self.counts[d] for d in sorted(self.counts)},
            "cumulative": [[d, p] for d, p in self.cumulative()],
            "missing": self.missing,
        }


def _clip(diff: int, bounds: tuple) -> int:
    lo, hi = bounds
    return max(lo, min(hi, diff))


def stretch_analysis(snapshot: RibSnapshot, phi: Mapping, bounds: tuple = (-10, 10)) -> StretchHistogram:
    """Bucket len(selected path) - len(most stable live path) per destination.

    ``phi`` maps (prefix, peer) to that Adj_RIB_In entry's stability counter.
    A positive difference means switching to the most stable route would
    shorten the path.
    """
    live: dict = {}
    for peer, table in snapshot.adj_in.items():
        for dest, route in table.items():
            if route.path:
                live.setdefault(dest, {})[peer] = route
    hist = StretchHistogram()
    dests = set(live) | set(snapshot.loc)
    for dest in sorted(dests, key=prefix_key):
        selected = snapshot.loc.get(dest)
        routes = live.get(dest)
        if selected is None or not routes:
            hist.missing += 1
            continue
        peer, _ = most_stable({p: phi[(dest, p)] for p in routes})
        diff = _clip(len(selected.path) - len(routes[peer].path), bounds)
        hist.counts[diff] = hist.counts.get(diff, 0) + 1
    return hist


def cumulative_variance(series: Iterable[Optional[float]]) -> list:
    return list(itertools.accumulate((0.0 if v is None else v) for v in series))


def _dest_text(d: Prefix) -> str:
    return str(d)


class _Lane:
    """An extra Loc_RIB whose replacements are vetoed by differential stability."""

    def __init__(self) -> None:
        self.loc: dict = {}
        self.phi: dict = {}
        self.hot: set = set()
        self.divergent: set = set()
        self.divergence_total = 0


class Analyzer:
    """Streaming analysis. Iterate ``run(records)``; ``summary`` fills at the end."""

    def __init__(self, cfg: Optional[AnalysisConfig] = None):
        self.cfg = cfg or AnalysisConfig()
        self.cfg.validate()
        self.process = DecisionProcess(self.cfg.criteria)
        self.rib = RibState()
        self.clock: Optional[TickClock] = None
        self.phi: dict = {}
        self.hot: set = set()
        self.loc_phi: dict = {}
        self.loc_hot: set = set()
        self.refs: dict = {}
        self.order: dict = {}
        self.lane = _Lane() if self.cfg.stability_lane else None
        self.cumvar_stable = 0.0
        self.cumvar_selected = 0.0
        self.ticks = 0
        self.rejected = 0
        self.updates = 0
        self.noop_updates = 0
        self.purged = 0
        self.violations = 0
        self.state_counts = {s.value: 0 for s in Equilibrium}
        self.mu_sum = 0.0
        self.lane_mu_sum = 0.0
        self.summary: Optional[dict] = None
        self.ingest_stats: Optional[IngestStats] = None

    # -- driving ---------------------------------------------------------

    def run(self, records: Iterable[UpdateRecord]) -> Iterator[TickReport]:
        cfg = self.cfg
        current = 0
        batch: list = []
        seen = False
        for r in records:
            if self.clock is None:
                self.clock = TickClock(r.ts if cfg.t0 is None else cfg.t0, int(cfg.mrai_secs))
            if r.ts < self.clock.t0:
                self.rejected += 1
                continue
            k = self.clock.tick_of(r.ts)
            if k < current:
                raise ValueError(f"records out of order: tick {k} after tick {current}")
            seen = True
            while k > current:
                yield self._tick(current, batch)
                batch = []
                current += 1
            batch.append(r)
        if seen:
            yield self._tick(current, batch)
            current += 1
        elif cfg.end_tick is None:
            self._finish()
            return
        if cfg.end_tick is not None:
            while current <= cfg.end_tick:
                yield self._tick(current, [])
                current += 1
        if cfg.drain:
            while self.hot or self.loc_hot or (self.lane and self.lane.hot):
                yield self._tick(current, [])
                current += 1
        self._finish()

    # -- one tick --------------------------------------------------------

    def _tick(self, k: int, records: list) -> TickReport:
        cfg = self.cfg
        rib = self.rib
        full = cfg.detail
        phi = self.phi

        unknown_before = rib.unknown_withdrawals
        start: dict = {}
        for r in records:
            peer = rib.peers.intern(r.peer)
            before = rib.get(peer, r.dest)
            rib.apply_update(r)
            start.setdefault((rib.canonical_dest(r.dest), peer), before)
        self.updates += len(records)

        new_keys, changed_keys, touched = set(), set(), set()
        noop = 0
        for key, before in start.items():
            dest, peer = key
            after = rib.get(peer, dest)
            if before is None:
                if after is None:
                    noop += 1
                    continue
                if after.withdrawn:
                    rib.purge(peer, dest)
                    noop += 1
                    continue
                new_keys.add(key)
            elif after.same_value(before):
                noop += 1
                continue
            else:
                changed_keys.add(key)
            touched.add(dest)
        self.noop_updates += noop

        # Adj_RIB_In counters
        if full:
            stepped = set(phi) | new_keys
        else:
            stepped = self.hot | new_keys | changed_keys
        prev: dict = {}
        for key in stepped:
            p = None if key in new_keys else phi[key]
            prev[key] = p
            v = update_phi(p, key in changed_keys)
            phi[key] = v
            if v:
                self.hot.add(key)
            else:
                self.hot.discard(key)
        m = len(phi)
        adj_vals = [route_delta(prev[key] or 0, phi[key], prev[key] is None, cfg.as_printed_delta) for key in stepped]
        a_mu, a_s2, _ = moments(adj_vals, m - len(adj_vals), 0.0)
        adj_delta = TableDelta(a_mu, a_s2, m)

        # decision process; the full preference order is kept for the
        # consistency check until the destination is touched again
        order = self.order
        old_loc: dict = {}
        for dest in touched:
            ranked = self.process.order(rib.candidates(dest))
            order[dest] = [r.learned_from for r in ranked]
            best = ranked[0] if ranked else None
            old = rib.loc.get(dest)
            if best == old:
                continue
            old_loc[dest] = old
            if best is None:
                del rib.loc[dest]
            else:
                rib.loc[dest] = best

        # Loc_RIB counters
        loc_steps = set(rib.loc) | set(old_loc) if full else self.loc_hot | set(old_loc)
        added = deleted = changed = 0
        loc_vals = []
        detail = TickDetail() if full else None
        for dest in loc_steps:
            old = old_loc[dest] if dest in old_loc else rib.loc.get(dest)
            new = rib.loc.get(dest)
            if new is None:
                deleted += 1
                self.loc_phi.pop(dest, None)
                self.loc_hot.discard(dest)
                continue
            if old is None:
                added += 1
                v = phi[(dest, new.learned_from)]
                delta = 0.0
            else:
                moved = new != old
                changed += moved
                p = self.loc_phi[dest]
                v = update_phi(p, moved)
                delta = route_delta(p, v, False, cfg.as_printed_delta)
            self.loc_phi[dest] = v
            if v:
                self.loc_hot.add(dest)
            else:
                self.loc_hot.discard(dest)
            loc_vals.append(delta)
            if detail is not None:
                detail.loc_delta[_dest_text(dest)] = delta
        n = len(rib.loc)
        unchanged = n - added - changed
        mu, s2, _ = moments(loc_vals, n - len(loc_vals), 0.0)
        rt_delta = TableDelta(mu, s2, n)
        state = classify(mu, cfg.alpha, cfg.beta)

        # relative stability against the most stable / selected route at t
        explicit = set(rib.by_dest) if full else {d for d, _ in stepped} | touched
        n_steady = len(rib.by_dest) - len(explicit)
        refs = self.refs
        current: dict = {}
        numer: dict = {}
        ref_stable: dict = {}
        ref_sel: dict = {}
        for dest in explicit:
            cur = current[dest] = {p: phi[(dest, p)] for p in rib.entries(dest)}
            if new_keys:
                numer[dest] = {p: v for p, v in cur.items() if (dest, p) not in new_keys}
            else:
                numer[dest] = cur
            rs, rsel = refs.get(dest, (0, 0))
            ref_stable[dest] = rs
            ref_sel[dest] = rsel
        dphi_stable = dphi_sel = None
        if Reference.MOST_STABLE in cfg.references:
            dphi_stable = self._relative(numer, ref_stable, Reference.MOST_STABLE, n_steady, detail)
            self.cumvar_stable += dphi_stable.sigma2 or 0.0
        if Reference.BEST_SELECTED in cfg.references:
            dphi_sel = self._relative(numer, ref_sel, Reference.BEST_SELECTED, n_steady, detail)
            self.cumvar_selected += dphi_sel.sigma2 or 0.0

        # ranking / stability consistency
        violations = 0
        for dest in explicit:
            peers = order.get(dest)
            if peers is None:
                cands = rib.candidates(dest)
                peers = order[dest] = [r.learned_from for r in self.process.order(cands)]
            if len(peers) < 2:
                continue
            top = len(peers) - 1
            cur = current[dest]
            violations += count_violations([(top - i, cur[p]) for i, p in enumerate(peers)])
        self.violations += violations

        lane_delta = lane_div = None
        if self.lane is not None:
            lane_delta, lane_div = self._lane_step(touched, full, detail)

        # references for the next tick, taken before purging
        self.refs = {}
        for dest in explicit:
            cur = current[dest]
            sel = rib.loc.get(dest)
            self.refs[dest] = (
                min(cur.values()) if cur else 0,
                cur[sel.learned_from] if sel is not None else None,
            )

        if detail is not None:
            for (dest, peer), v in phi.items():
                detail.adj_phi[(peer.id, _dest_text(dest))] = v
            for dest, v in self.loc_phi.items():
                detail.loc_phi[_dest_text(dest)] = v
                detail.loc_peer[_dest_text(dest)] = rib.loc[dest].learned_from.id
            for dest in explicit:
                detail.ref_stable[_dest_text(dest)] = ref_stable[dest]
                detail.ref_selected[_dest_text(dest)] = ref_sel[dest]
            if self.lane is not None:
                for dest, r in self.lane.loc.items():
                    detail.lane_peer[_dest_text(dest)] = r.learned_from.id

        purged = 0
        for key in stepped:
            if phi.get(key) == 0:
                dest, peer = key
                if rib.get(peer, dest).withdrawn:
                    rib.purge(peer, dest)
                    del phi[key]
                    purged += 1
                    if dest not in rib.by_dest:
                        self.order.pop(dest, None)
        self.purged += purged

        self.ticks += 1
        self.state_counts[state.value] += 1
        self.mu_sum += mu
        return TickReport(
            tick=k,
            n_routes=n,
            m_routes=m,
            rt_delta=rt_delta,
            state=state,
            dphi_stable=dphi_stable,
            dphi_selected=dphi_sel,
            cumvar_stable=self.cumvar_stable,
            cumvar_selected=self.cumvar_selected,
            added=added,
            deleted=deleted,
            changed=changed,
            unchanged=unchanged,
            adj_delta=adj_delta,
            violations=violations,
            lane_delta=lane_delta,
            lane_divergent=lane_div,
            diagnostics={
                "updates": len(records),
                "noop_updates": noop,
                "unknown_withdrawals": rib.unknown_withdrawals - unknown_before,
                "purged": purged,
            },
            detail=detail,
        )

    def _relative(self, numer, refs, reference, n_steady, detail) -> RelativeStabilityReport:
        rep = aggregate_relative(numer, refs, reference, n_steady=n_steady)
        if detail is not None:
            out = detail.dphi_stable if reference is Reference.MOST_STABLE else detail.dphi_selected
            for dest, peers in numer.items():
                ref = refs.get(dest)
                if ref is None:
                    continue
                for peer, v in peers.items():
                    out[(peer.id, _dest_text(dest))] = relative_stability(v, ref)
        return rep

    def _lane_step(self, touched, full, detail) -> tuple:
        lane, rib, phi = self.lane, self.rib, self.phi
        evaluate = set(rib.by_dest) | set(lane.loc) if full else touched | lane.divergent
        old_lane: dict = {}
        for dest in evaluate:
            std = rib.loc.get(dest)
            cur = lane.loc.get(dest)
            cur_entry = rib.get(cur.learned_from, dest) if cur is not None else None
            if cur_entry is None or cur_entry.withdrawn or std is None:
                choice = std
            elif std.learned_from == cur.learned_from:
                choice = std
            else:
                ds = differential_stability(phi[(dest, cur.learned_from)], phi[(dest, std.learned_from)], dest)
                choice = std if ds.decision is Decision.REPLACE else cur_entry
            if choice != cur:
                old_lane[dest] = cur
                if choice is None:
                    del lane.loc[dest]
                else:
                    lane.loc[dest] = choice
            if choice is not None and choice != std:
                lane.divergent.add(dest)
            else:
                lane.divergent.discard(dest)

        steps = set(lane.loc) | set(old_lane) if full else lane.hot | set(old_lane)
        vals = []
        for dest in steps:
            old = old_lane[dest] if dest in old_lane else lane.loc.get(dest)
            new = lane.loc.get(dest)
            if new is None:
                lane.phi.pop(dest, None)
                lane.hot.discard(dest)
                continue
            if old is None:
                v, delta = phi[(dest, new.learned_from)], 0.0
            else:
                p = lane.phi[dest]
                v = update_phi(p, new != old)
                delta = route_delta(p, v, False, self.cfg.as_printed_delta)
            lane.phi[dest] = v
            if v:
                lane.hot.add(dest)
            else:
                lane.hot.discard(dest)
            vals.append(delta)
        n = len(lane.loc)
        mu, s2, _ = moments(vals, n - len(vals), 0.0)
        lane.divergence_total += len(lane.divergent)
        self.lane_mu_sum += mu
        return TableDelta(mu, s2, n), len(lane.divergent)

    # -- results ---------------------------------------------------------

    def phi_snapshot(self) -> dict:
        return dict(self.phi)

    def stretch(self) -> StretchHistogram:
        return stretch_analysis(self.rib.snapshot(), self.phi, self.cfg.stretch_bounds)

    def lane_stretch(self) -> StretchHistogram:
        """len(stability-lane path) - len(standard path) per destination."""
        hist = StretchHistogram()
        if self.lane is None:
            return hist
        for dest in sorted(set(self.rib.loc) | set(self.lane.loc), key=prefix_key):
            std, alt = self.rib.loc.get(dest), self.lane.loc.get(dest)
            if std is None or alt is None:
                hist.missing += 1
                continue
            diff = _clip(len(alt.path) - len(std.path), self.cfg.stretch_bounds)
            hist.counts[diff] = hist.counts.get(diff, 0) + 1
        return hist

    def _finish(self) -> None:
        cfg = self.cfg
        summary = {
            "ticks": self.ticks,
            "t0": self.clock.t0 if self.clock else cfg.t0,
            "mrai_secs": int(cfg.mrai_secs),
            "alpha": cfg.alpha,
            "beta": cfg.beta,
            "criteria": list(self.process.criteria),
            "med_comparison": "same first AS hop" if "med" in self.process.criteria else "always",
            "delta_mode": "as-printed" if cfg.as_printed_delta else "repaired",
            "n_routes": self.rib.n,
            "m_routes": self.rib.m,
            "peers": len(self.rib.peers),
            "updates": self.updates,
            "noop_updates": self.noop_updates,
            "unknown_withdrawals": self.rib.unknown_withdrawals,
            "rejected_before_t0": self.rejected,
            "purged": self.purged,
            "consistency_violations": self.violations,
            "states": dict(self.state_counts),
            "mean_rt_delta": self.mu_sum / self.ticks if self.ticks else 0.0,
            "cumvar_stable": self.cumvar_stable,
            "cumvar_selected": self.cumvar_selected,
            "stretch": self.stretch().as_dict(),
        }
        if self.lane is not None:
            summary["stability_lane"] = {
                "divergence": self.lane.divergence_total,
                "mean_rt_delta": self.lane_mu_sum / self.ticks if self.ticks else 0.0,
                "stretch_cost": self.lane_stretch().as_dict(),
            }
        if self.ingest_stats is not None:
            summary["ingest"] = self.ingest_stats.as_dict()
        self.summary = summary


@dataclass
class AnalysisResult:
    reports: list
    summary: dict
    analyzer: Analyzer


Source = Union[TraceSource, Iterable[UpdateRecord]]


def _records(src: Source, analyzer: Analyzer) -> Iterable[UpdateRecord]:
    if isinstance(src, TraceSource):
        records, stats = stream_updates(src)
        analyzer.ingest_stats = stats
        return records
    return src


def iter_analysis(src: Source, cfg: Optional[AnalysisConfig] = None) -> tuple:
    """(analyzer, report iterator) for streaming use."""
    analyzer = Analyzer(cfg)
    return analyzer, analyzer.run(_records(src, analyzer))


def run_analysis(src: Source, cfg: Optional[AnalysisConfig] = None) -> AnalysisResult:
    analyzer, reports = iter_analysis(src, cfg)
    out = list(reports)
    return AnalysisResult(out, analyzer.summary, analyzer)


@dataclass
class ReplaySummary:
    divergence: int
    standard_mu: list
    stability_mu: list
    standard_sigma2: list
    stability_sigma2: list
    stretch_cost: StretchHistogram

    @property
    def standard_mean(self) -> float:
        return sum(self.standard_mu) / len(self.standard_mu) if self.standard_mu else 0.0

    @property
    def stability_mean(self) -> float:
        return sum(self.stability_mu) / len(self.stability_mu) if self.stability_mu else 0.0


def stability_selection_replay(src: Source, cfg: Optional[AnalysisConfig] = None) -> ReplaySummary:
    """Replay with a second Loc_RIB where only more stable routes may replace."""
    cfg = cfg or AnalysisConfig()
    cfg = AnalysisConfig(**{**cfg.__dict__, "stability_lane": True})
    result = run_analysis(src, cfg)
    reps = result.reports
    return ReplaySummary(
        divergence=result.analyzer.lane.divergence_total,
        standard_mu=[r.rt_delta.mu for r in reps],
        stability_mu=[r.lane_delta.mu for r in reps],
        standard_sigma2=[r.rt_delta.sigma2 for r in reps],
        stability_sigma2=[r.lane_delta.sigma2 for r in reps],
        stretch_cost=result.analyzer.lane_stretch(),
    )
