import math
import random

import pytest

from pathstab.model import AttributeSet, Kind, Origin, UpdateRecord, parse_prefix

T0 = 1_243_804_800


def ann(ts, peer, prefix, path, origin=Origin.IGP, med=None, local_pref=None):
    attrs = AttributeSet(origin=origin, med=med, local_pref=local_pref)
    return UpdateRecord(float(ts), peer, Kind.ANNOUNCE, parse_prefix(prefix), tuple(path), attrs)


def wd(ts, peer, prefix):
    return UpdateRecord(float(ts), peer, Kind.WITHDRAW, parse_prefix(prefix))


def random_trace(rng, ticks, peers=3, dests=3, p_update=0.3, mrai=30, p_withdraw=0.25, t0=T0):
    """Random announce/withdraw records, sorted, first one at exactly t0."""
    prefixes = [f"10.{i // 256}.{i % 256}.0/24" for i in range(dests)]
    names = [f"192.0.2.{i + 1}" for i in range(peers)]
    out = [ann(t0, names[0], prefixes[0], [64500, 1])]
    for k in range(ticks):
        for peer in names:
            for pfx in prefixes:
                if rng.random() >= p_update:
                    continue
                ts = t0 + k * mrai + rng.uniform(0, mrai - 1)
                if rng.random() < p_withdraw:
                    out.append(wd(ts, peer, pfx))
                else:
                    length = rng.randint(1, 4)
                    path = [64500 + names.index(peer)] + [rng.randint(1, 3) for _ in range(length)]
                    out.append(ann(ts, peer, pfx, path, med=rng.choice([None, 0, 5]),
                                   local_pref=rng.choice([None, 100, 200])))
    out.sort(key=lambda r: r.ts)
    return out


def brute_phi(changes):
    """Counter after a change sequence as a suffix maximum of the +1/-1 walk.

    Stepping +1 on change and -1 otherwise, floored at zero, is a reflected
    random walk; its value is the largest suffix sum (or 0).
    """
    steps = [1 if c else -1 for c in changes]
    best = 0
    for i in range(len(steps)):
        best = max(best, sum(steps[i:]))
    return best


def naive_adj_phi(records, mrai=30, end_tick=None):
    """Per-tick {(peer, prefix): phi} by direct replay, independent of the pipeline.

    Last record per (peer, prefix) in a tick wins; a withdrawn entry is kept
    until its counter is back at zero.
    """
    if not records:
        return []
    t0 = records[0].ts
    by_tick = {}
    for r in records:
        by_tick.setdefault(math.floor((r.ts - t0) / mrai), []).append(r)
    last = max(by_tick)
    if end_tick is not None:
        last = max(last, end_tick)
    table = {}  # key -> [phi, value]
    out = []
    for k in range(last + 1):
        final = {}
        for r in by_tick.get(k, []):
            value = (r.path, r.attrs) if r.kind is Kind.ANNOUNCE else None
            final[(r.peer, str(r.dest))] = value
        row = {}
        for key in set(table) | set(final):
            entry = table.get(key)
            if entry is None:
                if final.get(key) is None:
                    continue
                entry = [0, final[key]]
            elif key in final and final[key] != entry[1]:
                entry = [entry[0] + 1, final[key]]
            else:
                entry = [max(entry[0] - 1, 0), entry[1]]
            row[key] = entry[0]
            if entry[1] is None and entry[0] == 0:
                table.pop(key, None)
            else:
                table[key] = entry
        out.append(row)
    return out


@pytest.fixture
def rng():
    return random.Random(20260419)


# -- acceptance reporting -------------------------------------------------

_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): exit criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        _ACCEPTANCE.append((marker.args[0], marker.args[1], rep.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number, title, outcome in sorted(_ACCEPTANCE):
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"[{verdict}] {number:>2}. {title}")
