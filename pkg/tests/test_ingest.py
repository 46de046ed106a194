import ipaddress
import random

import pytest
from hypothesis import given, strategies as st

from pathstab.ingest import (
    IngestStats,
    LateRecordError,
    Strictness,
    TraceFormat,
    TraceFormatError,
    TraceSource,
    format_json_line,
    format_line,
    parse_json_line,
    parse_line,
    reorder,
    stream_updates,
)
from pathstab.model import AttributeSet, Kind, Origin, UpdateRecord

from conftest import T0, ann


def test_parse_announce():
    r = parse_line("1243804800|10.0.0.1|A|203.0.113.0/24|65001 65002|IGP|0|100")
    assert r.kind is Kind.ANNOUNCE
    assert r.path == (65001, 65002)
    assert r.ts == 1243804800
    assert r.peer == "10.0.0.1"
    assert r.attrs == AttributeSet(origin=Origin.IGP, med=0, local_pref=100)


def test_parse_withdraw_short_form():
    r = parse_line("1243804801|10.0.0.1|W|203.0.113.0/24|||")
    assert r.kind is Kind.WITHDRAW
    assert r.path == () and r.attrs.empty


def test_parse_error_names_field():
    with pytest.raises(TraceFormatError) as err:
        parse_line("xxx|10.0.0.1|A|203.0.113.0/24|1|IGP||")
    assert err.value.field == "ts" and err.value.column == 1


@pytest.mark.parametrize(
    "line, field",
    [
        ("1|p|X|10.0.0.0/8|1|||", "kind"),
        ("1|p|A|10.0.0.1/8|1|||", "prefix"),
        ("1|p|A|10.0.0.0/8|1 x|||", "as_path"),
        ("1|p|A|10.0.0.0/8|4294967296|||", "as_path"),
        ("1|p|A|10.0.0.0/8||||", "as_path"),
        ("1|p|W|10.0.0.0/8|1|||", "as_path"),
        ("1|p|A|10.0.0.0/8|1|FOO||", "origin"),
        ("1|p|A|10.0.0.0/8|1|IGP|-1|", "med"),
        ("1|p|A|10.0.0.0/8|1|IGP|0|x", "local_pref"),
        ("1||A|10.0.0.0/8|1|||", "peer"),
        ("1|p|A", "prefix"),
    ],
)
def test_parse_errors(line, field):
    with pytest.raises(TraceFormatError) as err:
        parse_line(line)
    assert err.value.field == field


def test_error_column_points_at_field():
    line = "1|p|A|10.0.0.0/8|1|IGP|0|x"
    with pytest.raises(TraceFormatError) as err:
        parse_line(line)
    assert line[err.value.column - 1 :] == "x"


records = st.builds(
    lambda ts, peer, kind, net, path, origin, med, lp: (
        UpdateRecord(ts, peer, Kind.WITHDRAW, net)
        if kind == "W"
        else UpdateRecord(ts, peer, Kind.ANNOUNCE, net, tuple(path), AttributeSet(origin, med, lp))
    ),
    st.one_of(st.integers(0, 2**33).map(float), st.floats(0, 2e9, allow_nan=False)),
    st.from_regex(r"[0-9a-f.:]{1,20}", fullmatch=True),
    st.sampled_from("AW"),
    st.one_of(
        st.builds(lambda a, n: ipaddress.ip_network((a, n), strict=False),
                  st.integers(0, 2**32 - 1), st.integers(0, 32)),
        st.builds(lambda a, n: ipaddress.ip_network((a, n), strict=False),
                  st.integers(0, 2**128 - 1), st.integers(0, 128)),
    ),
    st.lists(st.integers(0, 2**32 - 1), min_size=1, max_size=8),
    st.one_of(st.none(), st.sampled_from(list(Origin))),
    st.one_of(st.none(), st.integers(0, 2**32)),
    st.one_of(st.none(), st.integers(0, 2**32)),
)


@given(records)
def test_pipe_round_trip(r):
    assert parse_line(format_line(r)) == r


@given(records)
def test_json_round_trip(r):
    assert parse_json_line(format_json_line(r)) == r


def test_json_extra_attributes():
    r = parse_json_line('{"ts":1,"peer":"p","kind":"A","prefix":"10.0.0.0/8","as_path":"1 2",'
                        '"origin":"EGP","med":5,"communities":[65000],"next_hop":"10.0.0.1"}')
    assert r.attrs.communities == (65000,) and r.attrs.next_hop == "10.0.0.1"
    assert parse_json_line(format_json_line(r)) == r


def _text(records):
    return "".join(format_line(r) + "\n" for r in records)


def test_empty_source():
    it, stats = stream_updates(TraceSource.from_text(""))
    assert list(it) == []
    assert stats.records_ok == 0 and stats.records_skipped == 0


def test_swapped_records_are_sorted():
    a = ann(T0 + 1, "p", "10.0.0.0/8", [1])
    b = ann(T0, "p", "10.0.0.0/8", [2])
    it, stats = stream_updates(TraceSource.from_text(_text([a, b])))
    assert list(it) == [b, a]
    assert stats.out_of_order_count == 1
    assert (stats.first_ts, stats.last_ts) == (T0, T0 + 1)


def test_lenient_skips_and_counts():
    text = "garbage\n" + format_line(ann(T0, "p", "10.0.0.0/8", [1])) + "\n\n# comment\n1|p|Q|10.0.0.0/8|||\n"
    it, stats = stream_updates(TraceSource.from_text(text))
    assert len(list(it)) == 1
    assert stats.records_ok == 1 and stats.records_skipped == 2


def test_strict_aborts_with_line_number():
    text = format_line(ann(T0, "p", "10.0.0.0/8", [1])) + "\nbad|line\n"
    it, _ = stream_updates(TraceSource.from_text(text, strictness=Strictness.STRICT))
    with pytest.raises(TraceFormatError) as err:
        list(it)
    assert err.value.lineno == 2


def test_late_record_beyond_window():
    recs = [ann(T0, "p", "10.0.0.0/8", [1]), ann(T0 + 500, "p", "10.0.0.0/8", [2]),
            ann(T0 + 10, "p", "10.0.0.0/8", [3])]
    it, stats = stream_updates(TraceSource.from_text(_text(recs)))
    assert [r.path for r in it] == [(1,), (2,)]
    assert stats.late_dropped == 1
    assert stats.records_ok + stats.records_skipped == 3
    it, _ = stream_updates(TraceSource.from_text(_text(recs), strictness=Strictness.STRICT))
    with pytest.raises(LateRecordError):
        list(it)


def test_shuffled_within_window_matches_full_sort():
    rng = random.Random(7)
    recs = []
    for i in range(10_000):
        ts = T0 + i * 0.05 + rng.uniform(-25, 25)
        recs.append(ann(round(ts, 3), f"p{i % 5}", "10.0.0.0/8", [i % 97 + 1]))
    oracle = sorted(recs, key=lambda r: r.ts)  # stable: ties keep input order
    stats = IngestStats()
    out = list(reorder(iter(recs), 60.0, stats))
    assert out == oracle
    assert stats.late_dropped == 0


def test_ties_keep_input_order():
    recs = [ann(T0, "p", "10.0.0.0/8", [i]) for i in range(1, 6)]
    out = list(reorder(iter(recs), 60.0, IngestStats()))
    assert [r.path for r in out] == [(i,) for i in range(1, 6)]


def test_ndjson_source(tmp_path):
    recs = [ann(T0, "p", "10.0.0.0/8", [1]), ann(T0 + 1.5, "q", "10.0.0.0/8", [2])]
    path = tmp_path / "t.ndjson"
    path.write_text("".join(format_json_line(r) + "\n" for r in recs))
    it, stats = stream_updates(TraceSource(path=path, format=TraceFormat.JSON))
    assert list(it) == recs
    assert stats.records_ok == 2
