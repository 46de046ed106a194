"""Update-trace readers.

Canonical pipe format, one record per line::

    ts|peer|kind|prefix|as_path|origin|med|local_pref

``kind`` is ``A`` or ``W``; ``as_path`` is space-separated AS numbers and is
empty for withdrawals. Trailing empty fields may be omitted. The NDJSON form
uses the same field names, one object per line.
"""

from __future__ import annotations

import enum
import heapq
import io
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Callable, Iterable, Iterator, Optional, Union

from .model import (
    AttributeSet,
    Kind,
    Origin,
    UpdateRecord,
    check_as_path,
    parse_prefix,
)

log = logging.getLogger(__name__)

FIELDS = ("ts", "peer", "kind", "prefix", "as_path", "origin", "med", "local_pref")


class TraceFormatError(ValueError):
    """A malformed trace line. ``column`` is the 1-based character offset."""

    def __init__(self, field: str, column: int, message: str, lineno: Optional[int] = None):
        self.field = field
        self.column = column
        self.lineno = lineno
        where = f"line {lineno}, " if lineno is not None else ""
        super().__init__(f"{where}field {field!r} (column {column}): {message}")


class TraceFormat(enum.Enum):
    PIPE = "psv"
    JSON = "ndjson"


class Strictness(enum.Enum):
    STRICT = "strict"
    LENIENT = "lenient"


def _uint(text: str) -> int:
    v = int(text)
    if v < 0:
        raise ValueError("negative value")
    return v


def _build(values: dict, columns: dict) -> UpdateRecord:
    def fail(name, exc):
        raise TraceFormatError(name, columns.get(name, 1), str(exc)) from None

    try:
        ts = float(values["ts"])
        if ts != ts or ts in (float("inf"), float("-inf")):
            raise ValueError("not a finite number")
    except (TypeError, ValueError) as exc:
        fail("ts", exc)
    peer = values["peer"]
    if not isinstance(peer, str) or not peer or "|" in peer:
        fail("peer", "empty or invalid peer id")
    try:
        kind = Kind(values["kind"])
    except ValueError:
        fail("kind", f"expected A or W, got {values['kind']!r}")
    try:
        dest = parse_prefix(values["prefix"])
    except (TypeError, ValueError) as exc:
        fail("prefix", exc)

    raw_path = values["as_path"]
    try:
        hops = raw_path.split() if isinstance(raw_path, str) else list(raw_path or ())
        path = check_as_path(hops)
    except (TypeError, ValueError) as exc:
        fail("as_path", exc)

    origin = values["origin"]
    try:
        origin = Origin[origin] if origin not in ("", None) else None
    except KeyError:
        fail("origin", f"unknown origin {origin!r}")
    nums = {}
    for name in ("med", "local_pref"):
        raw = values[name]
        try:
            nums[name] = _uint(raw) if raw not in ("", None) else None
        except (TypeError, ValueError) as exc:
            fail(name, exc)

    extra = {}
    if values.get("communities") is not None:
        extra["communities"] = tuple(int(c) for c in values["communities"])
    if values.get("next_hop") is not None:
        extra["next_hop"] = str(values["next_hop"])
    attrs = AttributeSet(origin=origin, med=nums["med"], local_pref=nums["local_pref"], **extra)

    if kind is Kind.WITHDRAW:
        if path:
            fail("as_path", "withdrawal carries a non-empty AS path")
        if not attrs.empty:
            fail("origin", "withdrawal carries attributes")
    elif not path:
        fail("as_path", "announcement with empty AS path")
    return UpdateRecord(ts, peer, kind, dest, path, attrs)


def parse_line(line: str) -> UpdateRecord:
    line = line.rstrip("\r\n")
    parts = line.split("|")
    if len(parts) > len(FIELDS):
        col = sum(len(p) + 1 for p in parts[: len(FIELDS)]) + 1
        raise TraceFormatError("local_pref", col, f"expected {len(FIELDS)} fields, got {len(parts)}")
    if len(parts) < 4:
        name = FIELDS[len(parts)] if parts != [""] else "ts"
        raise TraceFormatError(name, len(line) + 1, "missing field")
    parts += [""] * (len(FIELDS) - len(parts))
    columns, col = {}, 1
    for name, text in zip(FIELDS, parts):
        columns[name] = col
        col += len(text) + 1
    return _build(dict(zip(FIELDS, parts)), columns)


def _fmt_ts(ts: float) -> str:
    return str(int(ts)) if float(ts).is_integer() else repr(float(ts))


def _opt(v) -> str:
    return "" if v is None else str(v)


def format_line(r: UpdateRecord) -> str:
    a = r.attrs
    return "|".join(
        (
            _fmt_ts(r.ts),
            r.peer,
            r.kind.value,
            str(r.dest),
            " ".join(map(str, r.path)),
            a.origin.name if a.origin is not None else "",
            _opt(a.med),
            _opt(a.local_pref),
        )
    )


def parse_json_line(line: str) -> UpdateRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise TraceFormatError("ts", exc.colno, f"invalid JSON: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise TraceFormatError("ts", 1, "expected a JSON object")
    values = {name: obj.get(name, "") for name in FIELDS}
    values["communities"] = obj.get("communities")
    values["next_hop"] = obj.get("next_hop")
    for name in ("ts", "peer", "kind", "prefix"):
        if name not in obj:
            raise TraceFormatError(name, 1, "missing field")
    if isinstance(values["ts"], (int, float)):
        values["ts"] = repr(values["ts"])
    for name in ("med", "local_pref"):
        if isinstance(values[name], int):
            values[name] = str(values[name])
    return _build(values, {})


def format_json_line(r: UpdateRecord) -> str:
    a = r.attrs
    obj = {
        "ts": int(r.ts) if float(r.ts).is_integer() else r.ts,
        "peer": r.peer,
        "kind": r.kind.value,
        "prefix": str(r.dest),
        "as_path": " ".join(map(str, r.path)),
        "origin": a.origin.name if a.origin is not None else "",
        "med": a.med,
        "local_pref": a.local_pref,
    }
    if a.communities is not None:
        obj["communities"] = list(a.communities)
    if a.next_hop is not None:
        obj["next_hop"] = a.next_hop
    return json.dumps(obj, separators=(",", ":"))


PARSERS: dict[TraceFormat, Callable[[str], UpdateRecord]] = {
    TraceFormat.PIPE: parse_line,
    TraceFormat.JSON: parse_json_line,
}
FORMATTERS: dict[TraceFormat, Callable[[UpdateRecord], str]] = {
    TraceFormat.PIPE: format_line,
    TraceFormat.JSON: format_json_line,
}


@dataclass
class TraceSource:
    """Where records come from. Other archive formats plug in via ``PARSERS``."""

    path: Union[str, Path, None] = None
    stream: Optional[IO[str]] = None
    format: TraceFormat = TraceFormat.PIPE
    strictness: Strictness = Strictness.LENIENT
    reorder_window: float = 60.0

    def open(self) -> IO[str]:
        if self.stream is not None:
            return self.stream
        if self.path is None:
            raise ValueError("TraceSource needs a path or a stream")
        return open(self.path, encoding="utf-8", newline="\n")

    @classmethod
    def from_text(cls, text: str, **kw) -> "TraceSource":
        return cls(stream=io.StringIO(text), **kw)


@dataclass
class IngestStats:
    records_ok: int = 0
    records_skipped: int = 0
    out_of_order_count: int = 0
    late_dropped: int = 0
    first_ts: Optional[float] = None
    last_ts: Optional[float] = None
    errors: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "records_ok": self.records_ok,
            "records_skipped": self.records_skipped,
            "out_of_order_count": self.out_of_order_count,
            "late_dropped": self.late_dropped,
            "first_ts": self.first_ts,
            "last_ts": self.last_ts,
        }


class LateRecordError(ValueError):
    pass


def _parsed(src: TraceSource, stats: IngestStats) -> Iterator[UpdateRecord]:
    parse = PARSERS[src.format]
    fh = src.open()
    try:
        for lineno, line in enumerate(fh, 1):
            if not line.strip() or line.startswith("#"):
                continue
            try:
                yield parse(line)
            except TraceFormatError as exc:
                exc.lineno = lineno
                exc.args = (f"line {lineno}: {exc.args[0]}",)
                if src.strictness is Strictness.STRICT:
                    raise
                stats.records_skipped += 1
                if len(stats.errors) < 20:
                    stats.errors.append(str(exc))
                log.debug("skipping malformed line %d: %s", lineno, exc)
    finally:
        if src.stream is None:
            fh.close()


def reorder(
    records: Iterable[UpdateRecord],
    window: float,
    stats: IngestStats,
    strict: bool = False,
) -> Iterator[UpdateRecord]:
    """Emit ``records`` sorted by (ts, arrival order) using a bounded buffer.

    A record more than ``window`` seconds behind the newest one seen is
    dropped (or raises in strict mode).
    """
    heap: list = []
    newest = None
    for seq, r in enumerate(records):
        if newest is not None and r.ts < newest:
            stats.out_of_order_count += 1
            if r.ts < newest - window:
                if strict:
                    raise LateRecordError(f"record at ts={r.ts} is more than {window}s behind ts={newest}")
                stats.late_dropped += 1
                stats.records_skipped += 1
                continue
        newest = r.ts if newest is None else max(newest, r.ts)
        heapq.heappush(heap, (r.ts, seq, r))
        while heap and heap[0][0] < newest - window:
            yield heapq.heappop(heap)[2]
    while heap:
        yield heapq.heappop(heap)[2]


def stream_updates(src: TraceSource) -> tuple[Iterator[UpdateRecord], IngestStats]:
    """Ordered record iterator plus stats that fill in as it is consumed."""
    stats = IngestStats()
    strict = src.strictness is Strictness.STRICT

    def gen():
        for r in reorder(_parsed(src, stats), src.reorder_window, stats, strict):
            stats.records_ok += 1
            if stats.first_ts is None:
                stats.first_ts = r.ts
            stats.last_ts = r.ts
            yield r

    return gen(), stats


def write_records(records: Iterable[UpdateRecord], fh: IO[str], fmt: TraceFormat = TraceFormat.PIPE) -> int:
    emit = FORMATTERS[fmt]
    n = 0
    for r in records:
        fh.write(emit(r) + "\n")
        n += 1
    return n
