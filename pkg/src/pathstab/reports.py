"""Report stream encodings and plot-data extraction.

``ticks.csv`` column order is frozen; new columns are only ever appended.
"""

from __future__ import annotations

import csv
import json
from typing import IO, Iterable, Optional

from .pipeline import TickReport, cumulative_variance

CSV_COLUMNS = (
    "tick",
    "n_routes",
    "rt_delta_mu",
    "rt_delta_sigma2",
    "class",
    "dphi_stable_mu",
    "dphi_stable_max",
    "dphi_stable_sigma2",
    "dphi_sel_mu",
    "dphi_sel_sigma2",
    "cumvar_stable",
    "cumvar_sel",
    "added",
    "deleted",
    "changed",
    "unchanged",
    # appended
    "m_routes",
    "adj_delta_mu",
    "adj_delta_sigma2",
    "dphi_sel_max",
    "consistency_violations",
    "lane_rt_delta_mu",
    "lane_divergent",
)

FIGURES = (4, 5, 6, 7, 8)


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_fields(r: TickReport) -> dict:
    s, sel = r.dphi_stable, r.dphi_selected
    return {
        "tick": r.tick,
        "n_routes": r.n_routes,
        "rt_delta_mu": r.rt_delta.mu,
        "rt_delta_sigma2": r.rt_delta.sigma2,
        "class": r.state.value,
        "dphi_stable_mu": s.mu if s else None,
        "dphi_stable_max": s.max if s else None,
        "dphi_stable_sigma2": s.sigma2 if s else None,
        "dphi_sel_mu": sel.mu if sel else None,
        "dphi_sel_sigma2": sel.sigma2 if sel else None,
        "cumvar_stable": r.cumvar_stable if s else None,
        "cumvar_sel": r.cumvar_selected if sel else None,
        "added": r.added,
        "deleted": r.deleted,
        "changed": r.changed,
        "unchanged": r.unchanged,
        "m_routes": r.m_routes,
        "adj_delta_mu": r.adj_delta.mu,
        "adj_delta_sigma2": r.adj_delta.sigma2,
        "dphi_sel_max": sel.max if sel else None,
        "consistency_violations": r.violations,
        "lane_rt_delta_mu": r.lane_delta.mu if r.lane_delta else None,
        "lane_divergent": r.lane_divergent,
    }


class CsvReportWriter:
    def __init__(self, fh: IO[str]):
        self._w = csv.writer(fh, lineterminator="\n")
        self._w.writerow(CSV_COLUMNS)

    def write(self, r: TickReport) -> None:
        f = report_fields(r)
        self._w.writerow([_num(f[c]) for c in CSV_COLUMNS])


def to_json(r: TickReport) -> str:
    obj = report_fields(r)
    obj["diagnostics"] = r.diagnostics
    return json.dumps(obj, separators=(",", ":"))


class NdjsonReportWriter:
    def __init__(self, fh: IO[str]):
        self._fh = fh

    def write(self, r: TickReport) -> None:
        self._fh.write(to_json(r) + "\n")


def read_ticks_csv(fh: IO[str]) -> list:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or list(reader.fieldnames[: len(CSV_COLUMNS[:16])]) != list(CSV_COLUMNS[:16]):
        raise ValueError("not a ticks.csv file: unexpected header")
    rows = []
    for row in reader:
        rows.append(row)
    return rows


def _f(text: str) -> Optional[float]:
    return float(text) if text not in ("", None) else None


def figure_rows(fig: int, rows: Optional[list] = None, summary: Optional[dict] = None) -> tuple:
    """(header, rows) of plot data for one figure.

    4: tick, ΔΦ(most stable) mean and max; 5: cumulative variance of the
    most-stable series; 6: ΔΦ(selected) mean and max; 7: cumulative variance
    of the selected series; 8: stretch buckets with cumulative percentage.
    """
    if fig not in FIGURES:
        raise ValueError(f"unknown figure {fig}; expected one of {FIGURES}")
    if fig == 8:
        if summary is None:
            raise ValueError("figure 8 needs summary.json")
        stretch = summary["stretch"]
        cum = dict((int(d), p) for d, p in stretch["cumulative"])
        out = [(int(d), c, cum[int(d)]) for d, c in stretch["counts"].items()]
        out.sort()
        return ("as_path_len_diff", "routes", "cum_pct"), out
    try:
        ticks = [int(r["tick"]) for r in rows]
        if fig in (4, 6):
            mu, top = ("dphi_stable_mu", "dphi_stable_max") if fig == 4 else ("dphi_sel_mu", "dphi_sel_max")
            out = [(t, _f(r[mu]), _f(r.get(top, ""))) for t, r in zip(ticks, rows)]
            return ("tick", "mean", "max"), out
        col = "dphi_stable_sigma2" if fig == 5 else "dphi_sel_sigma2"
        cum = cumulative_variance(_f(r[col]) for r in rows)
        return ("tick", "cum_variance"), list(zip(ticks, cum))
    except (KeyError, ValueError) as exc:
        raise ValueError(f"malformed ticks data: {exc}") from None


def write_figure(header: tuple, rows: Iterable[tuple], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_num(v) for v in row])
