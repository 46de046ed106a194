"""Local stability metrics for path-vector (BGP-style) routing traces."""

from .decision import DecisionProcess, rank, select_best
from .ingest import TraceSource, parse_line, stream_updates
from .metrics import classify, route_delta, table_delta, update_phi
from .model import RibState, Route, TickClock, UpdateRecord
from .pipeline import AnalysisConfig, Analyzer, iter_analysis, run_analysis, stability_selection_replay

__all__ = [
    "AnalysisConfig",
    "Analyzer",
    "DecisionProcess",
    "RibState",
    "Route",
    "TickClock",
    "TraceSource",
    "UpdateRecord",
    "classify",
    "iter_analysis",
    "parse_line",
    "rank",
    "route_delta",
    "run_analysis",
    "select_best",
    "stability_selection_replay",
    "stream_updates",
    "table_delta",
    "update_phi",
]

__version__ = "0.1.0"
