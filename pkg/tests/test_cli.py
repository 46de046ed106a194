import csv
import json

import pytest

from pathstab.cli import main
from pathstab.ingest import format_line
from pathstab.reports import CSV_COLUMNS

from conftest import T0, ann, random_trace, wd

P = "203.0.113.0/24"


@pytest.fixture
def trace(tmp_path):
    recs = [ann(T0, "a", P, [1, 2]), ann(T0, "b", P, [3, 4, 2]),
            ann(T0 + 30, "a", P, [1, 1, 2]), ann(T0 + 60, "a", P, [1, 2]), wd(T0 + 90, "b", P)]
    path = tmp_path / "trace.psv"
    path.write_text("".join(format_line(r) + "\n" for r in recs))
    return path


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_analyze_writes_ticks_and_summary(tmp_path, trace):
    out = tmp_path / "out"
    assert main(["analyze", "--trace", str(trace), "--out", str(out)]) == 0
    rows = _rows(out / "ticks.csv")
    assert list(rows[0])[: len(CSV_COLUMNS)] == list(CSV_COLUMNS)
    assert list(rows[0])[:16] == [
        "tick", "n_routes", "rt_delta_mu", "rt_delta_sigma2", "class", "dphi_stable_mu", "dphi_stable_max",
        "dphi_stable_sigma2", "dphi_sel_mu", "dphi_sel_sigma2", "cumvar_stable", "cumvar_sel",
        "added", "deleted", "changed", "unchanged",
    ]
    assert [r["tick"] for r in rows] == ["0", "1", "2", "3"]
    assert float(rows[1]["rt_delta_mu"]) == 0.5 and rows[1]["class"] == "unstable"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["ticks"] == 4 and summary["ingest"]["records_ok"] == 5
    assert summary["med_comparison"] == "same first AS hop"
    assert not list(out.glob(".*"))


def test_analyze_ndjson_and_reference(tmp_path, trace):
    out = tmp_path / "o"
    assert main(["analyze", "--trace", str(trace), "--out", str(out), "--ndjson", "--reference", "stable"]) == 0
    lines = (out / "ticks.ndjson").read_text().splitlines()
    assert len(lines) == 4 and json.loads(lines[0])["tick"] == 0
    assert _rows(out / "ticks.csv")[1]["dphi_sel_mu"] == ""


def test_analyze_missing_trace(tmp_path, capsys):
    assert main(["analyze", "--trace", str(tmp_path / "nope.psv"), "--out", str(tmp_path)]) == 2
    assert "cannot read" in capsys.readouterr().err


def test_analyze_bad_thresholds(tmp_path, trace, capsys):
    code = main(["analyze", "--trace", str(trace), "--alpha", "0.5", "--beta", "0.1", "--out", str(tmp_path)])
    assert code == 1
    assert "alpha must be < beta" in capsys.readouterr().err


def test_unknown_flag_is_config_error(capsys):
    assert main(["analyze", "--bogus"]) == 1
    assert "error" in capsys.readouterr().err


def test_strict_mode_malformed_line(tmp_path, trace, capsys):
    trace.write_text(trace.read_text() + "garbage\n")
    out = tmp_path / "o"
    assert main(["analyze", "--trace", str(trace), "--out", str(out), "--strict"]) == 2
    assert "line 6" in capsys.readouterr().err
    assert not (out / "ticks.csv").exists()
    assert main(["analyze", "--trace", str(trace), "--out", str(out)]) == 0
    assert json.loads((out / "summary.json").read_text())["ingest"]["records_skipped"] == 1


def test_config_file_and_flag_override(tmp_path, trace):
    cfg = tmp_path / "run.conf"
    cfg.write_text(f"# test run\ntrace = {trace}\nmrai = 60\nstability-lane = true\nalpha=0.2\nbeta=0.3\n")
    out = tmp_path / "o"
    assert main(["analyze", "--config", str(cfg), "--alpha", "0.05", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["mrai_secs"] == 60 and summary["alpha"] == 0.05 and summary["beta"] == 0.3
    assert "stability_lane" in summary


def test_config_file_unknown_key(tmp_path):
    cfg = tmp_path / "run.conf"
    cfg.write_text("colour = blue\n")
    assert main(["analyze", "--config", str(cfg)]) == 1


def test_report_figures(tmp_path, trace, capsys):
    out = tmp_path / "o"
    main(["analyze", "--trace", str(trace), "--out", str(out)])
    capsys.readouterr()
    assert main(["report", "--ticks", str(out / "ticks.csv"), "--fig", "4"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "tick,mean,max" and len(lines) == 5
    assert main(["report", "--ticks", str(out / "ticks.csv"), "--fig", "5", "--out", str(tmp_path / "f5.csv")]) == 0
    f5 = _rows(tmp_path / "f5.csv")
    sig = [float(r["dphi_stable_sigma2"] or 0) for r in _rows(out / "ticks.csv")]
    assert [float(r["cum_variance"]) for r in f5] == pytest.approx(
        [sum(sig[: i + 1]) for i in range(len(sig))])
    assert main(["report", "--ticks", str(out / "ticks.csv"), "--fig", "8"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "as_path_len_diff,routes,cum_pct"


def test_report_bad_input(tmp_path):
    bad = tmp_path / "ticks.csv"
    bad.write_text("a,b\n1,2\n")
    assert main(["report", "--ticks", str(bad), "--fig", "4"]) == 2
    assert main(["report", "--ticks", str(tmp_path / "missing.csv"), "--fig", "6"]) == 2
    assert main(["report", "--ticks", str(bad), "--fig", "9"]) == 1


def test_simulate_then_analyze(tmp_path):
    sim = tmp_path / "sim"
    assert main(["simulate", "--scenario", "flap", "--topology", "line", "--ticks", "6", "--out", str(sim)]) == 0
    truth = (sim / "truth.ndjson").read_text().splitlines()
    assert len(truth) == 7
    out = tmp_path / "o"
    assert main(["analyze", "--trace", str(sim / "trace.psv"), "--out", str(out)]) == 0
    mus = [float(r["rt_delta_mu"]) for r in _rows(out / "ticks.csv")]
    assert mus == pytest.approx([0, 1 / 2, 2 / 3, 3 / 4, 4 / 5, 5 / 6])


def test_simulate_is_reproducible(tmp_path):
    for d in ("a", "b"):
        main(["simulate", "--scenario", "explore", "--topology", "mesh", "--stub-origin",
              "--fail-edge", "4-5", "--fail-tick", "1", "--ticks", "8", "--seed", "4", "--out", str(tmp_path / d)])
    assert (tmp_path / "a" / "trace.psv").read_bytes() == (tmp_path / "b" / "trace.psv").read_bytes()
    assert (tmp_path / "a" / "truth.ndjson").read_bytes() == (tmp_path / "b" / "truth.ndjson").read_bytes()


def test_simulate_invalid(tmp_path):
    assert main(["simulate", "--scenario", "explore", "--fail-edge", "7-8", "--out", str(tmp_path)]) == 1


def test_convert_round_trip(tmp_path, rng):
    recs = random_trace(rng, 10)
    src = tmp_path / "t.psv"
    src.write_text("".join(format_line(r) + "\n" for r in recs))
    assert main(["convert", "--in", str(src), "--to", "ndjson", "--out", str(tmp_path / "t.ndjson")]) == 0
    assert main(["convert", "--in", str(tmp_path / "t.ndjson"), "--from", "ndjson", "--to", "psv",
                 "--out", str(tmp_path / "back.psv")]) == 0
    assert (tmp_path / "back.psv").read_text() == src.read_text()
    assert main(["convert", "--in", str(tmp_path / "none.psv")]) == 2


def test_module_entry_point():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "pathstab", "analyze", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "tick, n_routes, rt_delta_mu" in res.stdout
