import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from irsbreath.cli import main
from irsbreath.scenario_io import read_grid, read_table


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def rows(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


@pytest.fixture
def short_pattern(tmp_path):
    p = tmp_path / "short.json"
    p.write_text(json.dumps({"segments": [{"kind": "regular", "duration": 60.0,
                                           "rate": 0.25, "depth": 0.02}]}))
    return p


# --- entry points ------------------------------------------------------------

def test_module_entry_point_help():
    r = subprocess.run([sys.executable, "-m", "irsbreath", "--help"], capture_output=True, text=True)
    assert r.returncode == 0
    for cmd in ("phase-pattern", "optimize", "convergence", "track", "replay", "impairments-demo"):
        assert cmd in r.stdout


def test_bad_flag_is_usage_error():
    with pytest.raises(SystemExit) as e:
        main(["optimize", "--weighting", "cubic"])
    assert e.value.code == 2


def test_missing_scenario_exits_2_with_path(capsys, tmp_path):
    missing = tmp_path / "nope.json"
    code, _, err = run(capsys, "optimize", "--scenario", missing, "--out", tmp_path / "o")
    assert code == 2 and str(missing) in err


def test_invalid_scenario_exits_2(capsys, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text('{"irs_geometry": {"n_rows": 2, "n_cols": 2}, "antenna_distance": -1}')
    code, _, err = run(capsys, "phase-pattern", "--scenario", bad, "--out", tmp_path / "o")
    assert code == 2 and "antenna_distance" in err


# --- phase-pattern -----------------------------------------------------------

def test_phase_pattern_outputs_and_symmetry(capsys, tmp_path):
    out = tmp_path / "pp"
    code, stdout, _ = run(capsys, "phase-pattern", "--out", out, "--no-plot")
    assert code == 0
    assert "mirror symmetric: yes" in stdout
    pat = read_grid(out / "phase_pattern.csv")
    bits = read_grid(out / "binary_projection.csv")
    assert pat.shape == bits.shape
    np.testing.assert_allclose(pat, pat[:, ::-1], atol=1e-9)
    assert set(np.unique(bits)) <= {0.0, 1.0}
    m = json.loads((out / "manifest.json").read_text())
    assert m["command"] == "phase-pattern"


def test_phase_pattern_plots(capsys, tmp_path):
    out = tmp_path / "pp"
    assert run(capsys, "phase-pattern", "--out", out)[0] == 0
    for name in ("phase_pattern.png", "binary_projection.png"):
        assert (out / name).stat().st_size > 0


def test_single_element_surface(capsys, tmp_path):
    s = tmp_path / "one.json"
    s.write_text('{"irs_geometry": {"n_rows": 1, "n_cols": 1}, "antenna_distance": 0.5}')
    code, stdout, _ = run(capsys, "phase-pattern", "--scenario", s, "--out", tmp_path / "o",
                          "--no-plot")
    assert code == 0 and "1x1" in stdout
    assert read_grid(tmp_path / "o" / "phase_pattern.csv").shape == (1, 1)


def test_phase_pattern_byte_identical(capsys, tmp_path):
    for d in ("a", "b"):
        run(capsys, "phase-pattern", "--out", tmp_path / d, "--no-plot")
    for f in ("phase_pattern.csv", "binary_projection.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


# --- optimize ----------------------------------------------------------------

def test_optimize_outputs(capsys, tmp_path):
    out = tmp_path / "opt"
    code, stdout, _ = run(capsys, "optimize", "--budget", 300, "--out", out, "--no-plot")
    assert code == 0 and "best SI" in stdout
    tr = rows(out / "trace.csv")
    assert len(tr) == 300
    cm = [float(r["cum_min"]) for r in tr]
    assert all(b <= a for a, b in zip(cm, cm[1:]))
    assert read_grid(out / "heatmap.csv").shape == (16, 16)
    best = (out / "best_state.txt").read_text().split()
    assert len(best) == 16 and all(len(r) == 16 for r in best)
    m = json.loads((out / "manifest.json").read_text())
    assert m["seeds"]["greedy"] == 0


def test_optimize_seed_determinism(capsys, tmp_path):
    for d in ("a", "b"):
        run(capsys, "optimize", "--budget", 200, "--seed", 4, "--out", tmp_path / d, "--no-plot")
    for f in ("trace.csv", "heatmap.csv", "best_state.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


# --- convergence -------------------------------------------------------------

def test_convergence_minimal_budget(capsys, tmp_path):
    out = tmp_path / "c"
    code, stdout, _ = run(capsys, "convergence", "--runs", 1, "--budget", 101, "--out", out,
                          "--no-plot")
    assert code == 0 and "median iterations to threshold" in stdout
    r = rows(out / "convergence.csv")
    assert {x["method"] for x in r} == {"linear", "uniform", "random"}
    assert sum(x["method"] == "linear" for x in r) == 101


def test_convergence_budget_below_buffer_exits_2(capsys, tmp_path):
    code, _, err = run(capsys, "convergence", "--runs", 1, "--budget", 50, "--out", tmp_path)
    assert code == 2 and "initialization" in err


@pytest.mark.slow
def test_convergence_threads_identical(capsys, tmp_path, monkeypatch):
    args = ("convergence", "--runs", 2, "--budget", 200, "--no-plot", "--out")
    monkeypatch.setenv("IRS_SIM_THREADS", "1")
    run(capsys, *args, tmp_path / "one")
    monkeypatch.setenv("IRS_SIM_THREADS", "2")
    run(capsys, *args, tmp_path / "two")
    for f in ("convergence.csv", "heatmap.csv"):
        assert (tmp_path / "one" / f).read_bytes() == (tmp_path / "two" / f).read_bytes()


# --- track and replay --------------------------------------------------------

def test_track_all_off_writes_outputs(capsys, tmp_path, short_pattern):
    out = tmp_path / "t"
    code, stdout, _ = run(capsys, "track", "--pattern", short_pattern, "--state", "all-off",
                          "--packet-rate", 100, "--out", out, "--no-plot")
    assert code == 0 and stdout.startswith("breathing ")
    tr = rows(out / "breath_trace.csv")
    assert list(tr[0]) == ["time_s", "phase_deg_raw", "phase_deg_filtered", "ground_truth_norm"]
    gt = np.array([float(r["ground_truth_norm"]) for r in tr])
    assert gt.min() >= 0 and gt.max() <= 1
    det = rows(out / "detection.csv")
    assert len(det) == 1
    assert (out / "state.txt").read_text().count("1") == 0


def test_track_state_from_file(capsys, tmp_path, short_pattern):
    st = tmp_path / "state.txt"
    st.write_text("\n".join(["1" * 16] * 16) + "\n")
    out = tmp_path / "t"
    code, _, _ = run(capsys, "track", "--pattern", short_pattern, "--state", f"file:{st}",
                     "--packet-rate", 100, "--out", out, "--no-plot")
    assert code == 0
    assert (out / "state.txt").read_text() == st.read_text()


def test_track_bad_subcarrier_exits_2(capsys, tmp_path, short_pattern):
    code, _, _ = run(capsys, "track", "--pattern", short_pattern, "--state", "all-off",
                     "--packet-rate", 100, "--subcarrier", 99, "--out", tmp_path, "--no-plot")
    assert code == 2


def test_track_empty_pattern_exits_2(capsys, tmp_path):
    p = tmp_path / "empty.json"
    p.write_text("")
    code, _, err = run(capsys, "track", "--pattern", p, "--state", "all-off", "--out", tmp_path,
                       "--no-plot")
    assert code == 2 and "empty" in err


def test_replay_matches_track(capsys, tmp_path, short_pattern):
    stream = tmp_path / "stream.csv"
    code, tracked, _ = run(capsys, "track", "--pattern", short_pattern, "--state", "all-on",
                           "--packet-rate", 100, "--save-stream", stream, "--out", tmp_path / "t",
                           "--no-plot")
    assert code == 0 and stream.exists()
    code, replayed, _ = run(capsys, "replay", stream, "--out", tmp_path / "r", "--no-plot")
    assert code == 0
    assert replayed == tracked
    assert ((tmp_path / "t" / "detection.csv").read_bytes()
            == (tmp_path / "r" / "detection.csv").read_bytes())
    a = read_table(tmp_path / "t" / "breath_trace.csv")[1]
    b = read_table(tmp_path / "r" / "breath_trace.csv")[1]
    assert [r[:3] for r in a] == [r[:3] for r in b]


def test_replay_with_ground_truth(capsys, tmp_path, short_pattern):
    stream = tmp_path / "stream.csv"
    run(capsys, "track", "--pattern", short_pattern, "--state", "all-off", "--packet-rate", 100,
        "--save-stream", stream, "--out", tmp_path / "t", "--no-plot")
    gt = tmp_path / "gt.csv"
    t = np.arange(6000) / 100
    gt.write_text("time_s,displacement\n" + "".join(
        f"{float(a)!r},{float(b)!r}\n" for a, b in zip(t, 0.01 * (1 - np.cos(2 * np.pi * 0.25 * t)))))
    code, _, _ = run(capsys, "replay", stream, "--ground-truth", gt, "--out", tmp_path / "r",
                     "--no-plot")
    assert code == 0
    g = [r[3] for r in read_table(tmp_path / "r" / "breath_trace.csv")[1]]
    assert all(x != "" for x in g)


def test_replay_one_record_exits_2(capsys, tmp_path):
    s = tmp_path / "one.csv"
    s.write_text("0,0.0,-40.0," + ",".join(["1.0", "0.0"] * 4) + "\n")
    code, _, err = run(capsys, "replay", s, "--subcarrier", 0, "--out", tmp_path / "r", "--no-plot")
    assert code == 2 and "too short" in err


def test_replay_missing_stream(capsys, tmp_path):
    code, _, err = run(capsys, "replay", tmp_path / "gone.csv", "--out", tmp_path / "r")
    assert code == 2 and "gone.csv" in err


def test_replay_malformed_stream_reports_line(capsys, tmp_path):
    s = tmp_path / "bad.csv"
    good = "0,0.0,-40.0," + ",".join(["1.0", "0.0"] * 4) + "\n"
    s.write_text(good + "1,0.1,-40.0,1.0\n")
    code, _, err = run(capsys, "replay", s, "--subcarrier", 0, "--out", tmp_path / "r", "--no-plot")
    assert code == 2 and "line 2" in err


# --- impairments-demo --------------------------------------------------------

def test_impairments_demo_statistics(capsys, tmp_path):
    out = tmp_path / "imp"
    code, stdout, _ = run(capsys, "impairments-demo", "--out", out, "--no-plot")
    assert code == 0
    summary = {r["mode"]: r for r in rows(out / "impairments_summary.csv")}
    assert float(summary["synchronized"]["fraction_within_60deg"]) >= 0.9
    assert float(summary["unsynchronized"]["resultant_length"]) < 0.1
    assert len(rows(out / "impairments.csv")) == 2 * 4000
    assert "synchronized:" in stdout and "unsynchronized:" in stdout


def test_impairments_demo_single_mode(capsys, tmp_path):
    out = tmp_path / "imp"
    code, _, _ = run(capsys, "impairments-demo", "--no-sync", "--duration", 1, "--out", out,
                     "--no-plot")
    assert code == 0
    assert {r["mode"] for r in rows(out / "impairments_summary.csv")} == {"unsynchronized"}


def test_impairments_demo_zero_duration_exits_2(capsys, tmp_path):
    code, _, _ = run(capsys, "impairments-demo", "--duration", 0, "--out", tmp_path)
    assert code == 2
