import hashlib
import json
import re
from pathlib import Path

import pandas as pd
import pytest
from click.testing import CliRunner

from conftest import MNL3_SPEC_TEXT, MNL3_TRUE
from cycliclv.cli import main

FIXTURES = Path(__file__).parent / "fixtures" / "lvd"


def sha256(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def read_manifest(directory):
    return json.loads((Path(directory) / "manifest.json").read_text())


@pytest.fixture(scope="module")
def runner():
    return CliRunner()


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    (root / "mnl3.spec").write_text(MNL3_SPEC_TEXT)
    (root / "true.txt").write_text(
        "".join(f"{k} = {v}\n" for k, v in MNL3_TRUE.items()))
    (root / "gen.json").write_text(json.dumps({
        "n_individuals": 30,
        "t_per_individual": 40,
        "seed": 3,
        "covariates": {
            "speed": {"kind": "uniform", "low": 0.2, "high": 1.0},
            "x1": {"kind": "uniform", "low": -1.0, "high": 1.0},
        },
    }))
    return root


@pytest.fixture(scope="module")
def panel_csv(runner, workdir):
    out = workdir / "panel.csv"
    result = runner.invoke(main, [
        "simulate", "--spec", str(workdir / "mnl3.spec"),
        "--params", str(workdir / "true.txt"),
        "--config", str(workdir / "gen.json"),
        "--out", str(out),
    ])
    assert result.exit_code == 0, result.output
    return out


def run_estimate(runner, workdir, panel_csv, out_name, extra=()):
    out_dir = workdir / out_name
    result = runner.invoke(main, [
        "estimate", "--data", str(panel_csv),
        "--spec", str(workdir / "mnl3.spec"),
        "--out-dir", str(out_dir), "--seed", "0", *extra,
    ])
    return result, out_dir


@pytest.fixture(scope="module")
def fitted(runner, workdir, panel_csv):
    result, out_dir = run_estimate(runner, workdir, panel_csv, "fit1")
    assert result.exit_code == 0, result.output
    return result, out_dir


# -- simulate ----------------------------------------------------------

def test_simulate_writes_panel_and_manifest(panel_csv):
    frame = pd.read_csv(panel_csv)
    assert {"individual_id", "t", "action", "speed", "x1"} <= set(frame.columns)
    assert frame["individual_id"].nunique() == 30
    manifest = read_manifest(panel_csv.parent)
    assert manifest["command"] == "simulate"
    assert manifest["outputs"][str(panel_csv)] == sha256(panel_csv)
    assert "cycliclv" in manifest["versions"]


def test_simulate_bad_config_exits_1(runner, workdir, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"covariates": {"speed": {"kind": "nope"}}}))
    result = runner.invoke(main, [
        "simulate", "--spec", str(workdir / "mnl3.spec"),
        "--config", str(bad), "--out", str(tmp_path / "x.csv"),
    ])
    assert result.exit_code == 1
    assert "nope" in result.output


# -- estimate ----------------------------------------------------------

def test_estimate_outputs(fitted, panel_csv):
    result, out_dir = fitted
    assert "converged = True" in result.output
    text = (out_dir / "estimates.txt").read_text()
    assert text.startswith("model = mnl3\n")
    assert "converged = 1" in text
    assert "param.a_const = " in text and "se.a_const = " in text
    report = (out_dir / "report.txt").read_text()
    assert "Model: mnl3" in report and "[utility accelerate]" in report
    assert (out_dir / "covariance.csv").exists()
    manifest = read_manifest(out_dir)
    assert manifest["command"] == "estimate"
    for name in ("estimates.txt", "report.txt", "covariance.csv"):
        path = out_dir / name
        assert manifest["outputs"][str(path)] == sha256(path)
    assert manifest["inputs"][str(panel_csv)] == sha256(panel_csv)


def test_estimate_rerun_byte_identical(fitted, runner, workdir, panel_csv):
    _, first = fitted
    result, second = run_estimate(runner, workdir, panel_csv, "fit2")
    assert result.exit_code == 0, result.output
    assert ((first / "estimates.txt").read_bytes()
            == (second / "estimates.txt").read_bytes())


def test_estimate_parallel_byte_identical(fitted, runner, workdir, panel_csv):
    _, first = fitted
    result, jobs2 = run_estimate(runner, workdir, panel_csv, "fit_jobs",
                                 extra=("--n-jobs", "2"))
    assert result.exit_code == 0, result.output
    assert ((first / "estimates.txt").read_bytes()
            == (jobs2 / "estimates.txt").read_bytes())


def test_estimate_unconverged_exits_1(runner, workdir, panel_csv):
    result, out_dir = run_estimate(runner, workdir, panel_csv, "fit_stub",
                                   extra=("--maxiter", "1", "--no-cov"))
    assert result.exit_code == 1
    assert "converged = False" in result.output
    assert "converged = 0" in (out_dir / "estimates.txt").read_text()


def test_estimate_bad_spec_exits_1(runner, panel_csv, tmp_path):
    result = runner.invoke(main, [
        "estimate", "--data", str(panel_csv), "--spec", "no_such_spec",
        "--out-dir", str(tmp_path / "out"),
    ])
    assert result.exit_code == 1


# -- report ------------------------------------------------------------

def test_report_reevaluates_saved_fit(fitted, runner, workdir, panel_csv):
    _, out_dir = fitted
    saved = (out_dir / "estimates.txt").read_text()
    ll_saved = float(re.search(r"^ll = (.+)$", saved, re.M).group(1))
    result = runner.invoke(main, [
        "report", "--data", str(panel_csv),
        "--spec", str(workdir / "mnl3.spec"),
        "--params", str(out_dir / "estimates.txt"),
    ])
    assert result.exit_code == 0, result.output
    ll_line = re.search(r"^ll = (-?\d+\.\d+)$", result.output, re.M)
    assert float(ll_line.group(1)) == pytest.approx(ll_saved, abs=1e-4)
    assert "n_obs = 1200" in result.output


# -- impute ------------------------------------------------------------

def test_impute_command(runner, tmp_path):
    trace = tmp_path / "trace.csv"
    speeds = [20.0, 19.5, 12.0, 11.0, 10.5, 10.0, 11.5, 13.0, 15.0, 17.0,
              18.0, 18.5]
    trace.write_text("timestamp,speed\n" + "".join(
        f"{i},{s}\n" for i, s in enumerate(speeds)))
    out = tmp_path / "imp" / "windows.csv"
    result = runner.invoke(main, [
        "impute", "--trace", str(trace), "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "windows over 1 segment(s)" in result.output
    frame = pd.read_csv(out)
    assert {"t", "action", "accel_mag", "brake_mag"} <= set(frame.columns)
    assert frame["action"].iloc[0] == "brake"
    manifest = read_manifest(out.parent)
    assert manifest["outputs"][str(out)] == sha256(out)
    assert manifest["config"]["brake_drop"] == 5.0


def test_impute_bad_trace_exits_1(runner, tmp_path):
    trace = tmp_path / "bad.csv"
    trace.write_text("timestamp,speed\n0,10.0\n0,11.0\n")
    result = runner.invoke(main, [
        "impute", "--trace", str(trace), "--out", str(tmp_path / "o.csv")])
    assert result.exit_code == 1
    assert "increasing" in result.output


# -- join --------------------------------------------------------------

def test_join_command(runner, tmp_path):
    panel = tmp_path / "panel.csv"
    panel.write_text("individual_id,t,action,speed\n"
                     "a,0,1,10.0\na,1,5,11.0\nb,0,2,9.0\n")
    cov = tmp_path / "cov.csv"
    cov.write_text("individual_id,t,red_light\na,0,1.0\na,1,0.0\n")
    out = tmp_path / "merged.csv"
    result = runner.invoke(main, [
        "join", "--panel", str(panel), "--covariates", str(cov),
        "--out", str(out)])
    assert result.exit_code == 0, result.output
    assert "joined 1 covariate(s) onto 3 rows" in result.output
    merged = pd.read_csv(out)
    assert merged["red_light"].tolist()[:2] == [1.0, 0.0]
    assert merged["red_light"].isna().iloc[2]


def test_join_missing_key_exits_1(runner, tmp_path):
    panel = tmp_path / "panel.csv"
    panel.write_text("individual_id,action\na,1\n")
    cov = tmp_path / "cov.csv"
    cov.write_text("individual_id,t,red_light\na,0,1.0\n")
    result = runner.invoke(main, [
        "join", "--panel", str(panel), "--covariates", str(cov),
        "--out", str(tmp_path / "m.csv")])
    assert result.exit_code == 1
    assert "need column 't'" in result.output


# -- describe-video ----------------------------------------------------

def frame_index(path, n=10, individual_lat=0.0):
    rows = ["timestamp,path,lat,lon"]
    for i in range(n):
        rows.append(f"{i}.0,frame{i}.jpg,{individual_lat + i * 1e-4},0.0")
    Path(path).write_text("\n".join(rows) + "\n")


def test_describe_video_mock(runner, tmp_path):
    frames = tmp_path / "frames.csv"
    frame_index(frames)
    out_dir = tmp_path / "dv"
    result = runner.invoke(main, [
        "describe-video", "--frames", str(frames), "--individual", "a",
        "--out-dir", str(out_dir), "--mock-dir", str(FIXTURES / "valid"),
        "--heatmap-variable", "cloudy",
    ])
    assert result.exit_code == 0, result.output
    assert "described 2 windows (0 failed, 0 empty)" in result.output
    records = (out_dir / "records.txt").read_text()
    assert "# individual=a t=0" in records
    assert "TrafficSignal: Red" in records
    cov = pd.read_csv(out_dir / "covariates.csv")
    assert cov["t"].tolist() == [0, 1]
    assert cov["red_light"].tolist() == [1.0, 0.0]
    assert cov["cloudy"].tolist() == [1.0, 1.0]
    assert (out_dir / "heatmap_cloudy.txt").exists()
    assert (out_dir / "heatmap_cloudy.txt.json").exists()
    manifest = read_manifest(out_dir)
    assert manifest["config"]["mock"] is True
    assert str(out_dir / "covariates.csv") in manifest["outputs"]


def test_describe_video_parse_failure_exits_1(runner, tmp_path):
    mock = tmp_path / "mock"
    mock.mkdir()
    (mock / "x_0.txt").write_text(
        (FIXTURES / "oov" / "bad_signal.txt").read_text())
    frames = tmp_path / "frames.csv"
    frame_index(frames, n=3)
    result = runner.invoke(main, [
        "describe-video", "--frames", str(frames), "--individual", "x",
        "--out-dir", str(tmp_path / "dv"), "--mock-dir", str(mock),
    ])
    assert result.exit_code == 1
    assert "described 0 windows (1 failed" in result.output


def test_describe_video_neutral_recovers(runner, tmp_path):
    mock = tmp_path / "mock"
    mock.mkdir()
    (mock / "x_0.txt").write_text(
        (FIXTURES / "oov" / "bad_signal.txt").read_text())
    frames = tmp_path / "frames.csv"
    frame_index(frames, n=3)
    result = runner.invoke(main, [
        "describe-video", "--frames", str(frames), "--individual", "x",
        "--out-dir", str(tmp_path / "dv"), "--mock-dir", str(mock),
        "--fallback", "neutral",
    ])
    assert result.exit_code == 0, result.output
    assert "described 1 windows (0 failed" in result.output


def test_describe_video_needs_transport(runner, tmp_path):
    frames = tmp_path / "frames.csv"
    frame_index(frames, n=3)
    result = runner.invoke(main, [
        "describe-video", "--frames", str(frames),
        "--out-dir", str(tmp_path / "dv"),
    ])
    assert result.exit_code == 1
    assert "--mock-dir or --endpoint" in result.output


# -- usage -------------------------------------------------------------

def test_missing_required_option_exits_2(runner):
    result = runner.invoke(main, ["impute"])
    assert result.exit_code == 2


def test_unknown_command_exits_2(runner):
    result = runner.invoke(main, ["transmogrify"])
    assert result.exit_code == 2


def test_version_flag(runner):
    result = runner.invoke(main, ["--version"])
    assert result.exit_code == 0
