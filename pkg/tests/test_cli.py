import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from gdqst import io
from gdqst.cli import main


@pytest.fixture
def run(tmp_path, capsys):
    def _run(*argv):
        code = main([str(a) for a in argv])
        out = capsys.readouterr()
        return code, out.out, out.err
    return _run


@pytest.fixture
def files(tmp_path, run):
    paths = {k: tmp_path / f"{k}.json" for k in ("state", "channel", "setting", "generator")}
    assert run("generate", "state", "-m", 1, "--seed", 1, "-o", paths["state"])[0] == 0
    assert run("generate", "channel", "-m", 1, "--seed", 2, "-o", paths["channel"])[0] == 0
    assert run("generate", "setting", "-m", 1, "--seed", 3, "-o", paths["setting"])[0] == 0
    assert run("generate", "generator", "-m", 1, "--seed", 4, "-o", paths["generator"])[0] == 0
    return paths


def test_generate_stdout_is_document(run):
    code, out, _ = run("generate", "state", "-m", 2, "--pure")
    assert code == 0
    doc = json.loads(out)
    assert doc["kind"] == "state" and doc["modes"] == 2 and "metadata" not in doc


def test_generate_deterministic_and_timestamp(run):
    a = run("generate", "channel", "-m", 1, "--seed", 5)[1]
    b = run("generate", "channel", "-m", 1, "--seed", 5)[1]
    assert a == b
    stamped = json.loads(run("generate", "channel", "-m", 1, "--seed", 5, "--timestamp")[1])
    assert "metadata" in stamped
    assert io.canonical(stamped) == a


def test_discrete_pipeline(run, files, tmp_path):
    rec = tmp_path / "rec.json"
    assert run("simulate", "--state", files["state"], "--dynamics", files["channel"],
               "--setting", files["setting"], "-o", rec)[0] == 0
    assert len(io.load(rec).times) == 3
    out_csv = tmp_path / "res.csv"
    code, out, _ = run("reconstruct", "--record", rec, "--dynamics", files["channel"],
                       "--truth", files["state"], "--csv", out_csv)
    assert code == 0
    doc = json.loads(out)
    assert doc["payload"]["errors"]["gammaRelativeError"] < 1e-8
    with open(out_csv) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == ["time", "mean", "variance", "reconstructedResidual"]
    assert len(rows) == 4


def test_continuous_pipeline(run, files, tmp_path):
    rec = tmp_path / "rec.json"
    assert run("simulate", "--state", files["state"], "--dynamics", files["generator"],
               "--setting", files["setting"], "--times", "0.2,0.9,1.7", "-o", rec)[0] == 0
    code, out, _ = run("reconstruct", "--record", rec, "--dynamics", files["generator"], "--truth", files["state"])
    assert code == 0
    assert json.loads(out)["payload"]["errors"]["gammaRelativeError"] < 1e-8


def test_unitary_flagged(run, tmp_path, files):
    ch = tmp_path / "u.json"
    rec = tmp_path / "rec.json"
    run("generate", "channel", "-m", 1, "--variant", "unitary", "-o", ch)
    run("simulate", "--state", files["state"], "--dynamics", ch, "--setting", files["setting"], "-o", rec)
    code, out, _ = run("reconstruct", "--record", rec, "--dynamics", ch)
    assert code == 4
    doc = json.loads(out)
    assert doc["payload"]["verdict"] == "NULL-SET" and doc["payload"]["flags"]["symplecticX"]
    assert run("diagnose", "--dynamics", ch, "--setting", files["setting"])[0] == 4
    assert run("diagnose", "--dynamics", files["channel"], "--setting", files["setting"])[0] == 0


def test_short_record_exit_5(run, files, tmp_path):
    rec = tmp_path / "rec.json"
    run("simulate", "--state", files["state"], "--dynamics", files["channel"], "--setting", files["setting"],
        "--count", 2, "-o", rec)
    assert run("reconstruct", "--record", rec, "--dynamics", files["channel"])[0] == 5


def test_mode_mismatch_exit_3(run, files, tmp_path):
    big = tmp_path / "big.json"
    run("generate", "channel", "-m", 2, "-o", big)
    code, _, err = run("simulate", "--state", files["state"], "--dynamics", big, "--setting", files["setting"])
    assert code == 3 and "mode" in err


def test_usage_errors_exit_2(run, monkeypatch, files):
    assert run("frobnicate")[0] == 2
    assert run("generate", "state")[0] == 2
    monkeypatch.setenv("GDQST_TOL", "nonsense=1")
    assert run("diagnose", "--dynamics", files["channel"], "--setting", files["setting"])[0] == 2
    monkeypatch.setenv("GDQST_TOL", '{"nonsense": 1}')
    assert run("diagnose", "--dynamics", files["channel"], "--setting", files["setting"])[0] == 2
    monkeypatch.setenv("GDQST_TOL", '{"condition": 1e10}')
    assert run("diagnose", "--dynamics", files["channel"], "--setting", files["setting"])[0] == 0


def test_extend_matches_simulation(run, files, tmp_path):
    rec = tmp_path / "rec.json"
    run("simulate", "--state", files["state"], "--dynamics", files["channel"], "--setting", files["setting"],
        "--t0", 2, "--count", 3, "-o", rec)
    code, out, _ = run("extend", "--record", rec, "--dynamics", files["channel"], "--forward", 4, "--backward-to", 0)
    assert code == 0
    ext = io.from_document(json.loads(out))
    full = tmp_path / "full.json"
    run("simulate", "--state", files["state"], "--dynamics", files["channel"], "--setting", files["setting"],
        "--count", 9, "-o", full)
    direct = io.load(full)
    np.testing.assert_array_equal(ext.times, direct.times)
    np.testing.assert_allclose(ext.variances, direct.variances, rtol=1e-8)
    np.testing.assert_allclose(ext.means, direct.means, rtol=1e-8, atol=1e-10)


def test_roundtrip_summary_and_jobs(run, tmp_path):
    out_csv = tmp_path / "rt.csv"
    code, out, _ = run("roundtrip", "-m", 1, "--trials", 4, "--shots", "exact,10000", "--csv", out_csv)
    assert code == 0
    doc = json.loads(out)
    levels = doc["payload"]["levels"]
    assert [lv["shots"] for lv in levels] == ["exact", 10000]
    assert levels[0]["succeeded"] == 4
    assert levels[0]["gammaRelativeError"]["max"] < 1e-6
    parallel = run("roundtrip", "-m", 1, "--trials", 4, "--shots", "exact,10000", "--jobs", 2)[1]
    assert parallel == out
    with open(out_csv) as fh:
        assert len(list(csv.reader(fh))) == 9


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "gdqst", "generate", "setting", "-m", "1"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["kind"] == "setting"
