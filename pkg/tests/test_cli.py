import json
import subprocess
import sys

import numpy as np
import pytest

from papforge import cli
from papforge import coevolve as co
from papforge import workbench as wb
from papforge.problems import load_instance


def _run(capsys, *argv):
    code = cli.main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture(scope="module")
def instances(tmp_path_factory):
    out = tmp_path_factory.mktemp("inst")
    assert cli.main(["gen-instances", "--class", "MKP", "--dims", "8", "10", "--count", "2", "--seed", "3",
                     "--out", str(out)]) == 0
    return out


def test_gen_instances_outputs(instances):
    idx = json.loads((instances / "index.json").read_text())
    assert idx["format"] == cli.INDEX_FORMAT and len(idx["instances"]) == 4
    assert idx["config_digest"] == wb.digest(idx["config"])
    for iid in idx["instances"]:
        inst = load_instance(instances / f"{iid}.json")
        assert inst.problem_class == "MKP" and inst.dim in (8, 10)
    assert len(cli._load_instances([instances])) == 4
    assert len(cli._load_instances([instances / "index.json", instances])) == 4


def test_count_zero_is_an_error(tmp_path, capsys):
    code, _, err = _run(capsys, "gen-instances", "--class", "MKP", "--dims", "8", "--count", "0",
                        "--out", str(tmp_path))
    assert code != 0
    rec = json.loads(err.strip())
    assert rec["error"] == "UsageError" and "count" in rec["message"] and rec["command"] == "gen-instances"
    assert len(err.strip().splitlines()) == 1


def test_bad_flag_is_one_json_line(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "papforge.cli", "gen-instances", "--class", "TSP", "--dims", "8",
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 2
    lines = proc.stderr.strip().splitlines()
    assert len(lines) == 1 and json.loads(lines[0])["error"] == "UsageError"


def test_locked_output_is_rejected(tmp_path, capsys):
    with wb.OutputLock(tmp_path):
        code, _, err = _run(capsys, "gen-instances", "--class", "MKP", "--dims", "8", "--out", str(tmp_path))
    assert code == 1 and json.loads(err)["error"] == "OutputLocked"


def test_run_pap_is_byte_identical_and_matches_library(tmp_path, capsys, instances):
    args = ["run-pap", "--profile", "smoke", "--seed", "4", "--instances", str(instances)]
    for d in ("a", "b"):
        code, out, _ = _run(capsys, *args, "--out", str(tmp_path / d))
        assert code == 0 and out.startswith("| class | dim |")
    a, b = (tmp_path / "a" / "results.json").read_bytes(), (tmp_path / "b" / "results.json").read_bytes()
    assert a == b
    # the command is a thin wrapper over the library call
    cfg = co.profile("smoke", seed=4)
    P = cli._portfolio(type("A", (), {"portfolio": None})(), cfg.K)
    conf = {"command": "run-pap", "profile": "smoke", "seed": 4, "profile_config": cfg.to_dict(),
            "portfolio": P.to_dict(), "max_eval": cfg.moea_budget}
    rec = wb.evaluate_pap(P, cli._load_instances([instances]), cfg.moea_budget, 4, cfg.reference_samples,
                          cfg.front_samples, config=conf)
    assert (rec.dumps() + "\n").encode() == a
    recs = (tmp_path / "a" / "records.jsonl").read_text().splitlines()
    assert json.loads(recs[0])["config_digest"] == rec.config_digest


def test_train_mutate_report_pipeline(tmp_path, capsys, instances):
    nirs = tmp_path / "nirs"
    code, out, _ = _run(capsys, "train-nir", "--profile", "smoke", "--instances", str(instances / "index.json"),
                        "--epochs", "3", "--samples", "100", "--seq2seq", "none", "--out", str(nirs))
    assert code == 0
    info = json.loads(out)
    assert len(info["nirs"]) == 4
    report = json.loads((nirs / "train_report.json").read_text())
    assert report["config_digest"] == wb.digest(report["config"])

    mut = tmp_path / "mut"
    code, out, _ = _run(capsys, "mutate", "--profile", "smoke", "--nirs", str(nirs), "--max-iter", "1",
                        "--out", str(mut))
    assert code == 0
    m = json.loads((mut / "mutation.json").read_text())
    assert m["performance"] <= m["parent_performance"]
    trace = (mut / "trace.jsonl").read_text().splitlines()
    assert json.loads(trace[0])["config_digest"] == m["config_digest"] and len(trace) == 2
    children, _ = wb.load_nir_set(mut)
    assert list(children) == [m["child"]]

    res = tmp_path / "res"
    code, _, _ = _run(capsys, "run-pap", "--profile", "smoke", "--nirs", str(mut), "--instances",
                      str(instances / "index.json"), "--out", str(res))
    assert code == 0
    rows = json.loads((res / "results.json").read_text())["rows"]
    assert any(r["instance"].startswith("nir:") for r in rows)

    rep = tmp_path / "rep"
    one = sorted(instances.glob("MKP-*.json"))[0]
    code, out, _ = _run(capsys, "report", "--results", str(res / "results.json"), "--scatter", str(one),
                        "--samples", "500", "--out", str(rep))
    assert code == 0
    table = json.loads((rep / "table.json").read_text())
    for a in table["aggregates"]:
        vals = [r["normalized_hv"] for r in table["rows"]
                if (r["class"], r["dim"], r["method"]) == (a["class"], a["dim"], a["method"])]
        assert a["mean"] == pytest.approx(np.mean(vals))
        assert a["std"] == pytest.approx(np.std(vals, ddof=1) if len(vals) > 1 else 0.0)
    assert (rep / "report.md").read_text().startswith(f"<!-- config {table['config_digest']} -->")
    scat = rep / "scatter" / f"{one.stem}.txt"
    assert scat.read_text().startswith(f"# config {table['config_digest']}")
    assert np.loadtxt(scat).shape == (500, 2)


def test_report_needs_input(tmp_path, capsys):
    code, _, err = _run(capsys, "report", "--out", str(tmp_path))
    assert code == 1 and json.loads(err)["error"] == "UsageError"


def test_coevolve_and_report_on_matrix(tmp_path, capsys):
    out = tmp_path / "co"
    code, stdout, _ = _run(capsys, "coevolve", "--profile", "smoke", "--seed", "2", "--seq2seq", "none",
                           "--out", str(out))
    assert code == 0
    summary = json.loads(stdout)
    assert len(summary["portfolio"]) == 2
    assert json.loads((out / "portfolio.json").read_text())["config_digest"] == summary["config_digest"]
    rep = tmp_path / "rep"
    code, _, _ = _run(capsys, "report", "--matrix", str(out / "matrix.json"), "--out", str(rep))
    assert code == 0
    rows = json.loads((rep / "table.json").read_text())["rows"]
    m = json.loads((out / "matrix.json").read_text())
    assert len(rows) == len(m["entries"])
    # resuming a finished run is a no-op that reproduces the same outputs
    before = (out / "portfolio.json").read_bytes()
    code, _, _ = _run(capsys, "coevolve", "--profile", "smoke", "--seed", "2", "--seq2seq", "none",
                      "--resume", str(out / "checkpoint"), "--out", str(out))
    assert code == 0 and (out / "portfolio.json").read_bytes() == before


def test_console_script_is_installed():
    proc = subprocess.run(["papforge", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    for name in ("gen-instances", "train-nir", "mutate", "run-pap", "coevolve", "report"):
        assert name in proc.stdout
