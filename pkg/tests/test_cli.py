import csv
import json
import re

import jsonschema
import pytest

from fuzzydistill import cli
from fuzzydistill.dataset import read_dataset
from fuzzydistill.metrics import REPORT_SCHEMA


def run(*argv):
    return cli.main([str(a) for a in argv])


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A 1000-pair dataset and a Tri-16 model distilled from it."""
    root = tmp_path_factory.mktemp("cli")
    assert run("generate", "--n", 1000, "--seed", 42, "--out", root / "gen") == 0
    data = root / "gen" / "dataset.csv"
    assert run("distill", "--dataset", data, "--out", root / "fit") == 0
    return root, data, root / "fit" / "model.json"


def test_generate_is_reproducible(tmp_path):
    assert run("generate", "--n", 100, "--seed", 42, "--out", tmp_path / "a") == 0
    assert run("generate", "--n", 100, "--seed", 42, "--out", tmp_path / "b") == 0
    a = (tmp_path / "a" / "dataset.csv").read_bytes()
    assert a == (tmp_path / "b" / "dataset.csv").read_bytes()
    assert len(a.decode().strip().split("\n")) == 101
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert manifest["command"] == "generate" and manifest["seeds"] == [42]
    assert manifest["config"]["n_samples"] == 100
    assert "dataset.csv" in manifest["outputs"]


def test_generate_jsonl(tmp_path):
    assert run("generate", "--n", 50, "--format", "jsonl", "--out", tmp_path) == 0
    assert len(read_dataset(tmp_path / "dataset.jsonl")) == 50


def test_generate_invalid_path(tmp_path):
    blocker = tmp_path / "afile"
    blocker.write_text("")
    assert run("generate", "--n", 10, "--out", blocker / "sub") == 2
    assert blocker.read_text() == ""
    assert list(tmp_path.iterdir()) == [blocker]


def test_distill_outputs(workdir):
    root, _, _ = workdir
    fit = root / "fit"
    for name in ("model.json", "metrics.json", "metrics.csv", "split.json", "manifest.json"):
        assert (fit / name).is_file()
    metrics = json.loads((fit / "metrics.json").read_text())
    jsonschema.validate(metrics["validation"], REPORT_SCHEMA)
    # on the synthetic teacher the fit is at least as good in-sample
    assert metrics["train"]["fidelity_percent"] >= metrics["validation"]["fidelity_percent"]
    manifest = json.loads((fit / "manifest.json").read_text())
    assert manifest["config"]["train"]["n_rules"] == 16
    assert manifest["config"]["train"]["family"]["tag"] == "triangular"
    assert len(manifest["inputs"]["dataset"]["sha256"]) == 64


def test_distill_is_deterministic(workdir, tmp_path):
    root, data, model = workdir
    assert run("distill", "--dataset", data, "--out", tmp_path) == 0
    assert (tmp_path / "model.json").read_bytes() == model.read_bytes()
    assert (tmp_path / "metrics.json").read_bytes() == (root / "fit" / "metrics.json").read_bytes()


def test_too_many_rules_is_clean_error(tmp_path):
    assert run("generate", "--n", 30, "--out", tmp_path / "g") == 0
    out = tmp_path / "d"
    assert run("distill", "--dataset", tmp_path / "g" / "dataset.csv", "--rules", 40, "--out", out) == 2
    err = json.loads((out / "error.json").read_text())
    assert err["exit_code"] == 2 and "40 rules" in err["message"]
    assert not (out / "model.json").exists()


def test_evaluate_tau_sweep(workdir, tmp_path, capsys):
    _, data, model = workdir
    fids = []
    for tau in (0.05, 0.1, 0.2):
        capsys.readouterr()
        assert run("evaluate", "--model", model, "--dataset", data, "--tau", tau) == 0
        fids.append(json.loads(capsys.readouterr().out)["fidelity_percent"])
    assert fids == sorted(fids)
    assert run("evaluate", "--model", model, "--dataset", data, "--out", tmp_path) == 0
    jsonschema.validate(json.loads((tmp_path / "report.json").read_text()), REPORT_SCHEMA)
    assert read_csv(tmp_path / "report.csv")[0]["n_samples"] == "1000"


def test_evaluate_dimension_mismatch(workdir, tmp_path):
    _, _, model = workdir
    bad = tmp_path / "bad.csv"
    bad.write_text("s0,s1,a0,a1\n0,0,0,0\n")
    assert run("evaluate", "--model", model, "--dataset", bad, "--out", tmp_path / "o") == 2
    assert "d=2" in json.loads((tmp_path / "o" / "error.json").read_text())["message"]


def test_rollout_compare_teacher_injection(tmp_path):
    assert run("rollout-compare", "--policy", "teacher", "--rollouts", 3, "--out", tmp_path) == 0
    rows = read_csv(tmp_path / "pairs.csv")
    assert len(rows) == 3
    assert all(float(r["dtw"]) == 0.0 for r in rows)
    assert all(float(r["fidelity_on_teacher_states"]) == 100.0 for r in rows)
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["surrogate_beats_zero"] == 3 and summary["surrogate_landed"] == 3
    traj = read_csv(tmp_path / "trajectories.csv")
    assert {r["policy"] for r in traj} == {"teacher", "zero"}


def test_rollout_compare_model_is_reproducible(workdir, tmp_path):
    _, _, model = workdir
    for sub in ("a", "b"):
        assert run("rollout-compare", "--model", model, "--rollouts", 2, "--seed", 7, "--out", tmp_path / sub) == 0
    for name in ("summary.json", "pairs.csv", "trajectories.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    summary = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert summary["policy"] == "fcs" and summary["n_rollouts"] == 2


def test_rollout_compare_needs_model(tmp_path):
    assert run("rollout-compare", "--out", tmp_path) == 1


def test_sweep_single_seed(workdir, tmp_path, monkeypatch):
    monkeypatch.setenv("FUZZYDISTILL_THREADS", "1")
    _, data, _ = workdir
    assert run("sweep", "--dataset", data, "--rules", "4,8", "--seeds", "42", "--out", tmp_path) == 0
    table = read_csv(tmp_path / "table.csv")
    assert [(r["family"], r["rules"]) for r in table] == [
        (f, r) for f in ("triangular", "gaussian", "dt") for r in ("4", "8")]
    assert all(float(r["fidelity_percent_std"]) == 0.0 for r in table)
    assert len(read_csv(tmp_path / "cells.csv")) == 6
    tests = json.loads((tmp_path / "ttests.json").read_text())
    assert tests and all(t["error"] and t["p"] is None for t in tests)
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config"]["workers"] == 1 and manifest["seeds"] == [42]


def test_sweep_three_by_five(workdir, tmp_path):
    _, data, _ = workdir
    assert run("sweep", "--dataset", data, "--families", "triangular,gaussian", "--rules", "4,8,16",
               "--seeds", "42..46", "--out", tmp_path) == 0
    table = read_csv(tmp_path / "table.csv")
    assert len(table) == 6 and all(r["n_seeds"] == "5" for r in table)
    tests = json.loads((tmp_path / "ttests.json").read_text())
    frad = [t for t in tests if t["metric"] == "mean_frad"]
    assert len(frad) == 3 and all(t["error"] is None for t in frad)


def test_sweep_rejects_unknown_family(workdir, tmp_path):
    _, data, _ = workdir
    assert run("sweep", "--dataset", data, "--families", "forest", "--out", tmp_path) == 1


def test_export_rules(workdir, tmp_path):
    _, _, model = workdir
    assert run("export-rules", "--model", model, "--out", tmp_path / "a") == 0
    assert run("export-rules", "--model", model, "--out", tmp_path / "b") == 0
    text = (tmp_path / "a" / "rules.txt").read_text()
    assert sum(line.startswith("Rule ") for line in text.splitlines()) == 16
    assert text == (tmp_path / "b" / "rules.txt").read_text()
    manifest = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert any("default label scheme" in n for n in manifest["notes"])
    scheme = tmp_path / "s.toml"
    scheme.write_text('[default]\nbreakpoints = [0.0]\nlabels = ["LO", "HI"]\n')
    assert run("export-rules", "--model", model, "--scheme", scheme, "--out", tmp_path / "c") == 0
    assert json.loads((tmp_path / "c" / "manifest.json").read_text())["notes"] == []
    labels = re.findall(r" is (\w+) \(~", (tmp_path / "c" / "rules.txt").read_text())
    assert labels and set(labels) <= {"LO", "HI"}


def test_exit_codes(tmp_path):
    assert run() == 1
    assert run("distill", "--rules", 2, "--out", tmp_path) == 1
    assert run("evaluate", "--model", tmp_path / "none.json", "--dataset", tmp_path / "none.csv") == 2
    singular = tmp_path / "c.csv"
    singular.write_text("s0,s1,a0\n" + "".join(f"1,0,{k}\n" for k in range(6)))
    assert run("distill", "--dataset", singular, "--rules", 1, "--lambda", 0, "--no-standardize",
               "--train-fraction", 1, "--out", tmp_path / "n") == 3
    assert json.loads((tmp_path / "n" / "error.json").read_text())["exit_code"] == 3


def test_seed_parsing():
    assert cli.parse_seeds("42..46") == [42, 43, 44, 45, 46]
    assert cli.parse_seeds("1,5") == [1, 5]
    assert cli.parse_seeds("7") == [7]


def test_thread_cap(monkeypatch):
    monkeypatch.setenv("FUZZYDISTILL_THREADS", "2")
    assert cli.worker_count(10) == 2
    assert cli.worker_count(1) == 1
    monkeypatch.setenv("FUZZYDISTILL_THREADS", "lots")
    with pytest.raises(cli.UsageError):
        cli.worker_count(3)


def test_manifest_timestamp_pin(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert run("generate", "--n", 5, "--out", tmp_path) == 0
    assert json.loads((tmp_path / "manifest.json").read_text())["timestamp"] == "1970-01-01T00:00:00Z"
