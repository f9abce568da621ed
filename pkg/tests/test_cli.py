from __future__ import annotations

import json
import shutil
import subprocess
import sys

import numpy as np
import pytest

from wstl_explain.cli import main, parse_seeds
from wstl_explain.data import Trajectory, load_dataset, save_dataset
from wstl_explain.errors import ConfigError
from wstl_explain.metrics import conciseness, consistency, strictness
from wstl_explain.wstl import formula_from_json, PredicateSpec


def toy_files(tmp_path, separable=True, n=30, H=6):
    rng = np.random.default_rng(0)
    data = []
    for k in range(n):
        label = 1 if k % 2 == 0 else -1
        goal = np.full(H + 1, -0.5)
        if label == 1 or not separable:
            goal[rng.integers(2, H + 1):] = 0.5
        data.append(Trajectory(np.stack([goal, rng.uniform(-1, 1, H + 1)], axis=1), label, f"t{k:03d}"))
    save_dataset(tmp_path / "toy.jsonl", data)
    schema = {
        "state_dim": 2,
        "predicates": [
            {"id": "goal", "feature": {"kind": "coordinate", "index": 0}, "c": 0.0, "sup": 1.0, "inf": -1.0},
            {"id": "noise", "feature": {"kind": "coordinate", "index": 1}, "c": 0.0, "sup": 1.0, "inf": -1.0},
        ],
    }
    (tmp_path / "toy.schema.json").write_text(json.dumps(schema))
    return str(tmp_path / "toy.jsonl"), str(tmp_path / "toy.schema.json")


FAST = ["--epochs", "4", "--n-pr", "3"]


def test_parse_seeds():
    assert parse_seeds("0..3") == [0, 1, 2, 3]
    assert parse_seeds("4,2") == [4, 2]
    assert parse_seeds("7") == [7]
    with pytest.raises(ConfigError):
        parse_seeds("a..b")


class TestGenerate:
    def test_defaults(self, tmp_path):
        assert main(["generate", "--out", str(tmp_path / "d")]) == 0
        manifest = json.loads((tmp_path / "d" / "manifest.json").read_text())
        assert manifest["counts"] == {"positive": 500, "negative": 500}
        data = load_dataset(tmp_path / "d" / "data.jsonl")
        assert len(data) == 1000 and {t.horizon for t in data} == {50}

    def test_repeatable(self, tmp_path):
        for name in ("a", "b"):
            assert main(["generate", "--out", str(tmp_path / name), "--seed", "3", "--n-pos", "30", "--n-neg", "30"]) == 0
        for f in ("data.jsonl", "schema.json", "manifest.json"):
            assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()

    def test_overlap_exit_2(self, tmp_path, capsys):
        code = main(["generate", "--out", str(tmp_path / "x"), "--goal", "0", "0", "--hazard", "0.1", "0"])
        assert code == 2
        assert "overlap" in capsys.readouterr().err


class TestExplain:
    def test_single_seed_toy(self, tmp_path):
        data, schema = toy_files(tmp_path)
        out = tmp_path / "runs"
        assert main(["explain", "--data", data, "--schema", schema, "--out", str(out), "--seeds", "0", "--epochs", "20", "--n-pr", "6"]) == 0
        text = (out / "seed-0" / "explanation.txt").read_text()
        assert "ψ_goal" in text.split("F[", 1)[1].split("]", 1)[0]
        manifest = json.loads((out / "seed-0" / "manifest.json").read_text())
        assert manifest["explanation"] == text.strip()
        assert manifest["run_config"]["epochs"] == 20

    def test_ten_seeds(self, tmp_path):
        data, schema = toy_files(tmp_path)
        out = tmp_path / "runs"
        assert main(["explain", "--data", data, "--schema", schema, "--out", str(out), "--seeds", "0..9", "--epochs", "1", "--n-pr", "1"]) == 0
        assert len(list(out.glob("seed-*/manifest.json"))) == 10
        agg = json.loads((out / "aggregate.json").read_text())
        assert [r["seed"] for r in agg["runs"]] == list(range(10))

    def test_missing_schema(self, tmp_path):
        data, _ = toy_files(tmp_path)
        assert main(["explain", "--data", data, "--schema", str(tmp_path / "nope.json"), "--out", str(tmp_path / "o")]) == 2

    def test_no_discriminating_predicates(self, tmp_path):
        rows = [{"id": f"t{k}", "label": 1 if k % 2 else -1, "states": [[0.5], [0.5]]} for k in range(10)]
        (tmp_path / "d.jsonl").write_text("\n".join(json.dumps(r) for r in rows))
        schema = {"state_dim": 1, "predicates": [{"id": "x", "feature": {"kind": "coordinate", "index": 0}, "c": 0, "sup": 1, "inf": -1}]}
        (tmp_path / "s.json").write_text(json.dumps(schema))
        code = main(["explain", "--data", str(tmp_path / "d.jsonl"), "--schema", str(tmp_path / "s.json"), "--out", str(tmp_path / "o"), "--seeds", "0"])
        assert code == 3

    def test_non_finite_loss(self, tmp_path):
        data, schema = toy_files(tmp_path)
        code = main(["explain", "--data", data, "--schema", schema, "--out", str(tmp_path / "o"), "--seeds", "0", "--step-size", "1e308", "--zeta", "1000"])
        assert code == 4

    def test_config_file_and_flag_precedence(self, tmp_path):
        data, schema = toy_files(tmp_path)
        cfg = {"data": data, "schema": schema, "out": str(tmp_path / "o"), "seeds": "2", "epochs": 2, "sigma": 0.7, "n_pr": 1}
        (tmp_path / "cfg.json").write_text(json.dumps(cfg))
        assert main(["explain", "--config", str(tmp_path / "cfg.json"), "--sigma", "0.4"]) == 0
        m = json.loads((tmp_path / "o" / "seed-2" / "manifest.json").read_text())
        assert m["run_config"]["sigma"] == 0.4
        assert m["run_config"]["epochs"] == 2
        assert m["config"]["train"]["sigma"] == 0.4

    def test_unknown_config_key(self, tmp_path):
        (tmp_path / "cfg.json").write_text(json.dumps({"learning_rate": 1}))
        assert main(["explain", "--config", str(tmp_path / "cfg.json")]) == 2


class TestEvaluate:
    def run(self, tmp_path, seeds="0..2"):
        data, schema = toy_files(tmp_path)
        out = tmp_path / "runs"
        assert main(["explain", "--data", data, "--schema", schema, "--out", str(out), "--seeds", seeds, *FAST]) == 0
        return out

    def test_report_matches_module_recomputation(self, tmp_path):
        out = self.run(tmp_path)
        assert main(["evaluate", "--runs", str(out)]) == 0
        report = json.loads((out / "metrics.json").read_text())
        formulas = []
        for k in range(3):
            m = json.loads((out / f"seed-{k}" / "manifest.json").read_text())
            preds = {p["id"]: PredicateSpec.from_json(p) for p in m["params"]["predicates"]}
            formulas.append(formula_from_json(m["formula"], preds))
            assert report["per_run"]["accuracy"][k] == pytest.approx(m["test_accuracy"])
        P = report["P"]
        assert P == 2  # the noise predicate is filtered out
        assert report["per_run"]["conciseness"] == [conciseness(f) for f in formulas]
        assert report["per_run"]["strictness"] == [strictness(f, P) for f in formulas]
        assert report["summary"]["consistency"] == consistency(formulas)

    def test_byte_identical_rerun(self, tmp_path):
        out = self.run(tmp_path)
        assert main(["evaluate", "--runs", str(out)]) == 0
        first = (out / "metrics.json").read_bytes(), (out / "metrics.txt").read_bytes()
        assert main(["evaluate", "--runs", str(out)]) == 0
        assert ((out / "metrics.json").read_bytes(), (out / "metrics.txt").read_bytes()) == first

    def test_identical_runs_and_single_run(self, tmp_path):
        out = self.run(tmp_path, "5")
        for k in (6, 7):
            shutil.copytree(out / "seed-5", out / f"seed-{k}")
        assert main(["evaluate", "--runs", str(out)]) == 0
        assert json.loads((out / "metrics.json").read_text())["summary"]["consistency"] == 1.0
        for k in (6, 7):
            shutil.rmtree(out / f"seed-{k}")
        assert main(["evaluate", "--runs", str(out)]) == 0
        rep = json.loads((out / "metrics.json").read_text())
        assert rep["runs"] == 1 and rep["summary"]["consistency"] == 1.0

    def test_mismatched_schema(self, tmp_path):
        out = self.run(tmp_path, "0")
        m = json.loads((out / "seed-0" / "manifest.json").read_text())
        m["schema"]["predicates"][0]["c"] = 0.25
        (out / "seed-1").mkdir()
        (out / "seed-1" / "manifest.json").write_text(json.dumps(m))
        assert main(["evaluate", "--runs", str(out)]) == 2

    def test_empty_directory(self, tmp_path):
        assert main(["evaluate", "--runs", str(tmp_path)]) == 2


def test_filter_report(tmp_path, capsys):
    data, schema = toy_files(tmp_path)
    assert main(["filter-report", "--data", data, "--schema", schema]) == 0
    report = json.loads(capsys.readouterr().out)
    assert [e["predicate"] for e in report] == ["goal", "noise"]
    assert report[0]["retained"]


def test_module_entry_point_and_log_env(tmp_path):
    data, schema = toy_files(tmp_path)
    proc = subprocess.run(
        [sys.executable, "-m", "wstl_explain", "filter-report", "--data", data, "--schema", schema],
        capture_output=True, text=True, env={"WSTL_EXPLAIN_LOG": "debug", "PATH": ""},
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)[0]["predicate"] == "goal"
