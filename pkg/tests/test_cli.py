import csv
import json
from importlib import resources

import jsonschema
import pytest

from sotpim.cli import main
from sotpim.workload import load_network

SCHEMA = json.loads((resources.files("sotpim") / "data" / "report.schema.json").read_text())


def run(tmp_path, *args):
    code = main([*args, "--out", str(tmp_path)])
    return code


def report(path):
    data = json.loads(path.read_text())
    jsonschema.validate(data, SCHEMA)
    return data


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_cost(tmp_path):
    assert run(tmp_path, "cost") == 0
    d = report(tmp_path / "cost.json")["data"]
    assert d["mac_ratios"]["energy"] == pytest.approx(3.3, rel=0.1)
    assert d["mac_ratios"]["latency"] == pytest.approx(1.8, rel=0.1)
    assert rows(tmp_path / "cost.csv")[0] == ["design", "op", "latency_ns", "energy_fj"]


def test_cost_fast_mram(tmp_path):
    assert run(tmp_path, "cost", "--fast-mram") == 0
    d = report(tmp_path / "cost.json")["data"]
    assert d["mac_latency_reduction_vs_default"] == pytest.approx(0.567, abs=0.02)


def test_config_errors(tmp_path):
    assert run(tmp_path, "cost", "--calibration", str(tmp_path / "nope.json")) == 2
    assert run(tmp_path, "cost", "--layout", "8") == 2
    assert run(tmp_path, "cost", "--layout", "1,4") == 2
    assert run(tmp_path, "estimate-train", "--net", "missing") == 2
    assert not (tmp_path / "cost.json").exists()


def test_simulate_mac(tmp_path):
    assert run(tmp_path, "simulate-mac", "--n-random", "300", "--reconcile-samples", "4",
               "--trace") == 0
    d = report(tmp_path / "simulate_mac.json")["data"]
    assert d["mismatches"] == 0
    add = next(r for r in d["reconciliation"] if r["op"] == "add")
    assert add["events_per_op"]["searches"] == 50
    trace = rows(tmp_path / "trace.csv")
    assert trace[0] == ["kind", "row", "bits_touched"] and len(trace) > 1000


def test_simulate_mac_detects_fault(tmp_path, capsys):
    assert run(tmp_path, "simulate-mac", "--n-random", "20", "--reconcile-samples", "1",
               "--inject-fault") == 1
    assert "MISMATCH" in capsys.readouterr().err
    assert report(tmp_path / "simulate_mac.json")["data"]["mismatches"] >= 1


def test_reconcile(tmp_path):
    assert run(tmp_path, "reconcile", "--samples", "8") == 0
    d = report(tmp_path / "reconcile.json")["data"]
    assert not any(r["flagged"] for r in d["reconciliation"])
    assert rows(tmp_path / "reconcile.csv")[0][0] == "op"


def test_estimate_train(tmp_path):
    assert run(tmp_path, "estimate-train") == 0
    d = report(tmp_path / "estimate_train.json")["data"]
    assert d["total_params"] == 21690
    assert d["ratios"]["area"] == pytest.approx(2.5, rel=0.1)


def test_estimate_train_custom_spec_scales(tmp_path):
    small = tmp_path / "small.json"
    small.write_text(json.dumps({"input_shape": [10], "layers": [{"kind": "Dense", "units": 10}]}))
    big = tmp_path / "big.json"
    big.write_text(json.dumps({"input_shape": [20], "layers": [{"kind": "Dense", "units": 20}]}))
    energies = []
    for spec in (small, big):
        out = tmp_path / spec.stem
        assert run(out, "estimate-train", "--net", str(spec), "--steps", "5") == 0
        energies.append(report(out / "estimate_train.json")["data"]["proposed"]["energy_fj"])
    assert energies[1] > 3 * energies[0]


def test_train_tiny_zero_epochs(tmp_path):
    assert run(tmp_path, "train-tiny", "--epochs", "0") == 0
    assert rows(tmp_path / "loss.csv") == [["epoch", "loss", "accuracy"]]


def test_train_tiny_deterministic(tmp_path):
    outs = []
    for name in ("a", "b"):
        assert run(tmp_path / name, "train-tiny", "--epochs", "3", "--seed", "4") == 0
        outs.append((tmp_path / name / "loss.csv").read_text())
    assert outs[0] == outs[1]
    assert len(outs[0].splitlines()) == 4


def test_train_tiny_divergence_exit_code(tmp_path):
    assert run(tmp_path, "train-tiny", "--epochs", "40", "--lr", "1e30", "--backend", "oracle") == 3
    assert report(tmp_path / "train_tiny.json")["data"]["diverged"]


def test_presets_load():
    assert load_network("xor-mlp").total_params == 42
