import json
from pathlib import Path

import numpy as np
import pytest

from sotpim.cost import load_calibration
from sotpim.workload import (LayerSpec, NetworkSpec, OracleArith, SpecError, TrainingPlan,
                             count_training_macs, estimate_training, functional_train_tiny,
                             load_network)

FIXTURES = Path(__file__).parent / "fixtures"


def dense_net(n_in, n_out):
    return NetworkSpec("d", (n_in,), (LayerSpec("Dense", units=n_out),))


def test_dense_macs():
    m = count_training_macs(dense_net(4, 3), 1)
    assert m.forward == 12 and m.backward == 24 and m.update == 15


def test_lenet_matches_hand_count():
    net = load_network("lenet5")
    hand = json.loads((FIXTURES / "lenet5_hand_count.json").read_text())
    assert net.total_params == hand["total_params"] == 21690
    assert net.forward_macs == hand["forward_macs"]
    rows = [r for r in net.layer_table() if r["params"]]
    assert [(r["kind"], r["params"], r["macs"]) for r in rows] == \
        [(h["kind"], h["params"], h["macs"]) for h in hand["layers"]]


def test_backward_is_twice_forward():
    net = load_network("lenet5")
    m = count_training_macs(net, 8)
    assert m.backward == 2 * m.forward and m.update == 8 * net.total_params


@pytest.mark.parametrize("layer", [
    {"kind": "Conv", "out_channels": 0, "kernel": 3},
    {"kind": "Dense", "units": 0},
    {"kind": "Banana"},
    {"kind": "Dense", "widht": 3},
])
def test_malformed_layers(layer):
    with pytest.raises(SpecError):
        NetworkSpec.from_dict({"input_shape": [4], "layers": [layer]})


def test_shape_errors():
    with pytest.raises(SpecError):
        NetworkSpec.from_dict({"input_shape": [4], "layers": [{"kind": "Conv", "out_channels": 2,
                                                               "kernel": 3}]}).total_params
    with pytest.raises(SpecError):
        NetworkSpec.from_dict({"input_shape": [1, 4, 4], "total_params": 5,
                               "layers": [{"kind": "Dense", "units": 2}]})
    with pytest.raises(SpecError):
        load_network("no-such-net")


def test_spec_file_roundtrip(tmp_path):
    net = load_network("lenet5")
    p = tmp_path / "n.json"
    p.write_text(json.dumps(net.to_dict()))
    assert load_network(str(p)) == net


def test_estimate_zero_steps():
    cal = load_calibration()
    net = load_network("lenet5")
    est = estimate_training(net, TrainingPlan(64, 0, 10), cal)
    assert est.proposed.latency == 0 and est.proposed.energy == 0
    assert est.ratios["latency"] is None


def test_estimate_is_linear():
    cal = load_calibration()
    net = load_network("lenet5")
    one = estimate_training(net, TrainingPlan(16, 10, 170), cal)
    two = estimate_training(net, TrainingPlan(16, 20, 170), cal)
    assert two.proposed.latency == pytest.approx(2 * one.proposed.latency)
    assert two.baseline.energy == pytest.approx(2 * one.baseline.energy)
    big = estimate_training(net, TrainingPlan(32, 10, 170), cal)
    assert big.proposed.energy == pytest.approx(2 * one.proposed.energy)


def test_lenet_ratios():
    cal = load_calibration()
    net = load_network("lenet5")
    r = estimate_training(net, TrainingPlan.for_network(net), cal).ratios
    assert r["area"] == pytest.approx(2.5, rel=0.1)
    assert r["latency"] == pytest.approx(1.8, rel=0.1)
    assert r["energy"] == pytest.approx(3.3, rel=0.1)


def test_trivial_net_ratios_are_finite():
    r = estimate_training(dense_net(3, 2), TrainingPlan(1, 1, 1), load_calibration()).ratios
    assert all(np.isfinite(v) for v in r.values())


def test_zero_learning_rate_keeps_loss_constant():
    res = functional_train_tiny(epochs=5, lr=0.0, backend="oracle")
    assert len(set(res.loss_words)) == 1


def test_pim_matches_oracle_trajectory():
    pim = functional_train_tiny(epochs=4, seed=1, backend="pim")
    ref = functional_train_tiny(epochs=4, seed=1, backend="oracle")
    assert pim.loss_words == ref.loss_words
    assert pim.accuracies == ref.accuracies


def test_loss_decreases_with_oracle():
    res = functional_train_tiny(epochs=60, backend=OracleArith())
    assert res.losses[-1] < res.losses[0]
    assert res.final_accuracy == 1.0


def test_divergence_is_reported():
    res = functional_train_tiny(epochs=50, lr=1e30, backend="oracle")
    assert res.diverged
    assert len(res.losses) < 50


def test_tiny_training_rejects_other_shapes():
    with pytest.raises(SpecError):
        functional_train_tiny(load_network("lenet5"), epochs=1)
