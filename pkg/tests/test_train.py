import math

import numpy as np
import pytest

from dalif.data import synth_task
from dalif.network import reference_network
from dalif.neuron import NeuronConfig
from dalif.train import (
    AblationRow, Dataset, NonFiniteLossError, TrainConfig, configure_ablation, decay_distribution,
    evaluate, format_ablation_table, lr_at, run_ablation, sgd_step, summarize_ablation, train,
)

DESK_TAU = 1.0 / math.tanh(1.0)


def small_dataset(seed=0, n=48, T=4):
    return Dataset(synth_task(seed, n, T, 0.1), synth_task(seed + 1, 32, T, 0.1))


def small_net(seed=0, T=4):
    return reference_network(seed=seed, T=T, neuron=NeuronConfig(tau_m=DESK_TAU))


def test_sgd_plain_step():
    p, v = sgd_step(np.array([1.0]), np.array([1.0]), np.zeros(1), lr=0.1, momentum=0.0)
    np.testing.assert_allclose(p, [0.9])


def test_sgd_fixed_point():
    p0 = np.array([0.3, -2.0])
    p, v = sgd_step(p0, np.zeros(2), np.zeros(2), lr=0.5, momentum=0.9)
    np.testing.assert_array_equal(p, p0)
    np.testing.assert_array_equal(v, 0.0)


def test_sgd_two_momentum_steps():
    p, v = 0.0, 0.0
    for _ in range(2):
        p, v = sgd_step(p, 1.0, v, lr=1.0, momentum=0.9)
    assert p == pytest.approx(-2.9, abs=1e-15)


def test_sgd_shape_mismatch():
    with pytest.raises(ValueError, match="shape mismatch"):
        sgd_step(np.zeros(2), np.zeros(3), np.zeros(2), 0.1, 0.9)


@pytest.mark.parametrize("kw", [{"lr": 0.0}, {"momentum": 1.0}, {"timesteps": 0},
                                {"ablation_mode": "gamma"}, {"lr_schedule": "step"}])
def test_train_config_validation(kw):
    with pytest.raises(ValueError):
        TrainConfig(**kw)


def test_cosine_schedule():
    cfg = TrainConfig(lr=0.2, epochs=4, lr_schedule="cosine")
    lrs = [lr_at(cfg, e) for e in range(1, 5)]
    assert lrs[0] == pytest.approx(0.2)
    assert all(a > b for a, b in zip(lrs, lrs[1:]))
    assert lr_at(TrainConfig(lr=0.2, epochs=4), 3) == 0.2


def test_untrained_decay_rows():
    rows = decay_distribution(reference_network())
    assert [r["layer"] for r in rows] == [0, 1]
    for r in rows:
        assert r["alpha"] == math.tanh(1.0) and r["beta"] == math.tanh(1.0)


def test_zero_epochs_reports_initial_state_only():
    net = small_net()
    before = net.copy()
    rep = train(net, small_dataset(), TrainConfig(epochs=0, timesteps=4))
    assert rep.epochs == [] and rep.to_jsonl() == ""
    assert rep.initial["epoch"] == 0
    assert rep.final_test_accuracy == rep.initial["test_accuracy"]
    for a, b in zip(net.layers, before.layers):
        np.testing.assert_array_equal(a.weight, b.weight)


def test_training_is_deterministic():
    cfg = TrainConfig(epochs=2, timesteps=4, batch_size=8)
    reports = [train(small_net(), small_dataset(), cfg) for _ in range(2)]
    assert reports[0].to_jsonl() == reports[1].to_jsonl()
    assert reports[0].summary() == reports[1].summary()


def test_report_records():
    rep = train(small_net(), small_dataset(), TrainConfig(epochs=2, timesteps=4, seed=3))
    lines = rep.to_jsonl().splitlines()
    assert len(lines) == 2
    for rec in rep.epochs:
        assert 0.0 <= rec["train_accuracy"] <= 1.0 and 0.0 <= rec["test_accuracy"] <= 1.0
    assert '"schema_version": 1' in lines[0] and '"seed": 3' in lines[0]
    assert rep.summary()["seed"] == 3


@pytest.mark.parametrize("mode,frozen", [("alpha_only", "rho_beta"), ("beta_only", "rho_alpha"),
                                         ("baseline", "rho_alpha")])
def test_freezing_is_bit_exact(mode, frozen):
    net = small_net()
    init = [getattr(l.decays, frozen) for l in net.layers]
    train(net, small_dataset(), TrainConfig(epochs=2, timesteps=4, ablation_mode=mode))
    assert [getattr(l.decays, frozen) for l in net.layers] == init


def test_baseline_uses_vanilla_and_keeps_decays():
    net = small_net()
    init = decay_distribution(net)
    rep = train(net, small_dataset(), TrainConfig(epochs=1, timesteps=4, ablation_mode="baseline"))
    assert all(l.neuron_model == "vanilla" for l in net.layers)
    assert rep.final_decays == init


def test_trainable_decays_move():
    net = small_net()
    init = decay_distribution(net)
    rep = train(net, small_dataset(), TrainConfig(epochs=2, timesteps=4))
    gaps = [abs(a["alpha"] - b["alpha"]) + abs(a["beta"] - b["beta"])
            for a, b in zip(rep.final_decays, init)]
    assert max(gaps) > 0.0


def test_configure_ablation_flags():
    net = small_net()
    assert configure_ablation(net, "both") == (True, True)
    assert configure_ablation(net, "alpha_only") == (True, False)
    with pytest.raises(ValueError):
        configure_ablation(net, "nope")


@pytest.mark.parametrize("seed", range(5))
def test_loss_decreases(seed):
    ds = Dataset(synth_task(100 + seed, 128, 8, 0.1), synth_task(200 + seed, 32, 8, 0.1))
    net = reference_network(seed=seed, T=8, neuron=NeuronConfig(tau_m=DESK_TAU))
    rep = train(net, ds, TrainConfig(epochs=4, timesteps=8))
    assert rep.epochs[-1]["train_loss"] < rep.epochs[0]["train_loss"]


@pytest.mark.parametrize("where", ["layer 1", "readout"])
def test_nonfinite_loss_aborts_with_diagnostic(where):
    net = small_net()
    if where == "readout":
        net.readout[0, 0] = np.inf
    else:
        net.layers[1].weight[0, 0, 0, 0] = np.nan
    with np.errstate(all="ignore"), pytest.raises(NonFiniteLossError) as err:
        train(net, small_dataset(), TrainConfig(epochs=1, timesteps=4))
    assert err.value.iteration == 0 and err.value.where == where
    assert "iteration 0" in str(err.value)


def test_timestep_mismatch_rejected():
    with pytest.raises(ValueError, match="timesteps"):
        train(small_net(), small_dataset(T=4), TrainConfig(timesteps=8))
    with pytest.raises(ValueError, match="empty"):
        train(small_net(), Dataset([], []), TrainConfig(timesteps=4))


def test_evaluate_range():
    out = evaluate(small_net(), small_dataset().test)
    assert 0.0 <= out["accuracy"] <= 1.0 and out["loss"] > 0.0


def test_run_ablation_cardinality_and_order(monkeypatch):
    cfg = TrainConfig(epochs=1, timesteps=4)
    rows = run_ablation(lambda s: small_net(s), lambda s: small_dataset(s), cfg, [0, 1])
    assert len(rows) == 8
    assert [(r.mode, r.seed) for r in rows][:3] == [("baseline", 0), ("baseline", 1),
                                                    ("alpha_only", 0)]
    for r in rows:
        if r.mode == "baseline":
            assert r.final_decays == r.initial_decays
    monkeypatch.setenv("DALIF_THREADS", "3")
    threaded = run_ablation(lambda s: small_net(s), lambda s: small_dataset(s), cfg, [0, 1])
    assert [r.test_accuracy for r in threaded] == [r.test_accuracy for r in rows]


def test_ablation_table_format():
    rows = [AblationRow("both", s, acc, [], []) for s, acc in enumerate([0.5, 0.75])]
    summary = summarize_ablation(rows)
    assert summary == [{"mode": "both", "mean_accuracy": 0.625, "std_accuracy": 0.125, "runs": 2}]
    table = format_ablation_table(summary)
    assert table.splitlines() == ["mode          mean_acc       std  runs",
                                  "both            0.6250    0.1250     2"]
