"""SGD-with-momentum training, evaluation and the decay ablation runner."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Sample, stack_batch
from .network import Network, loss_and_grad, network_forward, readout_rate, softmax_cross_entropy
from .stbp import backward
from .tensor import NonFiniteError, RngStream

ABLATION_MODES = ("baseline", "alpha_only", "beta_only", "both")
LR_SCHEDULES = ("constant", "cosine")


class NonFiniteLossError(FloatingPointError):
    def __init__(self, iteration: int, where: str):
        super().__init__(f"non-finite loss at iteration {iteration} ({where})")
        self.iteration = iteration
        self.where = where


@dataclass
class TrainConfig:
    lr: float = 0.1
    momentum: float = 0.9
    epochs: int = 10
    batch_size: int = 16
    seed: int = 0
    timesteps: int = 8
    ablation_mode: str = "both"
    lr_schedule: str = "constant"

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.timesteps < 1:
            raise ValueError(f"timesteps must be >= 1, got {self.timesteps}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.ablation_mode not in ABLATION_MODES:
            raise ValueError(f"ablation_mode must be one of {ABLATION_MODES}")
        if self.lr_schedule not in LR_SCHEDULES:
            raise ValueError(f"lr_schedule must be one of {LR_SCHEDULES}")


@dataclass
class Dataset:
    train: list[Sample]
    test: list[Sample]


@dataclass
class RunReport:
    seed: int
    mode: str
    initial: dict
    epochs: list[dict] = field(default_factory=list)
    final_decays: list[dict] = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def final_test_accuracy(self) -> float:
        return (self.epochs[-1] if self.epochs else self.initial)["test_accuracy"]

    def to_jsonl(self) -> str:
        """One JSON record per training epoch; wall-clock time is left out."""
        tag = {"schema_version": 1, "seed": self.seed, "mode": self.mode}
        return "".join(json.dumps({**tag, **rec}, sort_keys=True) + "\n" for rec in self.epochs)

    def summary(self) -> dict:
        return {"schema_version": 1, "seed": self.seed, "mode": self.mode,
                "initial": self.initial, "final_decays": self.final_decays,
                "epochs": len(self.epochs)}


def sgd_step(param, grad, velocity, lr: float, momentum: float):
    """Classic momentum: ``v <- m*v + g``, ``p <- p - lr*v``."""
    if np.shape(param) != np.shape(grad) or np.shape(param) != np.shape(velocity):
        raise ValueError(
            f"shape mismatch: param {np.shape(param)}, grad {np.shape(grad)}, "
            f"velocity {np.shape(velocity)}"
        )
    velocity = momentum * velocity + grad
    return param - lr * velocity, velocity


def configure_ablation(net: Network, mode: str) -> tuple[bool, bool]:
    """Set neuron models for ``mode``; returns which of (alpha, beta) train."""
    if mode not in ABLATION_MODES:
        raise ValueError(f"unknown ablation mode {mode!r}")
    for layer in net.layers:
        layer.neuron_model = "vanilla" if mode == "baseline" else "dalif"
    return {"baseline": (False, False), "alpha_only": (True, False),
            "beta_only": (False, True), "both": (True, True)}[mode]


def decay_distribution(net: Network) -> list[dict]:
    """Effective ``(alpha, beta)`` of each layer's learnable decays."""
    rows = []
    for n, layer in enumerate(net.layers):
        a, b = layer.decays.effective(layer.neuron.decay_activation)
        rows.append({"layer": n, "alpha": a, "beta": b})
    return rows


def lr_at(cfg: TrainConfig, epoch: int) -> float:
    """Learning rate for 1-based ``epoch``."""
    if cfg.lr_schedule == "constant" or cfg.epochs <= 1:
        return cfg.lr
    return 0.5 * cfg.lr * (1.0 + math.cos(math.pi * (epoch - 1) / cfg.epochs))


def evaluate(net: Network, samples: list[Sample], batch_size: int = 64) -> dict:
    if not samples:
        return {"loss": float("nan"), "accuracy": float("nan")}
    total_loss, correct = 0.0, 0
    for i in range(0, len(samples), batch_size):
        x, y = stack_batch(samples[i:i + batch_size])
        logits_t, _ = network_forward(net, x)
        z = readout_rate(logits_t)
        loss, _ = softmax_cross_entropy(z, y)
        total_loss += loss * len(y)
        correct += int(np.sum(np.argmax(z, axis=1) == y))
    return {"loss": total_loss / len(samples), "accuracy": correct / len(samples)}


def _nonfinite_where(tape) -> str:
    for n, lt in enumerate(tape.layers):
        if not np.all(np.isfinite(lt.v)):
            return f"layer {n}"
    return "readout"


def _nonfinite_param(net) -> str:
    for n, layer in enumerate(net.layers):
        if not np.all(np.isfinite(layer.weight)):
            return f"layer {n}"
    return "readout"


def train(net: Network, dataset: Dataset, cfg: TrainConfig) -> RunReport:
    """Train ``net`` in place and return the per-epoch report."""
    if not dataset.train:
        raise ValueError("training set is empty")
    T = dataset.train[0].frames.shape[0]
    if T != cfg.timesteps:
        raise ValueError(f"samples have {T} timesteps, config says {cfg.timesteps}")
    t0 = time.perf_counter()
    train_alpha, train_beta = configure_ablation(net, cfg.ablation_mode)

    try:
        init_train = evaluate(net, dataset.train)
        init_test = evaluate(net, dataset.test)
    except NonFiniteError:
        raise NonFiniteLossError(0, _nonfinite_param(net)) from None
    report = RunReport(cfg.seed, cfg.ablation_mode, {
        "epoch": 0, "train_loss": init_train["loss"],
        "train_accuracy": init_train["accuracy"], "test_accuracy": init_test["accuracy"],
    })

    vel_w = [np.zeros_like(l.weight) for l in net.layers]
    vel_r = np.zeros_like(net.readout)
    vel_a = [0.0] * len(net.layers)
    vel_b = [0.0] * len(net.layers)
    n = len(dataset.train)
    iteration = 0
    for epoch in range(1, cfg.epochs + 1):
        lr = lr_at(cfg, epoch)
        order = RngStream(cfg.seed, epoch).permutation(n)
        loss_sum, correct = 0.0, 0
        for start in range(0, n, cfg.batch_size):
            batch = [dataset.train[i] for i in order[start:start + cfg.batch_size]]
            x, y = stack_batch(batch)
            try:
                loss, g_t, tape = loss_and_grad(net, x, y)
            except NonFiniteError:
                raise NonFiniteLossError(iteration, _nonfinite_param(net)) from None
            if not math.isfinite(loss):
                raise NonFiniteLossError(iteration, _nonfinite_where(tape))
            grads = backward(net, tape, g_t)
            for k, (layer, g) in enumerate(zip(net.layers, grads.layers)):
                layer.weight, vel_w[k] = sgd_step(layer.weight, g.dW, vel_w[k], lr, cfg.momentum)
                if train_alpha:
                    layer.decays.rho_alpha, vel_a[k] = sgd_step(
                        layer.decays.rho_alpha, g.d_rho_alpha, vel_a[k], lr, cfg.momentum)
                if train_beta:
                    layer.decays.rho_beta, vel_b[k] = sgd_step(
                        layer.decays.rho_beta, g.d_rho_beta, vel_b[k], lr, cfg.momentum)
            net.readout, vel_r = sgd_step(net.readout, grads.d_readout, vel_r, lr, cfg.momentum)
            loss_sum += loss * len(y)
            correct += int(np.sum(np.argmax(readout_rate(tape.logits), axis=1) == y))
            iteration += 1
        test = evaluate(net, dataset.test)
        report.epochs.append({
            "epoch": epoch, "lr": lr, "train_loss": loss_sum / n,
            "train_accuracy": correct / n, "test_accuracy": test["accuracy"],
            "decays": decay_distribution(net),
        })
    for layer in net.layers:
        layer.decays.rho_alpha = float(layer.decays.rho_alpha)
        layer.decays.rho_beta = float(layer.decays.rho_beta)
    report.final_decays = decay_distribution(net)
    report.wall_clock = time.perf_counter() - t0
    return report


# ---------------------------------------------------------------------------
# ablation

@dataclass
class AblationRow:
    mode: str
    seed: int
    test_accuracy: float
    final_decays: list[dict]
    initial_decays: list[dict]


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("DALIF_THREADS", "1")))
    except ValueError:
        return 1


def run_ablation(make_net, make_dataset, cfg: TrainConfig, seeds, modes=ABLATION_MODES):
    """Train every ``(mode, seed)`` pair; ``make_net(seed)``/``make_dataset(seed)``.

    Runs may execute on ``DALIF_THREADS`` workers; rows are returned in
    ``(mode, seed)`` order regardless.
    """
    jobs = [(mode, seed) for mode in modes for seed in seeds]

    def run(job):
        mode, seed = job
        net = make_net(seed)
        init = decay_distribution(net)
        run_cfg = TrainConfig(**{**asdict(cfg), "seed": seed, "ablation_mode": mode})
        rep = train(net, make_dataset(seed), run_cfg)
        return AblationRow(mode, seed, rep.final_test_accuracy, rep.final_decays, init)

    workers = worker_count()
    if workers == 1:
        return [run(j) for j in jobs]
    with ThreadPoolExecutor(workers) as pool:
        return list(pool.map(run, jobs))


def summarize_ablation(rows: list[AblationRow]) -> list[dict]:
    out = []
    for mode in dict.fromkeys(r.mode for r in rows):
        acc = np.array([r.test_accuracy for r in rows if r.mode == mode])
        out.append({"mode": mode, "mean_accuracy": float(acc.mean()),
                    "std_accuracy": float(acc.std()), "runs": int(acc.size)})
    return out


def format_ablation_table(summary: list[dict]) -> str:
    lines = [f"{'mode':<12}{'mean_acc':>10}{'std':>10}{'runs':>6}"]
    for row in summary:
        lines.append(f"{row['mode']:<12}{row['mean_accuracy']:>10.4f}"
                     f"{row['std_accuracy']:>10.4f}{row['runs']:>6d}")
    return "\n".join(lines)
