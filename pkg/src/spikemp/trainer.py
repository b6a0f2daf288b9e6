"""JSON-configured training runs, ablation grids, and artifact emission.

An experiment is fully determined by (config, seed): dataset generation,
parameter init, batch shuffling, and membrane perturbations all draw from
generators derived from those two values, so repeat runs reproduce metrics
bit for bit on one platform.
"""

from __future__ import annotations

import csv
import hashlib
import json
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import datagen
from .energy import estimate_energy
from .network import (
    Network,
    NetworkSpec,
    build_network,
    depth_mlp_spec,
    forward,
    loss_and_grad,
    pointnet_tiny_spec,
)
from .neuron import HandoffMismatch, NeuronConfig, Policy, ThresholdMode
from .optim import make_optimizer
from .tensor import Tensor


class ConfigError(ValueError):
    """Invalid experiment config; message carries the offending field path."""


@dataclass
class NetworkParams:
    arch: str = "depth_mlp"  # depth_mlp | pointnet_tiny
    width: int = 64
    depth_blocks: int = 3
    head_width: Optional[int] = None
    policy: str = "amp2"  # amp2 | twu
    timesteps: int = 1
    rmp_merge: str = "pre_norm"  # pre_norm | post_norm


@dataclass
class NeuronParams:
    k: float = 5.0
    c: float = 0.5
    beta: float = 0.25
    alpha: float = 0.8
    v_th: float = 1.0
    threshold_mode: str = "minus_c"  # minus_c | plain
    handoff_mismatch: str = "random_init"


@dataclass
class DatasetParams:
    classes: int = 8
    per_class: int = 100
    n_points: int = 256
    noise_sigma: float = 0.02
    seed: int = 7


@dataclass
class OptimizerParams:
    method: str = "adam"
    lr: float = 1e-4
    epochs: int = 100
    batch_size: int = 32


@dataclass
class AblationParams:
    awp: bool = True
    rmp: bool = True


@dataclass
class ExperimentConfig:
    name: str = "experiment"
    network: NetworkParams = field(default_factory=NetworkParams)
    neuron: NeuronParams = field(default_factory=NeuronParams)
    dataset: DatasetParams = field(default_factory=DatasetParams)
    optimizer: OptimizerParams = field(default_factory=OptimizerParams)
    seeds: list = field(default_factory=lambda: [42])
    ablation: AblationParams = field(default_factory=AblationParams)

    def validate(self) -> None:
        net, neu, ds, opt = self.network, self.neuron, self.dataset, self.optimizer
        if net.arch not in ("depth_mlp", "pointnet_tiny"):
            raise ConfigError(f"network.arch: unknown architecture {net.arch!r}")
        if net.width < 1:
            raise ConfigError(f"network.width: must be >= 1, got {net.width}")
        if net.depth_blocks < 1:
            raise ConfigError(f"network.depth_blocks: must be >= 1, got {net.depth_blocks}")
        if net.policy not in ("amp2", "twu"):
            raise ConfigError(f"network.policy: unknown policy {net.policy!r}")
        if net.timesteps < 1:
            raise ConfigError(f"network.timesteps: must be >= 1, got {net.timesteps}")
        if net.policy == "amp2" and net.timesteps != 1:
            raise ConfigError("network.timesteps: must be 1 under the amp2 policy")
        if net.rmp_merge not in ("pre_norm", "post_norm"):
            raise ConfigError(f"network.rmp_merge: unknown merge point {net.rmp_merge!r}")
        if not neu.k > 0:
            raise ConfigError(f"neuron.k: must be positive, got {neu.k}")
        if not 0 < neu.c <= 1:
            raise ConfigError(f"neuron.c: must be in (0, 1], got {neu.c}")
        if not 0 <= neu.beta < 1:
            raise ConfigError(f"neuron.beta: must be in [0, 1), got {neu.beta}")
        if not 0 <= neu.alpha <= 1:
            raise ConfigError(f"neuron.alpha: must be in [0, 1], got {neu.alpha}")
        if not neu.v_th > 0:
            raise ConfigError(f"neuron.v_th: must be positive, got {neu.v_th}")
        if neu.threshold_mode not in ("minus_c", "plain"):
            raise ConfigError(f"neuron.threshold_mode: unknown mode {neu.threshold_mode!r}")
        if not 2 <= ds.classes <= 8:
            raise ConfigError(f"dataset.classes: must be in [2, 8], got {ds.classes}")
        if ds.per_class < 5:
            raise ConfigError(f"dataset.per_class: must be >= 5, got {ds.per_class}")
        if ds.n_points < 1:
            raise ConfigError(f"dataset.n_points: must be >= 1, got {ds.n_points}")
        if ds.noise_sigma < 0:
            raise ConfigError(f"dataset.noise_sigma: must or >= 0, got {ds.noise_sigma}")
        if opt.method not in ("sgd", "adam"):
            raise ConfigError(f"optimizer.method: unknown method {opt.method!r}")
        if not opt.lr > 0:
            raise ConfigError(f"optimizer.lr: must be positive, got {opt.lr}")
        if opt.epochs < 0:
            raise ConfigError(f"optimizer.epochs: must be >= 0, got {opt.epochs}")
        if opt.batch_size < 1:
            raise ConfigError(f"optimizer.batch_size: must be >= 1, got {opt.batch_size}")
        if not self.seeds:
            raise ConfigError("seeds: need at least one seed")

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        def sub(klass, key):
            payload = d.get(key, {})
            known = {f for f in klass.__dataclass_fields__}
            unknown = set(payload) - known
            if unknown:
                raise ConfigError(f"{key}.{sorted(unknown)[0]}: unknown field")
            return klass(**payload)

        known_top = {f for f in cls.__dataclass_fields__}
        unknown_top = set(d) - known_top
        if unknown_top:
            raise ConfigError(f"{sorted(unknown_top)[0]}: unknown field")
        cfg = cls(
            name=d.get("name", "experiment"),
            network=sub(NetworkParams, "network"),
            neuron=sub(NeuronParams, "neuron"),
            dataset=sub(DatasetParams, "dataset"),
            optimizer=sub(OptimizerParams, "optimizer"),
            seeds=list(d.get("seeds", [42])),
            ablation=sub(AblationParams, "ablation"),
        )
        cfg.validate()
        return cfg

    @classmethod
    def from_json_file(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


def config_hash(cfg: ExperimentConfig) -> str:
    canon = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode()).hexdigest()[:16]


@dataclass
class EpochMetrics:
    epoch: int
    train_accuracy: float  # percent
    train_loss: float
    test_accuracy: float
    test_loss: float


@dataclass
class RunRecord:
    config_hash: str
    seed: int
    name: str
    epochs: list
    energy: dict
    firing_rates: list
    wall_clock_seconds: float
    final_test_accuracy: float
    policy: str
    timesteps: int
    threshold_mode: str
    awp: bool
    rmp: bool
    depth_blocks: int

    def to_dict(self) -> dict:
        return asdict(self)


def _neuron_config(cfg: ExperimentConfig, policy: Policy) -> NeuronConfig:
    neu = cfg.neuron
    return NeuronConfig(
        k=neu.k,
        c=neu.c,
        beta=neu.beta,
        alpha=neu.alpha,
        v_th=neu.v_th,
        policy=policy,
        spike_threshold_mode=ThresholdMode(neu.threshold_mode),
        handoff_mismatch=HandoffMismatch(neu.handoff_mismatch),
    )


def build_spec_from_config(cfg: ExperimentConfig) -> NetworkSpec:
    policy = Policy.AMP2 if cfg.network.policy == "amp2" else Policy.TWU
    neuron = _neuron_config(cfg, policy)
    if cfg.network.arch == "pointnet_tiny":
        return pointnet_tiny_spec(
            cfg.dataset.classes,
            neuron,
            policy=policy,
            timesteps=cfg.network.timesteps,
            awp=cfg.ablation.awp,
        )
    return depth_mlp_spec(
        cfg.dataset.classes,
        neuron,
        policy=policy,
        timesteps=cfg.network.timesteps,
        depth_blocks=cfg.network.depth_blocks,
        width=cfg.network.width,
        head_width=cfg.network.head_width,
        use_rmp=cfg.ablation.rmp,
        merge_post_norm=cfg.network.rmp_merge == "post_norm",
        awp=cfg.ablation.awp,
    )


def _evaluate(
    net: Network,
    points: np.ndarray,
    labels: np.ndarray,
    batch_size: int,
    rng: np.random.Generator,
) -> tuple[float, float, list, list]:
    """Eval-mode accuracy/loss plus aggregated spike counts per layer."""
    from .network import softmax_cross_entropy  # local to avoid import noise

    total, correct, loss_sum = 0, 0, 0.0
    ones: Optional[np.ndarray] = None
    elems: Optional[np.ndarray] = None
    for start in range(0, len(labels), batch_size):
        xb = Tensor(points[start : start + batch_size])
        yb = labels[start : start + batch_size]
        trace = forward(net, xb, train_mode=False, rng=rng)
        logits = trace.logits.data
        pred = logits.argmax(axis=1)
        correct += int((pred == yb).sum())
        total += len(yb)
        loss_sum += softmax_cross_entropy(trace.logits, yb).item() * len(yb)
        o = np.asarray(trace.spike_ones)
        e = np.asarray(trace.spike_elems)
        ones = o if ones is None else ones + o
        elems = e if elems is None else elems + e
    acc = 100.0 * correct / max(total, 1)
    return acc, loss_sum / max(total, 1), list(ones), list(elems)


def run_experiment(cfg: ExperimentConfig, seed: Optional[int] = None) -> RunRecord:
    """Train one seed of the configured experiment and return its record."""
    cfg.validate()
    seed = int(cfg.seeds[0] if seed is None else seed)
    t0 = time.perf_counter()

    ds = datagen.generate_point_dataset(
        cfg.dataset.classes,
        cfg.dataset.per_class,
        cfg.dataset.n_points,
        cfg.dataset.noise_sigma,
        cfg.dataset.seed,
    )
    spec = build_spec_from_config(cfg)
    rng = np.random.default_rng(seed)
    net = build_network(spec, rng)
    opt = make_optimizer(cfg.optimizer.method, net.parameters(), cfg.optimizer.lr)

    n_train = len(ds.train_labels)
    bs = cfg.optimizer.batch_size
    epochs: list = []
    fr_ones: list = []
    fr_elems: list = []
    for epoch in range(1, cfg.optimizer.epochs + 1):
        order = rng.permutation(n_train)
        train_loss_sum = 0.0
        train_correct = 0
        for start in range(0, n_train, bs):
            idx = order[start : start + bs]
            xb = Tensor(ds.train_points[idx])
            yb = ds.train_labels[idx]
            loss, trace = loss_and_grad(net, xb, yb, rng)
            opt.step()
            train_loss_sum += loss * len(idx)
            train_correct += int((trace.logits.data.argmax(axis=1) == yb).sum())
        train_acc = 100.0 * train_correct / n_train
        train_loss = train_loss_sum / n_train
        test_acc, test_loss, fr_ones, fr_elems = _evaluate(
            net, ds.test_points, ds.test_labels, bs, rng
        )
        epochs.append(
            EpochMetrics(
                epoch=epoch,
                train_accuracy=train_acc,
                train_loss=train_loss,
                test_accuracy=test_acc,
                test_loss=test_loss,
            )
        )

    if not epochs:
        test_acc, test_loss, fr_ones, fr_elems = _evaluate(
            net, ds.test_points, ds.test_labels, bs, rng
        )
    epoch_dicts = [asdict(e) for e in epochs]

    rates = [float(o) / float(e) for o, e in zip(fr_ones, fr_elems)] if fr_ones else []
    spike_channels = sum(
        l.out_features
        for l in spec.layers
        if hasattr(l, "out_features")
    )
    report = estimate_energy(
        cfg.network.timesteps if cfg.network.policy == "twu" else 1,
        1,
        max(spike_channels, 1),
        cfg.dataset.n_points,
    )
    report.per_layer_firing_rate = rates

    return RunRecord(
        config_hash=config_hash(cfg),
        seed=seed,
        name=cfg.name,
        epochs=epoch_dicts,
        energy=asdict(report),
        firing_rates=rates,
        wall_clock_seconds=time.perf_counter() - t0,
        final_test_accuracy=epoch_dicts[-1]["test_accuracy"] if epoch_dicts else test_acc,
        policy=cfg.network.policy,
        timesteps=cfg.network.timesteps,
        threshold_mode=cfg.neuron.threshold_mode,
        awp=cfg.ablation.awp,
        rmp=cfg.ablation.rmp,
        depth_blocks=cfg.network.depth_blocks,
    )


def run_seeds(cfg: ExperimentConfig) -> list:
    return [run_experiment(cfg, seed=s) for s in cfg.seeds]


def mean_final_accuracy(records: list) -> float:
    return float(np.mean([r.final_test_accuracy for r in records]))


def run_ablation_grid(
    base: ExperimentConfig,
    *,
    awp_values: tuple = (False, True),
    rmp_values: tuple = (False, True),
    depths: tuple = (3,),
) -> list[dict]:
    """Component x depth grid; one row per cell with per-seed records and the mean."""
    rows = []
    for depth in depths:
        for awp in awp_values:
            for rmp in rmp_values:
                cfg = replace(
                    base,
                    name=f"{base.name}-d{depth}-awp{int(awp)}-rmp{int(rmp)}",
                    network=replace(base.network, depth_blocks=depth),
                    ablation=AblationParams(awp=awp, rmp=rmp),
                )
                records = run_seeds(cfg)
                rows.append(
                    {
                        "depth_blocks": depth,
                        "awp": awp,
                        "rmp": rmp,
                        "mean_test_accuracy": mean_final_accuracy(records),
                        "records": records,
                    }
                )
    return rows


# ---------------------------------------------------------------------------
# Artifact emission
# ---------------------------------------------------------------------------


def write_metrics_csv(path, record: RunRecord) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "split", "accuracy", "loss"])
        for e in record.epochs:
            writer.writerow([e["epoch"], "train", e["train_accuracy"], e["train_loss"]])
            writer.writerow([e["epoch"], "test", e["test_accuracy"], e["test_loss"]])


def write_record_json(path, record: RunRecord) -> None:
    with open(path, "w") as fh:
        json.dump(record.to_dict(), fh, indent=2, sort_keys=True)


def write_grid_csv(path, rows: list) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth_blocks", "awp", "rmp", "mean_test_accuracy"])
        for row in rows:
            writer.writerow(
                [row["depth_blocks"], int(row["awp"]), int(row["rmp"]), row["mean_test_accuracy"]]
            )


def load_records(directory) -> list[RunRecord]:
    records = []
    for path in sorted(Path(directory).glob("*.json")):
        with open(path) as fh:
            d = json.load(fh)
        if "final_test_accuracy" in d:
            records.append(RunRecord(**d))
    return records


def emit_plots(records: list, out_dir) -> list[Path]:
    """Accuracy curves per configuration plus the energy-vs-timestep chart.

    Every plotted series is mirrored to CSV alongside the image.
    """
    if not records:
        raise ValueError("no records to plot")
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    fig, ax = plt.subplots(figsize=(7, 4.5))
    curves_csv = out_dir / "accuracy_curves.csv"
    with open(curves_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["name", "seed", "epoch", "test_accuracy"])
        for rec in records:
            xs = [e["epoch"] for e in rec.epochs]
            ys = [e["test_accuracy"] for e in rec.epochs]
            ax.plot(xs, ys, label=f"{rec.name} (seed {rec.seed})")
            for x, y in zip(xs, ys):
                writer.writerow([rec.name, rec.seed, x, y])
    ax.set_xlabel("epoch")
    ax.set_ylabel("test accuracy (%)")
    ax.legend(fontsize=7)
    ax.grid(alpha=0.3)
    curves_png = out_dir / "accuracy_curves.png"
    fig.tight_layout()
    fig.savefig(curves_png, dpi=120)
    plt.close(fig)
    written += [curves_png, curves_csv]

    from .energy import add_crossover_timestep, estimate_energy as _e

    ts = list(range(1, 9))
    lif = [_e(t, 1, 1, 1).lif_pj for t in ts]
    add_line = [_e(t, 1, 1, 1).amp2_add_pj for t in ts]
    mul_line = [_e(t, 1, 1, 1).amp2_mul_pj for t in ts]
    crossover = add_crossover_timestep()
    fig, ax = plt.subplots(figsize=(6, 4))
    width = 0.35
    ax.bar([t - width / 2 for t in ts], lif, width=width, label="timestep LIF")
    ax.bar([t + width / 2 for t in ts], add_line, width=width, label="single-pass (add)")
    ax.plot(ts, mul_line, "k--", label="single-pass (mul)")
    ax.axvline(crossover, color="red", linestyle=":", label=f"add crossover T={crossover}")
    ax.set_xlabel("timesteps T")
    ax.set_ylabel("energy per element (pJ)")
    ax.legend(fontsize=8)
    energy_png = out_dir / "energy_vs_timesteps.png"
    fig.tight_layout()
    fig.savefig(energy_png, dpi=120)
    plt.close(fig)
    energy_csv = out_dir / "energy_vs_timesteps.csv"
    with open(energy_csv, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "lif_pj", "amp2_add_pj", "amp2_mul_pj", "add_crossover_t"])
        for t, a, b_, c in zip(ts, lif, add_line, mul_line):
            writer.writerow([t, a, b_, c, crossover])
    written += [energy_png, energy_csv]
    return written
