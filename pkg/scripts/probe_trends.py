"""Exploration harness for the accuracy-trend acceptance settings (not shipped)."""

import json
import sys
import time

import numpy as np

from spikemp.trainer import (
    AblationParams,
    DatasetParams,
    ExperimentConfig,
    NetworkParams,
    OptimizerParams,
    run_experiment,
)


def run_cell(policy, awp, rmp, depth, seeds, epochs, lr, width, noise, tag=""):
    accs = []
    for seed in seeds:
        cfg = ExperimentConfig(
            name=f"probe-{policy}-d{depth}-awp{int(awp)}-rmp{int(rmp)}{tag}",
            network=NetworkParams(
                arch="depth_mlp",
                width=width,
                depth_blocks=depth,
                policy=policy,
                timesteps=1,
            ),
            dataset=DatasetParams(classes=8, per_class=100, n_points=256, noise_sigma=noise, seed=7),
            optimizer=OptimizerParams(method="adam", lr=lr, epochs=epochs, batch_size=32),
            seeds=[seed],
            ablation=AblationParams(awp=awp, rmp=rmp),
        )
        t0 = time.perf_counter()
        rec = run_experiment(cfg, seed=seed)
        accs.append(rec.final_test_accuracy)
        print(
            f"  {cfg.name} seed={seed}: {rec.final_test_accuracy:.2f}% "
            f"({time.perf_counter()-t0:.0f}s)",
            flush=True,
        )
    mean = float(np.mean(accs))
    print(f"== {policy} d{depth} awp={int(awp)} rmp={int(rmp)}: mean {mean:.2f}", flush=True)
    return mean


def main():
    epochs = int(sys.argv[1]) if len(sys.argv) > 1 else 12
    lr = float(sys.argv[2]) if len(sys.argv) > 2 else 1e-3
    width = int(sys.argv[3]) if len(sys.argv) > 3 else 32
    noise = float(sys.argv[4]) if len(sys.argv) > 4 else 0.02
    seeds = [42, 43, 44]
    res = {}
    res["twu_d3"] = run_cell("twu", False, False, 3, seeds, epochs, lr, width, noise)
    res["amp2_d3_00"] = run_cell("amp2", False, False, 3, seeds, epochs, lr, width, noise)
    res["amp2_d3_01"] = run_cell("amp2", False, True, 3, seeds, epochs, lr, width, noise)
    res["amp2_d3_10"] = run_cell("amp2", True, False, 3, seeds, epochs, lr, width, noise)
    res["amp2_d3_11"] = run_cell("amp2", True, True, 3, seeds, epochs, lr, width, noise)
    res["amp2_d6_00"] = run_cell("amp2", False, False, 6, seeds, epochs, lr, width, noise)
    res["amp2_d6_11"] = run_cell("amp2", True, True, 6, seeds, epochs, lr, width, noise)
    print(json.dumps(res, indent=2))
    print("criterion 6a (amp2 full >= twu + 2):", res["amp2_d3_11"] >= res["twu_d3"] + 2.0)
    best = max(res["amp2_d3_00"], res["amp2_d3_01"], res["amp2_d3_10"])
    print("criterion 6b (full best of four):", res["amp2_d3_11"] > best)
    print("criterion 7a (base d6 < base d3):", res["amp2_d6_00"] < res["amp2_d3_00"])
    deg_base = res["amp2_d3_00"] - res["amp2_d6_00"]
    deg_full = res["amp2_d3_11"] - res["amp2_d6_11"]
    print(f"criterion 7b (full degrades less): base {deg_base:.2f} vs full {deg_full:.2f}:", deg_full < deg_base)


if __name__ == "__main__":
    main()
