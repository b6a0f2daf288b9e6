"""Command-line experiment driver.

Subcommands:
  train  --config cfg.json [--out DIR]            train every configured seed
  ablate --config cfg.json [--grid SPEC] [--out]  component x depth grid
  stats  --strategy zero|random|amp2 --depth I --samples N [--seed S] [--out CSV]
  energy --t T --b B --c C --n N [--out JSON]
  plot   --in RECORDS_DIR [--out DIR]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import stats as statsmod
from .energy import estimate_energy
from .trainer import (
    ExperimentConfig,
    emit_plots,
    load_records,
    mean_final_accuracy,
    run_ablation_grid,
    run_seeds,
    write_grid_csv,
    write_metrics_csv,
    write_record_json,
)


def _parse_grid(spec: str) -> dict:
    """Parse 'depth=3,4,6;awp=0,1;rmp=0,1' (missing axes default to full)."""
    grid = {"depth": (3,), "awp": (False, True), "rmp": (False, True)}
    if not spec:
        return grid
    for part in spec.split(";"):
        part = part.strip()
        if not part:
            continue
        key, _, values = part.partition("=")
        key = key.strip()
        items = [v.strip() for v in values.split(",") if v.strip()]
        if key == "depth":
            grid["depth"] = tuple(int(v) for v in items)
        elif key in ("awp", "rmp"):
            grid[key] = tuple(bool(int(v)) for v in items)
        else:
            raise SystemExit(f"unknown grid axis {key!r}")
    return grid


def _cmd_train(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    records = run_seeds(cfg)
    for rec in records:
        stem = f"{rec.name}-seed{rec.seed}"
        write_record_json(out / f"{stem}.json", rec)
        write_metrics_csv(out / f"{stem}.csv", rec)
        print(
            f"{stem}: final test accuracy {rec.final_test_accuracy:.2f}% "
            f"({rec.wall_clock_seconds:.1f}s)"
        )
    print(f"mean over {len(records)} seed(s): {mean_final_accuracy(records):.2f}%")
    return 0


def _cmd_ablate(args) -> int:
    cfg = ExperimentConfig.from_json_file(args.config)
    grid = _parse_grid(args.grid)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = run_ablation_grid(
        cfg, awp_values=grid["awp"], rmp_values=grid["rmp"], depths=grid["depth"]
    )
    for row in rows:
        for rec in row["records"]:
            write_record_json(out / f"{rec.name}-seed{rec.seed}.json", rec)
        print(
            f"depth={row['depth_blocks']} awp={int(row['awp'])} rmp={int(row['rmp'])}"
            f" -> mean test accuracy {row['mean_test_accuracy']:.2f}%"
        )
    write_grid_csv(out / "ablation_grid.csv", rows)
    print(f"grid written to {out / 'ablation_grid.csv'}")
    return 0


def _cmd_stats(args) -> int:
    strategy = statsmod.parse_strategy(args.strategy)
    rng = np.random.default_rng(args.seed)
    res = statsmod.monte_carlo_x(strategy, args.depth, args.samples, rng)
    if args.out:
        statsmod.write_mc_csv(args.out, [res])
        print(f"written to {args.out}")
    else:
        print(",".join(statsmod.CSV_HEADER))
        print(",".join(str(v) for v in statsmod.mc_result_to_row(res)))
    return 0


def _cmd_energy(args) -> int:
    report = estimate_energy(args.t, args.b, args.c, args.n)
    payload = report.to_json()
    if args.out:
        Path(args.out).write_text(payload)
        print(f"written to {args.out}")
    else:
        print(payload)
    return 0


def _cmd_plot(args) -> int:
    records = load_records(args.records)
    written = emit_plots(records, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spikemp", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train every configured seed")
    p.add_argument("--config", required=True)
    p.add_argument("--out", default="runs")
    p.set_defaults(fn=_cmd_train)

    p = sub.add_parser("ablate", help="run the component/depth ablation grid")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", default="", help="e.g. 'depth=3,4,6;awp=0,1;rmp=0,1'")
    p.add_argument("--out", default="runs")
    p.set_defaults(fn=_cmd_ablate)

    p = sub.add_parser("stats", help="Monte Carlo membrane statistics vs closed forms")
    p.add_argument("--strategy", required=True, choices=["zero", "random", "amp2"])
    p.add_argument("--depth", type=int, default=20)
    p.add_argument("--samples", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--out", default="")
    p.set_defaults(fn=_cmd_stats)

    p = sub.add_parser("energy", help="energy model for one inference")
    p.add_argument("--t", type=int, required=True)
    p.add_argument("--b", type=int, required=True)
    p.add_argument("--c", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", default="")
    p.set_defaults(fn=_cmd_energy)

    p = sub.add_parser("plot", help="render curves and energy charts from records")
    p.add_argument("--in", dest="records", required=True)
    p.add_argument("--out", default="plots")
    p.set_defaults(fn=_cmd_plot)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
