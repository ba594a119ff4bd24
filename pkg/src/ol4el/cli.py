"""Experiment harness: single runs, parameter sweeps, CSV/JSON emission.

`run` executes the configured experiment once per seed and writes
metrics.csv (one row per global update) plus summary.json. `sweep`
re-runs the experiment across values of one axis (H, budget, or N) and
writes sweep.csv. Both render matplotlib figures next to the CSV output
unless --no-plot is given. The OL4EL_LOG environment variable (debug|info)
controls verbosity.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np

from . import report
from .bandit import BanditState, FixedIntervalPolicy, fixed_arm_cost
from .config import ExperimentConfig, config_to_toml, load_config
from .coordinator import Coordinator, MetricsRecord
from .data import Dataset, PartitionSpec, gen_blobs, gen_linear_multiclass, load_csv, partition
from .edge import build_fleet
from .errors import ConfigError
from .learners import Batch, SvmState, evaluate_accuracy, evaluate_f1, init_kmeans_plusplus
from .seeding import DATA_STREAM, MODEL_STREAM, POLICY_STREAM, spawn_rng

logger = logging.getLogger("ol4el")

METRICS_COLUMNS = ["seed", "clock", "version", "edge", "arm", "reward", "cost", "min_budget", "metric"]
SWEEP_COLUMNS = ["axis", "value", "policy", "mode", "seed", "final_metric"]
SWEEP_AXES = {"H": "heterogeneity", "budget": "budget", "N": "n"}


@dataclass
class RunResult:
    seed: int
    records: list[MetricsRecord]
    final_metric: Optional[float]


def make_dataset(config: ExperimentConfig, seed: int) -> Dataset:
    d = config.data
    if d.source == "blobs":
        return gen_blobs(d.k, d.dim, d.n, d.separation, d.sigma,
                         np.random.SeedSequence([seed, DATA_STREAM, 1]))
    if d.source == "linear":
        dataset, _planted = gen_linear_multiclass(
            d.classes, d.dim, d.n, d.margin,
            np.random.SeedSequence([seed, DATA_STREAM, 1]), d.label_noise,
        )
        return dataset
    return load_csv(d.source)


def split_test(shards: list[Dataset], fraction: float):
    """Strip the leading `fraction` of each shard into the cloud test set;
    shards are already shuffled by the partitioner."""
    train, test_points, test_labels = [], [], []
    for shard in shards:
        # Keep at least one training point; single-point shards upload nothing.
        k = min(max(1, int(round(fraction * len(shard)))), len(shard) - 1)
        if k > 0:
            test_points.append(shard.points[:k])
            if shard.labels is not None:
                test_labels.append(shard.labels[:k])
        train.append(shard.subset(np.arange(k, len(shard))))
    if not test_points:
        raise ConfigError("no shard could contribute test data", key="data.test_fraction")
    labels = np.concatenate(test_labels) if test_labels else None
    return train, Batch(np.concatenate(test_points), labels)


def _initial_model(config: ExperimentConfig, testset: Batch, dim: int, seed: int):
    if config.task.kind == "kmeans":
        return init_kmeans_plusplus(testset.points, config.task.k, spawn_rng(seed, MODEL_STREAM))
    return SvmState.zeros(config.task.classes, dim, config.task.lam)


def _make_policies(config: ExperimentConfig, fleet, seed: int):
    p, f, m = config.policy, config.fleet, config.mode
    per_edge_costs = [
        [fixed_arm_cost(i, e.c_comp_mean, e.c_comm_mean) for i in range(1, p.i_max + 1)]
        for e in fleet
    ]
    if m.kind == "sync":
        combine = max if m.sync_charge == "max" else lambda col: sum(col) / len(col)
        nominal = [combine([costs[i] for costs in per_edge_costs]) for i in range(p.i_max)]
        cost_sets = [nominal]
        rng_keys = [0]
    else:
        cost_sets = per_edge_costs
        rng_keys = list(range(len(fleet)))
    policies = []
    for costs, key in zip(cost_sets, rng_keys):
        if p.kind == "fixed":
            policies.append(FixedIntervalPolicy(p.interval, costs[p.interval - 1], f.budget))
        else:
            policies.append(
                BanditState(
                    p.i_max,
                    f.budget,
                    spawn_rng(seed, POLICY_STREAM, key),
                    cost_mode=f.cost_mode,
                    fixed_costs=costs if f.cost_mode == "fixed" else None,
                    c_floor=p.c_floor,
                    selection=p.selection,
                )
            )
    return policies


def build_coordinator(config: ExperimentConfig, seed: int, dataset: Optional[Dataset] = None) -> Coordinator:
    """Assemble the full seeded problem (data, fleet, policies, coordinator)
    without running it."""
    if dataset is None:
        dataset = make_dataset(config, seed)
    if config.task.kind == "svm":
        if dataset.labels is None:
            raise ConfigError("svm task needs labeled data", key="data.source")
        if int(dataset.labels.max()) >= config.task.classes:
            raise ConfigError("task.classes smaller than the label range", key="task.classes")
    spec = PartitionSpec(config.data.partition, config.fleet.n, config.data.beta, seed)
    shards = partition(dataset, spec)
    train_shards, testset = split_test(shards, config.data.test_fraction)
    model = _initial_model(config, testset, dataset.dim, seed)

    f = config.fleet
    fleet = build_fleet(
        f.n, f.heterogeneity, f.budget, f.base_comp, f.base_comm, seed,
        shards=train_shards, base_time=f.base_time, comm_time=f.comm_time,
        cost_mode=f.cost_mode, jitter=f.jitter, batch_size=f.batch_size,
        speed_anchor=f.speed_anchor,
    )
    policies = _make_policies(config, fleet, seed)

    if testset.labels is not None:
        if config.task.kind == "kmeans":
            evaluate = lambda m: evaluate_f1(m, testset)  # noqa: E731
        else:
            evaluate = lambda m: evaluate_accuracy(m, testset)  # noqa: E731
    else:
        evaluate = None

    return Coordinator(
        fleet, model, policies,
        mode=config.mode.kind,
        alpha0=config.mode.alpha0,
        eval_every=config.run.eval_every,
        evaluate=evaluate,
        utility_mode=config.run.utility,
        testset=testset if config.run.utility == "test-set" else None,
        sync_charge=config.mode.sync_charge,
    )


def simulate(config: ExperimentConfig, seed: int, dataset: Optional[Dataset] = None) -> RunResult:
    """Execute one seeded run and return its metrics log and final metric."""
    coordinator = build_coordinator(config, seed, dataset)
    records = coordinator.run_to_completion()
    final = (
        coordinator.evaluate(coordinator.global_model)
        if coordinator.evaluate is not None
        else None
    )
    logger.info(
        "seed %d: %d global updates, final %s=%s",
        seed, coordinator.global_version, config.metric_name(),
        "n/a" if final is None else f"{final:.4f}",
    )
    return RunResult(seed, records, final)


def _format(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_metrics_csv(results: list[RunResult], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for result in results:
            for r in result.records:
                writer.writerow([
                    result.seed, _format(r.clock), r.version, r.edge, r.arm,
                    _format(r.reward), _format(r.cost), _format(r.min_budget),
                    _format(r.metric),
                ])


def write_summary_json(results: list[RunResult], config: ExperimentConfig, path) -> None:
    finals = [r.final_metric for r in results if r.final_metric is not None]
    summary = {
        "metric": config.metric_name(),
        "policy": config.policy_name,
        "mode": config.mode.kind,
        "per_seed": {str(r.seed): r.final_metric for r in results},
        "mean": float(np.mean(finals)) if finals else None,
        "std": float(np.std(finals)) if finals else None,
        "updates_per_seed": {str(r.seed): len(r.records) for r in results},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def run(config: ExperimentConfig, out_dir, seeds: Optional[list[int]] = None, plot: bool = True) -> Path:
    """Run every seed and write metrics.csv / summary.json (+ figure)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results = [simulate(config, seed) for seed in (seeds or config.run.seeds)]
    write_metrics_csv(results, out / "metrics.csv")
    write_summary_json(results, config, out / "summary.json")
    (out / "config.toml").write_text(config_to_toml(config), encoding="utf-8")
    if plot:
        report.save_run_figure(
            {r.seed: r.records for r in results}, config.metric_name(), out / "run_metrics.png"
        )
    return out


def sweep(config: ExperimentConfig, axis: str, values: list[float], out_dir, plot: bool = True) -> Path:
    """Re-run the experiment for each axis value and collect final metrics."""
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r} (use H, budget, or N)", key="axis")
    if not values:
        raise ConfigError("sweep needs at least one value", key="values")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for value in values:
        variant = copy.deepcopy(config)
        if axis == "N":
            variant.fleet.n = int(value)
        else:
            setattr(variant.fleet, SWEEP_AXES[axis], float(value))
        for seed in config.run.seeds:
            result = simulate(variant, seed)
            rows.append({
                "axis": axis,
                "value": value,
                "policy": config.policy_name,
                "mode": config.mode.kind,
                "seed": seed,
                "final_metric": result.final_metric,
            })
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for row in rows:
            writer.writerow([row["axis"], _format(row["value"]), row["policy"],
                             row["mode"], row["seed"], _format(row["final_metric"])])
    if plot:
        report.save_sweep_figure(rows, axis, config.metric_name(), out / f"sweep_{axis}.png")
    return out


def _parse_values(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse values {text!r}: {exc}", key="values") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ol4el", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the configured experiment once per seed")
    p_run.add_argument("--config", required=True, help="path to the TOML experiment config")
    p_run.add_argument("--seed", type=int, default=None, help="override: run this single seed")
    p_run.add_argument("--out", default=None, help="output directory (default: run.out)")
    p_run.add_argument("--plot", default=True, action=argparse.BooleanOptionalAction,
                       help="render figures next to the CSV output")

    p_sweep = sub.add_parser("sweep", help="sweep one axis across values")
    p_sweep.add_argument("--config", required=True)
    p_sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values, e.g. 1,3,6,9")
    p_sweep.add_argument("--out", default=None)
    p_sweep.add_argument("--plot", default=True, action=argparse.BooleanOptionalAction)
    return parser


def _setup_logging() -> None:
    level = {"debug": logging.DEBUG, "info": logging.INFO}.get(
        os.environ.get("OL4EL_LOG", "info").lower(), logging.INFO
    )
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")


def main(argv: Optional[list[str]] = None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        config = load_config(args.config)
        out_dir = args.out or config.run.out
        if args.command == "run":
            seeds = [args.seed] if args.seed is not None else None
            out = run(config, out_dir, seeds=seeds, plot=args.plot)
        else:
            out = sweep(config, args.axis, _parse_values(args.values), out_dir, plot=args.plot)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - defensive runtime guard
        logger.exception("run failed: %s", exc)
        return 1
    print(f"wrote {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
