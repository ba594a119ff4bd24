"""Simulated heterogeneous edge servers.

Each edge owns a data shard, a relative processing speed, a resource
budget, and per-iteration / per-upload cost means. Costs are charged in
abstract resource units (milliseconds in the default experiments);
durations advance the simulated clock.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import Dataset
from .errors import BudgetExhausted, ConfigError
from .learners import Batch, local_iterate
from .seeding import EDGE_STREAM, spawn_rng

SPEED_ANCHORS = ("slowest", "fastest")


@dataclass
class EdgeServer:
    """One edge: shard, speed, budget meter and cost model."""

    edge_id: int
    speed: float
    budget: float
    c_comp_mean: float
    c_comm_mean: float
    shard: Dataset
    rng: np.random.Generator
    base_time: float
    comm_time: float
    batch_size: int = 32
    cost_mode: str = "fixed"
    jitter: float = 0.2
    cursor: int = 0

    def fixed_cost(self, interval: int) -> float:
        return interval * self.c_comp_mean + self.c_comm_mean

    def draw_costs(self, interval: int) -> tuple[float, float]:
        """Compute-plus-communication cost of running `interval` local
        iterations then uploading once. Variable mode draws each
        iteration's cost uniformly within +-jitter of the mean."""
        if interval < 1:
            raise ValueError("interval must be >= 1")
        if self.cost_mode == "fixed":
            return interval * self.c_comp_mean, self.c_comm_mean
        j = self.jitter
        comp = self.rng.uniform(
            (1.0 - j) * self.c_comp_mean, (1.0 + j) * self.c_comp_mean, size=interval
        ).sum()
        comm = float(self.rng.uniform((1.0 - j) * self.c_comm_mean, (1.0 + j) * self.c_comm_mean))
        return float(comp), comm

    def duration(self, interval: int) -> float:
        """Simulated wall-clock time of one interval plus the upload."""
        return interval * self.base_time / self.speed + self.comm_time

    def _next_batch(self) -> Batch:
        n = len(self.shard)
        end = min(self.cursor + self.batch_size, n)
        batch = Batch(
            self.shard.points[self.cursor:end],
            None if self.shard.labels is None else self.shard.labels[self.cursor:end],
        )
        self.cursor = 0 if end == n else end
        return batch

    def run_interval(self, global_model, interval: int):
        """Copy the global model, train for `interval` successive batches
        (the cursor wraps cyclically), charge the drawn cost, and return
        (local_model, cost, duration, samples).

        Raises BudgetExhausted without any side effect on the budget or
        cursor when the drawn cost does not fit in the remaining budget.
        """
        if len(self.shard) == 0:
            raise ConfigError(f"edge {self.edge_id} has an empty shard")
        comp, comm = self.draw_costs(interval)
        cost = comp + comm
        if cost > self.budget:
            raise BudgetExhausted(
                f"edge {self.edge_id}: cost {cost:.3f} exceeds budget {self.budget:.3f}"
            )
        local = global_model.copy()
        samples = 0
        for _ in range(interval):
            batch = self._next_batch()
            samples += len(batch)
            local = local_iterate(local, batch)
        self.budget -= cost
        return local, cost, self.duration(interval), samples


@dataclass
class Fleet:
    """The edge servers participating in one run."""

    edges: list[EdgeServer]
    heterogeneity: float = 1.0

    def __iter__(self):
        return iter(self.edges)

    def __len__(self) -> int:
        return len(self.edges)


def fleet_speeds(n: int, heterogeneity: float, anchor: str = "slowest") -> np.ndarray:
    """Evenly spaced speeds with max/min ratio = heterogeneity.

    anchor "slowest" pins the slowest edge at speed 1 (speeds on [1, H]);
    anchor "fastest" pins the fastest at speed 1 (speeds on [1/H, 1]), so
    raising H slows the rest of the fleet down relative to the fastest.
    """
    if n < 1:
        raise ConfigError("need at least one edge", key="fleet.n")
    if heterogeneity < 1.0:
        raise ConfigError("heterogeneity must be >= 1", key="fleet.heterogeneity")
    if anchor not in SPEED_ANCHORS:
        raise ConfigError(f"unknown speed anchor {anchor!r}", key="fleet.speed_anchor")
    if n == 1:
        return np.array([1.0])
    if anchor == "slowest":
        return np.linspace(1.0, heterogeneity, n)
    return np.linspace(1.0 / heterogeneity, 1.0, n)


def build_fleet(
    n: int,
    heterogeneity: float,
    base_budget: float,
    base_comp: float,
    base_comm: float,
    seed: int = 0,
    *,
    shards: Optional[list[Dataset]] = None,
    base_time: Optional[float] = None,
    comm_time: Optional[float] = None,
    cost_mode: str = "fixed",
    jitter: float = 0.2,
    batch_size: int = 32,
    speed_anchor: str = "slowest",
) -> Fleet:
    """Build N edges with speeds spanning the heterogeneity ratio.

    Per-iteration cost and time scale inversely with speed (a faster edge
    finishes an iteration sooner and cheaper); communication cost is
    speed-independent. All edges receive the same budget.
    """
    if base_budget < 0 or base_comp <= 0 or base_comm <= 0:
        raise ConfigError("invalid cost or budget parameters", key="fleet")
    if cost_mode not in ("fixed", "variable"):
        raise ConfigError(f"unknown cost mode {cost_mode!r}", key="fleet.cost_mode")
    if not 0.0 <= jitter < 1.0:
        raise ConfigError("jitter must lie in [0, 1)", key="fleet.jitter")
    speeds = fleet_speeds(n, heterogeneity, speed_anchor)
    base_time = base_comp if base_time is None else base_time
    comm_time = base_comm if comm_time is None else comm_time
    if shards is not None and len(shards) != n:
        raise ConfigError("need one shard per edge", key="data.partition")
    edges = []
    for i, speed in enumerate(speeds):
        shard = shards[i] if shards is not None else Dataset(np.zeros((1, 1)))
        edges.append(
            EdgeServer(
                edge_id=i,
                speed=float(speed),
                budget=float(base_budget),
                c_comp_mean=base_comp / float(speed),
                c_comm_mean=float(base_comm),
                shard=shard,
                rng=spawn_rng(seed, EDGE_STREAM, i),
                base_time=float(base_time),
                comm_time=float(comm_time),
                batch_size=int(batch_size),
                cost_mode=cost_mode,
                jitter=float(jitter),
            )
        )
    return Fleet(edges, float(heterogeneity))
