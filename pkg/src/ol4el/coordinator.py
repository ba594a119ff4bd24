"""Cloud-side control loop for synchronous and asynchronous training.

Synchronous mode drives whole rounds: one shared policy picks an interval,
every active edge trains and uploads, and the weighted average replaces
the global model. Asynchronous mode is event-driven: each edge runs on its
own policy and clock, and uploads merge one at a time with a staleness
discount. Both modes stop when budgets run out.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Callable, Optional

from .edge import Fleet
from .errors import BudgetExhausted, ConfigError
from .learners import aggregate_weighted, async_merge, utility

SYNC_EDGE_LABEL = "ALL"


@dataclass(frozen=True)
class MetricsRecord:
    """One row per global update (plus the evaluation cadence)."""

    clock: float
    version: int
    edge: str
    arm: int
    reward: float
    cost: float
    min_budget: float
    metric: Optional[float] = None


class Coordinator:
    """Owns the global model, the policy state(s), and the simulated clock."""

    def __init__(
        self,
        fleet: Fleet,
        global_model,
        policies,
        *,
        mode: str = "sync",
        alpha0: float = 0.5,
        eval_every: int = 1,
        evaluate: Optional[Callable] = None,
        utility_mode: str = "param-delta",
        testset=None,
        sync_charge: str = "max",
    ):
        if mode not in ("sync", "async"):
            raise ConfigError(f"unknown mode {mode!r}", key="mode.kind")
        if sync_charge not in ("max", "mean"):
            raise ConfigError(f"unknown sync charge {sync_charge!r}", key="mode.sync_charge")
        if eval_every < 1:
            raise ConfigError("eval_every must be >= 1", key="run.eval_every")
        expected = 1 if mode == "sync" else len(fleet)
        if len(policies) != expected:
            raise ConfigError(f"{mode} mode needs {expected} policy state(s)")
        self.fleet = fleet
        self.global_model = global_model
        self.policies = list(policies)
        self.mode = mode
        self.alpha0 = float(alpha0)
        self.eval_every = int(eval_every)
        self.evaluate = evaluate
        self.utility_mode = utility_mode
        self.testset = testset
        self.sync_charge = sync_charge
        self.clock = 0.0
        self.global_version = 0
        self.active = {edge.edge_id for edge in fleet}
        self.records: list[MetricsRecord] = []
        self._queue: list[tuple[float, int]] = []
        self._pending: dict[int, tuple] = {}
        if mode == "async":
            self._bootstrap()

    # -- shared helpers -------------------------------------------------

    def _reward(self, prev, new) -> float:
        return utility(prev, new, self.utility_mode, self.testset)

    def _min_budget(self) -> float:
        budgets = [e.budget for e in self.fleet if e.edge_id in self.active]
        return min(budgets) if budgets else 0.0

    def _record(self, edge_label: str, arm: int, reward: float, cost: float) -> None:
        metric = None
        if self.evaluate is not None and self.global_version % self.eval_every == 0:
            metric = self.evaluate(self.global_model)
        self.records.append(
            MetricsRecord(
                clock=self.clock,
                version=self.global_version,
                edge=edge_label,
                arm=arm,
                reward=reward,
                cost=cost,
                min_budget=self._min_budget(),
                metric=metric,
            )
        )

    # -- synchronous protocol -------------------------------------------

    def run_sync_round(self) -> bool:
        """One full round; returns False when the run terminates (the
        shared policy or any edge can no longer afford the round)."""
        policy = self.policies[0]
        try:
            interval = policy.select_arm()
        except BudgetExhausted:
            return False
        locals_, costs, durations, samples = [], [], [], []
        for edge in self.fleet:
            try:
                local, cost, duration, n_samples = edge.run_interval(self.global_model, interval)
            except BudgetExhausted:
                return False
            locals_.append(local)
            costs.append(cost)
            durations.append(duration)
            samples.append(n_samples)
        previous = self.global_model
        self.global_model = aggregate_weighted(locals_, samples)
        self.global_version += 1
        self.clock += max(durations)
        reward = self._reward(previous, self.global_model)
        charge = max(costs) if self.sync_charge == "max" else math.fsum(costs) / len(costs)
        if charge > policy.remaining_budget:
            self._record(SYNC_EDGE_LABEL, interval, reward, charge)
            return False
        policy.update(interval, reward, charge)
        self._record(SYNC_EDGE_LABEL, interval, reward, charge)
        return True

    # -- asynchronous protocol -------------------------------------------

    def _dispatch(self, edge) -> bool:
        """Select an arm for one edge, run its interval against the current
        global model, and enqueue the completion event. Returns False when
        the edge can no longer afford to run (it retires)."""
        policy = self.policies[edge.edge_id]
        try:
            interval = policy.select_arm()
            local, cost, duration, n_samples = edge.run_interval(self.global_model, interval)
        except BudgetExhausted:
            return False
        heapq.heappush(self._queue, (self.clock + duration, edge.edge_id))
        self._pending[edge.edge_id] = (local, cost, interval, n_samples, self.global_version)
        return True

    def _bootstrap(self) -> None:
        for edge in self.fleet:
            if not self._dispatch(edge):
                self.active.discard(edge.edge_id)

    def step_async(self) -> bool:
        """Process the earliest completion event: merge that edge's upload
        with a staleness-discounted weight, update its policy, and
        re-dispatch it. Returns False once no event remains."""
        if not self._queue:
            return False
        completion_time, edge_id = heapq.heappop(self._queue)
        self.clock = completion_time
        local, cost, interval, _samples, base_version = self._pending.pop(edge_id)
        staleness = self.global_version - base_version
        previous = self.global_model
        self.global_model = async_merge(previous, local, staleness, self.alpha0)
        self.global_version += 1
        reward = self._reward(previous, self.global_model)
        policy = self.policies[edge_id]
        if cost <= policy.remaining_budget:
            policy.update(interval, reward, cost)
        self._record(str(edge_id), interval, reward, cost)
        edge = self.fleet.edges[edge_id]
        if not self._dispatch(edge):
            self.active.discard(edge_id)
        return True

    # -- driver -----------------------------------------------------------

    def run_to_completion(self, max_updates: Optional[int] = None) -> list[MetricsRecord]:
        """Loop rounds or events until budgets are exhausted (or the
        optional update cap is hit); the final record always carries a
        fresh metric value."""
        step = self.run_sync_round if self.mode == "sync" else self.step_async
        while max_updates is None or self.global_version < max_updates:
            if not step():
                break
        if self.records and self.records[-1].metric is None and self.evaluate is not None:
            self.records[-1] = replace(self.records[-1], metric=self.evaluate(self.global_model))
        return self.records
