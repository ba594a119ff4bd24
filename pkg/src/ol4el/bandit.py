"""Budget-limited selection of global-update intervals.

Arms are integer intervals 1..I_max (local iterations between two uploads).
Each pull earns a reward in [0, 1] (learning utility) and costs resource
units deducted from a finite budget. Selection runs in two phases: an init
sweep that pulls every affordable arm once, then a dynamic phase that
weights arms by utility-per-cost density times the arm's maximal pull
frequency under the residual budget and samples proportionally.

Arm costs are either known constants ("fixed") or estimated online from
i.i.d. draws ("variable"); the variable index uses an optimistic reward /
pessimistic cost ratio.

Three dynamic-phase weightings are available. The default "greedy" gives
the whole residual budget to the best-density affordable arm (the
exploration comes from the confidence bonus), which concentrates pulls on
the utility-per-cost optimum. "density-frequency" samples proportionally
to density times frequency; "frequency-only" samples proportionally to
frequency alone and so favors cheap arms regardless of utility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import BudgetExhausted, BudgetViolation, ConfigError

DEFAULT_C_FLOOR = 0.01
# Per-update slack for floating accumulation in budget charges.
BUDGET_TOLERANCE = 1e-9

SELECTION_MODES = ("greedy", "density-frequency", "frequency-only")


def fixed_arm_cost(interval: int, c_comp: float, c_comm: float) -> float:
    """Resource cost of one pull of `interval`: that many local iterations
    plus a single upload."""
    return interval * c_comp + c_comm


@dataclass
class ArmStats:
    """Running statistics for one arm."""

    pulls: int = 0
    mean_reward: float = 0.0
    mean_cost: float = 0.0
    fixed_cost: float = 0.0


def ucb_reward_index(stats: ArmStats, t: int) -> float:
    """Optimistic reward index: sample mean plus a confidence bonus that
    shrinks with pulls and grows slowly with the total pull count `t`.

    Unpulled arms return +inf so the init sweep reaches them first.
    """
    if stats.pulls == 0:
        return math.inf
    return stats.mean_reward + math.sqrt(2.0 * math.log(t) / stats.pulls)


def density(stats: ArmStats, t: int, cost_mode: str, c_floor: float = DEFAULT_C_FLOOR) -> float:
    """Estimated utility per unit cost for one arm.

    Fixed mode divides the reward index by the known cost. Variable mode
    pairs an optimistic reward (capped at 1) with a pessimistic cost
    estimate clamped at `c_floor`, using the one-sided radius
    sqrt(ln t / pulls) for both.
    """
    if c_floor <= 0:
        raise ConfigError("c_floor must be positive", key="policy.c_floor")
    if cost_mode == "fixed":
        return ucb_reward_index(stats, t) / stats.fixed_cost
    if stats.pulls == 0:
        return math.inf
    eps = math.sqrt(math.log(t) / stats.pulls)
    optimistic_reward = min(stats.mean_reward + eps, 1.0)
    pessimistic_cost = max(stats.mean_cost - eps, c_floor)
    return optimistic_reward / pessimistic_cost


def max_frequency(cost: float, budget: float) -> int:
    """Largest pull count of an arm of this cost that fits in `budget`."""
    return int(budget // cost)


def probabilistic_select(weights, frequencies, rng: np.random.Generator) -> int:
    """Sample an arm index with probability proportional to its weight.

    When all weights vanish, falls back to a uniform draw over arms that
    are still affordable (frequency >= 1). Raises BudgetExhausted when no
    arm is affordable at all.
    """
    total = math.fsum(weights)
    if total > 0.0:
        u = rng.random() * total
        acc = 0.0
        for i, w in enumerate(weights):
            acc += w
            if u < acc:
                return i
        return max(i for i, w in enumerate(weights) if w > 0.0)
    feasible = [i for i, f in enumerate(frequencies) if f >= 1]
    if not feasible:
        raise BudgetExhausted("no affordable arm remains")
    return feasible[int(rng.integers(len(feasible)))]


class BanditState:
    """Arm statistics, residual budget and the two-phase selection rule.

    One instance serves a whole fleet in synchronous mode or a single edge
    in asynchronous mode. All methods are driven single-threaded by the
    simulation loop.
    """

    def __init__(
        self,
        n_arms: int,
        budget: float,
        rng: np.random.Generator,
        *,
        cost_mode: str = "fixed",
        fixed_costs=None,
        c_floor: float = DEFAULT_C_FLOOR,
        selection: str = "greedy",
    ):
        if n_arms < 1:
            raise ConfigError("need at least one arm", key="policy.i_max")
        if budget < 0:
            raise ConfigError("budget must be non-negative", key="fleet.budget")
        if cost_mode not in ("fixed", "variable"):
            raise ConfigError(f"unknown cost mode {cost_mode!r}", key="fleet.cost_mode")
        if selection not in SELECTION_MODES:
            raise ConfigError(f"unknown selection mode {selection!r}", key="policy.selection")
        if c_floor <= 0:
            raise ConfigError("c_floor must be positive", key="policy.c_floor")
        if cost_mode == "fixed":
            if fixed_costs is None or len(fixed_costs) != n_arms:
                raise ConfigError("fixed cost mode needs one cost per arm")
            if any(c <= 0 for c in fixed_costs):
                raise ConfigError("fixed arm costs must be positive")
        self.arms = [
            ArmStats(fixed_cost=float(fixed_costs[i]) if fixed_costs is not None else 0.0)
            for i in range(n_arms)
        ]
        self.total_pulls = 0
        self.remaining_budget = float(budget)
        self.cost_mode = cost_mode
        self.c_floor = float(c_floor)
        self.selection = selection
        self.rng = rng

    @property
    def n_arms(self) -> int:
        return len(self.arms)

    def planning_cost(self, index: int) -> float:
        """Cost used for affordability and frequency: the known cost in
        fixed mode, the clamped pessimistic estimate in variable mode
        (c_floor for unpulled arms)."""
        stats = self.arms[index]
        if self.cost_mode == "fixed":
            return stats.fixed_cost
        if stats.pulls == 0:
            return self.c_floor
        eps = math.sqrt(math.log(max(self.total_pulls, 1)) / stats.pulls)
        return max(stats.mean_cost - eps, self.c_floor)

    @property
    def phase(self) -> str:
        """"init" while some affordable arm is unpulled, else "dynamic"."""
        for i, stats in enumerate(self.arms):
            if stats.pulls == 0 and self.planning_cost(i) <= self.remaining_budget:
                return "init"
        return "dynamic"

    def select_arm(self) -> int:
        """Return the next interval (1-based) to play.

        Init phase returns the lowest affordable unpulled arm. The dynamic
        phase weights each arm by its density (unpulled sentinels replaced
        with the largest finite density) times its maximal frequency under
        the residual budget, then samples proportionally. Raises
        BudgetExhausted when nothing is affordable.
        """
        for i, stats in enumerate(self.arms):
            if stats.pulls == 0 and self.planning_cost(i) <= self.remaining_budget:
                return i + 1
        t = max(self.total_pulls, 1)
        densities = [density(s, t, self.cost_mode, self.c_floor) for s in self.arms]
        finite = [d for d in densities if math.isfinite(d)]
        fallback = max(finite) if finite else 0.0
        densities = [d if math.isfinite(d) else fallback for d in densities]
        frequencies = [
            max_frequency(self.planning_cost(i), self.remaining_budget)
            for i in range(self.n_arms)
        ]
        if self.selection == "frequency-only":
            weights = [float(f) for f in frequencies]
        elif self.selection == "density-frequency":
            weights = [max(d, 0.0) * f for d, f in zip(densities, frequencies)]
        else:
            # Greedy budget plan: walk arms by descending density (ties to
            # the smaller interval) and give the first affordable arm the
            # whole residual budget.
            weights = [0.0] * self.n_arms
            for i in sorted(range(self.n_arms), key=lambda j: (-densities[j], j)):
                if frequencies[i] >= 1:
                    weights[i] = float(frequencies[i])
                    break
        return probabilistic_select(weights, frequencies, self.rng) + 1

    def update(self, interval: int, reward: float, cost: float) -> None:
        """Record one pull: advance the arm's running means and charge the
        budget. Rewards must already be normalized to [0, 1]."""
        if not 0.0 <= reward <= 1.0:
            raise ValueError(f"reward {reward} outside [0, 1]")
        if cost < 0.0:
            raise ValueError(f"negative cost {cost}")
        if cost > self.remaining_budget + BUDGET_TOLERANCE:
            raise BudgetViolation(
                f"cost {cost} exceeds remaining budget {self.remaining_budget}"
            )
        stats = self.arms[interval - 1]
        stats.pulls += 1
        stats.mean_reward += (reward - stats.mean_reward) / stats.pulls
        stats.mean_cost += (cost - stats.mean_cost) / stats.pulls
        self.total_pulls += 1
        self.remaining_budget = max(self.remaining_budget - cost, 0.0)


class FixedIntervalPolicy:
    """Non-adaptive baseline: always plays the same interval while its
    nominal cost still fits in the residual budget."""

    def __init__(self, interval: int, nominal_cost: float, budget: float):
        if interval < 1:
            raise ConfigError("interval must be >= 1", key="policy.interval")
        if nominal_cost <= 0:
            raise ConfigError("nominal cost must be positive")
        self.interval = int(interval)
        self.nominal_cost = float(nominal_cost)
        self.remaining_budget = float(budget)
        self.total_pulls = 0

    def select_arm(self) -> int:
        if self.nominal_cost > self.remaining_budget:
            raise BudgetExhausted("fixed interval no longer affordable")
        return self.interval

    def update(self, interval: int, reward: float, cost: float) -> None:
        if cost > self.remaining_budget + BUDGET_TOLERANCE:
            raise BudgetViolation(
                f"cost {cost} exceeds remaining budget {self.remaining_budget}"
            )
        self.total_pulls += 1
        self.remaining_budget = max(self.remaining_budget - cost, 0.0)
