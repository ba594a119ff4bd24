"""Edge server tests: fleet construction, cost draws, interval runs."""

import numpy as np
import pytest

from ol4el.data import Dataset
from ol4el.edge import build_fleet, fleet_speeds
from ol4el.errors import BudgetExhausted, ConfigError
from ol4el.learners import KMeansState


def shard(n=64, d=1, labeled=False, seed=0):
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, 2, size=n) if labeled else None
    return Dataset(rng.normal(size=(n, d)), labels)


def small_fleet(**kwargs):
    defaults = dict(
        n=kwargs.pop("n", 2),
        heterogeneity=kwargs.pop("heterogeneity", 1.0),
        base_budget=kwargs.pop("base_budget", 100.0),
        base_comp=kwargs.pop("base_comp", 2.0),
        base_comm=kwargs.pop("base_comm", 5.0),
    )
    n = defaults["n"]
    kwargs.setdefault("shards", [shard(seed=i) for i in range(n)])
    return build_fleet(**defaults, **kwargs)


class TestBuildFleet:
    def test_homogeneous_fleet(self):
        fleet = small_fleet(n=3)
        assert [e.speed for e in fleet] == [1.0, 1.0, 1.0]

    def test_linear_speed_spacing(self):
        fleet = small_fleet(n=3, heterogeneity=5.0, shards=[shard(seed=i) for i in range(3)])
        assert [e.speed for e in fleet] == [1.0, 3.0, 5.0]
        assert max(e.speed for e in fleet) / min(e.speed for e in fleet) == pytest.approx(5.0)

    def test_comp_cost_scales_inversely_with_speed(self):
        fleet = small_fleet(n=2, heterogeneity=4.0, base_comp=8.0)
        assert [e.c_comp_mean for e in fleet] == [8.0, 2.0]

    def test_fastest_anchor_pins_fastest_edge(self):
        fleet = small_fleet(n=2, heterogeneity=4.0, base_comp=8.0, speed_anchor="fastest")
        assert [e.speed for e in fleet] == [0.25, 1.0]
        assert [e.c_comp_mean for e in fleet] == [32.0, 8.0]

    @pytest.mark.parametrize("anchor", ["slowest", "fastest"])
    @pytest.mark.parametrize("h", [1.0, 2.5, 9.0, 15.0])
    def test_heterogeneity_identity(self, anchor, h):
        speeds = fleet_speeds(5, h, anchor)
        assert speeds.max() / speeds.min() == pytest.approx(h, abs=1e-9)

    def test_single_edge_speed_one(self):
        assert fleet_speeds(1, 7.0).tolist() == [1.0]

    def test_invalid_ranges_rejected(self):
        with pytest.raises(ConfigError):
            fleet_speeds(0, 1.0)
        with pytest.raises(ConfigError):
            fleet_speeds(3, 0.5)


class TestDrawCosts:
    def test_fixed_mode_is_deterministic(self):
        fleet = small_fleet()
        comp, comm = fleet.edges[0].draw_costs(3)
        assert (comp, comm) == (6.0, 5.0)

    def test_zero_jitter_matches_fixed(self):
        fixed = small_fleet().edges[0]
        jittered = small_fleet(cost_mode="variable", jitter=0.0).edges[0]
        assert jittered.draw_costs(3) == fixed.draw_costs(3)

    def test_monte_carlo_mean_within_two_percent(self):
        edge = small_fleet(cost_mode="variable", jitter=0.2).edges[0]
        draws = np.array([edge.draw_costs(1)[0] for _ in range(10_000)])
        assert abs(draws.mean() - edge.c_comp_mean) / edge.c_comp_mean < 0.02

    def test_jitter_bounds_respected(self):
        edge = small_fleet(cost_mode="variable", jitter=0.3).edges[0]
        lo, hi = 0.7 * edge.c_comp_mean, 1.3 * edge.c_comp_mean
        for _ in range(500):
            comp, comm = edge.draw_costs(1)
            assert lo <= comp <= hi
            assert 0.7 * edge.c_comm_mean <= comm <= 1.3 * edge.c_comm_mean

    def test_seeded_determinism(self):
        a = small_fleet(cost_mode="variable").edges[0]
        b = small_fleet(cost_mode="variable").edges[0]
        assert [a.draw_costs(2) for _ in range(10)] == [b.draw_costs(2) for _ in range(10)]


class TestRunInterval:
    def model(self):
        return KMeansState(np.zeros((1, 1)))

    def test_duration_formula(self):
        # 3 * 10 / 2 + 5 = 20
        fleet = build_fleet(
            1, 1.0, 100.0, 2.0, 5.0, base_time=10.0, comm_time=5.0, shards=[shard()]
        )
        edge = fleet.edges[0]
        edge.speed = 2.0
        _, _, duration, _ = edge.run_interval(self.model(), 3)
        assert duration == pytest.approx(20.0)

    def test_cost_deducted_from_budget(self):
        edge = small_fleet().edges[0]
        _, cost, _, _ = edge.run_interval(self.model(), 3)
        assert cost == 11.0
        assert edge.budget == pytest.approx(89.0)

    def test_overdraft_leaves_state_untouched(self):
        edge = small_fleet(base_budget=10.0).edges[0]
        cursor_before = edge.cursor
        with pytest.raises(BudgetExhausted):
            edge.run_interval(self.model(), 3)  # cost 11 > budget 10
        assert edge.budget == 10.0
        assert edge.cursor == cursor_before

    def test_cursor_wraps_cyclically(self):
        data = Dataset(np.arange(8.0).reshape(8, 1))
        fleet = build_fleet(1, 1.0, 1000.0, 1.0, 1.0, shards=[data], batch_size=2)
        edge = fleet.edges[0]
        # interval 6 over 4 batches must consume batches 1..4 then 1, 2 again
        _, _, _, samples = edge.run_interval(self.model(), 6)
        assert samples == 12
        assert edge.cursor == 4  # wrapped past the end once, then two more batches

    def test_samples_counted(self):
        edge = small_fleet().edges[0]
        _, _, _, samples = edge.run_interval(self.model(), 2)
        assert samples == 2 * edge.batch_size

    def test_cost_accounting_matches_budget_drain(self):
        edge = small_fleet(base_budget=60.0).edges[0]
        total = 0.0
        while True:
            try:
                _, cost, _, _ = edge.run_interval(self.model(), 2)
            except BudgetExhausted:
                break
            total += cost
        assert 60.0 - edge.budget == pytest.approx(total, abs=1e-9)

    def test_short_tail_batch_then_wrap(self):
        data = Dataset(np.arange(5.0).reshape(5, 1))
        fleet = build_fleet(1, 1.0, 1000.0, 1.0, 1.0, shards=[data], batch_size=2)
        edge = fleet.edges[0]
        _, _, _, samples = edge.run_interval(self.model(), 3)
        assert samples == 5  # batches of 2, 2, then the short tail of 1
        assert edge.cursor == 0
