import numpy as np
import pandas as pd
import pytest

from app.exceptions import PolicyHorizonError
from app.models.planners import KernelFamily, NoObsController, RewardFamily, plan_optimal_deception, \
    plan_robust_dynamics, plan_robust_rewards
from app.services.simulation_service import (
    NoObsAdapter,
    PolicyController,
    SimTrace,
    average_reward_curve,
    mismatch_sweep,
    monte_carlo,
    simulate_run,
)
from app.models.schemas import parse_scenario
from tests.conftest import COPS_DOC, cops_variant

RUNS = 100
HORIZON = 2000


def _trace(rewards):
    n = len(rewards)
    zeros = np.zeros(n, dtype=np.int64)
    return SimTrace(seed=0, states=zeros, beliefs=zeros, actions=zeros, rewards=np.asarray(rewards, dtype=float))


class TestAverageRewardCurve:
    def test_constant_rewards(self):
        curve = average_reward_curve(_trace([10.0] * 6))
        np.testing.assert_allclose(curve.to_numpy(), 10.0)
        assert curve.index.tolist() == [1, 2, 3, 4, 5, 6]

    def test_first_reward_counts(self):
        curve = average_reward_curve(_trace([0.0, 10.0]))
        assert curve.loc[1] == 0.0
        assert curve.loc[2] == 5.0


class TestSimulateRun:
    def test_cops_nominal_policy(self, cops_bundle):
        horizon = 300
        controller = PolicyController(cops_bundle.nominal_policy(horizon), cops_bundle.belief_count)
        trace = simulate_run(cops_bundle, controller, horizon, seed=1)
        assert len(trace.rewards) == horizon + 1
        np.testing.assert_array_equal(trace.rewards[:8], 0.0)
        assert trace.rewards[8] != 0.0
        # Once the adversary settles on the true goal it never leaves it
        detected = np.flatnonzero(trace.rewards == -10.0)
        assert len(detected) > 0
        np.testing.assert_array_equal(trace.rewards[detected[0]:], -10.0)

    def test_camo_nominal_policy_earns_nothing(self, camo_bundle):
        horizon = 100
        controller = PolicyController(camo_bundle.nominal_policy(horizon), camo_bundle.belief_count)
        trace = simulate_run(camo_bundle, controller, horizon, seed=3)
        np.testing.assert_array_equal(trace.rewards, 0.0)

    def test_same_seed_same_trace(self, cops_bundle, cops_product):
        policy, _ = plan_optimal_deception(cops_product, 100)
        controller = PolicyController(policy, cops_bundle.belief_count)
        first = simulate_run(cops_bundle, controller, 100, seed=11).to_frame()
        second = simulate_run(cops_bundle, controller, 100, seed=11).to_frame()
        pd.testing.assert_frame_equal(first, second)

    def test_rewards_match_belief_reward(self, cops_bundle, cops_product):
        policy, _ = plan_optimal_deception(cops_product, 150)
        trace = simulate_run(cops_bundle, PolicyController(policy, 3), 150, seed=4)
        expected = cops_bundle.reward.values[trace.states, trace.beliefs, trace.actions]
        np.testing.assert_array_equal(trace.rewards, expected)

    def test_horizon_mismatch(self, cops_bundle):
        controller = PolicyController(cops_bundle.nominal_policy(10), 3)
        with pytest.raises(PolicyHorizonError):
            simulate_run(cops_bundle, controller, 11, seed=0)

    def test_revealed_beliefs_follow_optimal_policy(self, cops_bundle, cops_product):
        policy, values = plan_optimal_deception(cops_product, 80)
        ctrl = NoObsController(cops_product, policy, values, initial=cops_bundle.initial_distribution())
        trace = simulate_run(cops_bundle, NoObsAdapter(ctrl), 80, seed=2, observe_every=1)
        for t in range(81):
            x = cops_product.index(trace.states[t], trace.beliefs[t])
            assert trace.actions[t] == policy.action(t, x)


class TestMonteCarlo:
    def test_single_run(self, cops_bundle, cops_product):
        policy, _ = plan_optimal_deception(cops_product, 60)
        controller = PolicyController(policy, 3)
        stats = monte_carlo(cops_bundle, controller, 1, 60, base_seed=9)
        curve = average_reward_curve(simulate_run(cops_bundle, controller, 60, seed=9))
        np.testing.assert_array_equal(stats.mean, curve.to_numpy())
        np.testing.assert_array_equal(stats.std, 0.0)
        assert stats.runs == 1

    def test_curves_within_reward_range(self, cops_bundle, cops_product):
        policy, _ = plan_optimal_deception(cops_product, 200)
        stats = monte_carlo(cops_bundle, PolicyController(policy, 3), 10, 200, base_seed=0)
        assert (stats.mean >= -10.0).all() and (stats.mean <= 10.0).all()
        frame = stats.to_frame()
        assert list(frame.columns) == ["t", "mean_avg_reward", "std_avg_reward"]
        assert len(frame) == 201

    def test_parallel_matches_sequential(self, cops_bundle, cops_product):
        policy, _ = plan_optimal_deception(cops_product, 50)
        controller = PolicyController(policy, 3)
        sequential = monte_carlo(cops_bundle, controller, 4, 50, base_seed=0, n_jobs=1)
        parallel = monte_carlo(cops_bundle, controller, 4, 50, base_seed=0, n_jobs=2)
        np.testing.assert_array_equal(sequential.mean, parallel.mean)
        np.testing.assert_array_equal(sequential.std, parallel.std)


class TestMismatchSweep:
    def test_self_comparison_is_zero(self):
        frame = mismatch_sweep(parse_scenario(COPS_DOC), 0.1, [0.1], runs=3, horizon=40, base_seed=0)
        assert frame.columns.tolist() == ["p_true", "delta"]
        assert frame.loc[0, "delta"] == 0.0

    def test_self_comparison_runs_no_simulations(self, monkeypatch):
        calls = []
        monkeypatch.setattr("app.services.simulation_service.monte_carlo", lambda *a, **k: calls.append(a))
        mismatch_sweep(parse_scenario(COPS_DOC), 0.1, [0.1, 0.1], runs=3, horizon=20, base_seed=0)
        assert calls == []

    def test_empty_grid(self):
        with pytest.raises(ValueError):
            mismatch_sweep(parse_scenario(COPS_DOC), 0.1, [], runs=1, horizon=5, base_seed=0)


@pytest.mark.slow
class TestFullScaleCops:
    """100 runs over T=2000 on the cops layout"""

    @pytest.fixture(scope="class")
    def optimal_mean(self, cops_bundle, cops_product):
        policy, _ = plan_optimal_deception(cops_product, HORIZON)
        stats = monte_carlo(cops_bundle, PolicyController(policy, 3), RUNS, HORIZON, base_seed=0)
        return stats.terminal_mean

    def test_nominal_policy_is_worst(self, cops_bundle):
        controller = PolicyController(cops_bundle.nominal_policy(HORIZON), 3)
        stats = monte_carlo(cops_bundle, controller, RUNS, HORIZON, base_seed=0)
        assert -10.0 <= stats.terminal_mean <= -9.0

    def test_optimal_deception(self, optimal_mean):
        assert optimal_mean == pytest.approx(3.9, abs=0.5)

    def test_robust_dynamics(self, cops_bundle, optimal_mean):
        family = KernelFamily.interval("p", 0.05, 0.2, lambda p: cops_variant(p=p).kernel)
        policy, _ = plan_robust_dynamics(cops_bundle.agent, family, cops_bundle.reward, HORIZON)
        stats = monte_carlo(cops_bundle, PolicyController(policy, 3), RUNS, HORIZON, base_seed=0)
        assert stats.terminal_mean == pytest.approx(3.5, abs=0.5)
        assert stats.terminal_mean <= optimal_mean

    def test_robust_rewards(self, cops_bundle, optimal_mean):
        family = RewardFamily.from_bounds(cops_variant(reward_plus=1.0).reward, cops_variant(reward_plus=20.0).reward)
        policy, _ = plan_robust_rewards(cops_bundle.agent, cops_bundle.kernel, family, HORIZON)
        stats = monte_carlo(cops_bundle, PolicyController(policy, 3), RUNS, HORIZON, base_seed=0)
        assert stats.terminal_mean == pytest.approx(3.5, abs=0.5)
        assert stats.terminal_mean <= optimal_mean

    def test_no_observation_controller(self, cops_bundle, cops_product, optimal_mean):
        policy, values = plan_optimal_deception(cops_product, HORIZON)
        ctrl = NoObsController(cops_product, policy, values)
        stats = monte_carlo(cops_bundle, NoObsAdapter(ctrl), RUNS, HORIZON, base_seed=0)
        assert 0.0 < stats.terminal_mean < optimal_mean

    def test_forbidden_false_goals(self, optimal_mean):
        means = {}
        for name, forbidden in {"both": [[6, 5], [4, 3]], "one": [[6, 5]]}.items():
            bundle = cops_variant(forbidden=forbidden)
            policy, _ = plan_optimal_deception(bundle.product(), HORIZON)
            stats = monte_carlo(bundle, PolicyController(policy, 3), RUNS, HORIZON, base_seed=0)
            means[name] = stats.terminal_mean
        assert means["both"] < means["one"]
        assert abs(means["one"] - optimal_mean) <= 0.3

    def test_mismatch_trend(self):
        frame = mismatch_sweep(parse_scenario(COPS_DOC), 0.1, [0.1, 0.15, 0.25, 0.3], RUNS, HORIZON, 0)
        delta = frame.set_index("p_true")["delta"].abs()
        assert delta[0.1] < 0.3
        assert delta[[0.25, 0.3]].mean() > delta[[0.1, 0.15]].mean()


@pytest.mark.slow
class TestFullScaleCamouflage:
    def test_optimal_beats_nominal(self, camo_bundle):
        product = camo_bundle.product()
        policy, _ = plan_optimal_deception(product, HORIZON)
        stats = monte_carlo(camo_bundle, PolicyController(policy, camo_bundle.belief_count), RUNS, HORIZON, 0)
        assert stats.terminal_mean > 0.0

    def test_leaves_goal_once_seen(self, camo_bundle):
        horizon = 300
        product = camo_bundle.product()
        policy, _ = plan_optimal_deception(product, horizon)
        trace = simulate_run(camo_bundle, PolicyController(policy, camo_bundle.belief_count), horizon, seed=0)
        tg = camo_bundle.grid.state_id((1, 2))
        seen = [t for t in range(horizon - 10) if trace.states[t] == tg and trace.beliefs[t] == tg]
        assert seen
        for t in seen:
            assert (trace.states[t + 1:t + 6] != tg).any(), f"stayed on the goal after being seen at t={t}"
