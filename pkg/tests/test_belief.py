import numpy as np
import pytest

from app.exceptions import InfeasibleConstraintError, ProductConstructionError
from app.models.belief import BeliefKernel, BeliefReward, apply_forbidden_states, build_product_mdp
from app.models.mdp import Mdp, backward_induction
from tests.conftest import cops_variant


def _corridor():
    """Three cells in a row; actions: 0 left, 1 stay, 2 right (edges masked)"""
    rows, permissible = {}, np.zeros((3, 3), dtype=bool)
    for s in range(3):
        for a, delta in enumerate((-1, 0, 1)):
            if 0 <= s + delta < 3:
                permissible[s, a] = True
                rows[(s, a)] = [(s + delta, 1.0)]
    return Mdp.from_rows(3, 3, rows, np.zeros((3, 3)), permissible)


def _flip_kernel(agent, q=0.25):
    # Belief flips with probability q whatever the action
    return BeliefKernel.from_function(
        agent.state_count, 2, agent.action_count,
        lambda s, b, a: {b: 1 - q, 1 - b: q},
        agent.permissible,
    )


def _belief_reward(agent):
    return BeliefReward.from_function(agent.state_count, 2, agent.action_count, lambda s, b, a: float(s == 2 and b == 0))


class TestBuildProduct:
    def test_dimensions_and_indexing(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent), _belief_reward(agent))
        assert product.mdp.state_count == 6
        assert product.mdp.action_count == 3
        assert product.index(2, 1) == 5
        np.testing.assert_array_equal(product.mdp.permissible[product.index(0, 1)], [False, True, True])

    def test_kernel_factorizes(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent), _belief_reward(agent))
        # (s=1, b=0) moving right lands in s=2, belief 0 w.p. 0.75 and belief 1 w.p. 0.25
        row = dict(product.mdp.distribution(product.index(1, 0), 2))
        assert row == {product.index(2, 0): pytest.approx(0.75), product.index(2, 1): pytest.approx(0.25)}

    def test_rows_normalized(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent, q=0.0), _belief_reward(agent))
        sums = np.asarray(product.mdp.kernel.sum(axis=1)).reshape(product.mdp.state_count, -1)
        np.testing.assert_allclose(sums[product.mdp.permissible], 1.0, atol=1e-12)
        np.testing.assert_array_equal(sums[~product.mdp.permissible], 0.0)

    def test_rewards_carried_over(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent), _belief_reward(agent))
        assert product.mdp.rewards[product.index(2, 0), 1] == 1.0
        assert product.mdp.rewards[product.index(2, 1), 1] == 0.0

    def test_missing_kernel_entry(self):
        agent = _corridor()
        kernel = _flip_kernel(agent)
        probs = kernel.probs.copy()
        probs[1, 0, 2] = np.nan
        with pytest.raises(ProductConstructionError) as info:
            build_product_mdp(agent, BeliefKernel(probs), _belief_reward(agent))
        assert any("missing" in v for v in info.value.violations)

    def test_unnormalized_kernel(self):
        agent = _corridor()
        probs = _flip_kernel(agent).probs.copy()
        probs[0, 1, 1] = [0.5, 0.4]
        with pytest.raises(ProductConstructionError):
            build_product_mdp(agent, BeliefKernel(probs), _belief_reward(agent))

    def test_missing_reward(self):
        agent = _corridor()
        values = _belief_reward(agent).values.copy()
        values[1, 1, 1] = np.nan
        with pytest.raises(ProductConstructionError):
            build_product_mdp(agent, _flip_kernel(agent), BeliefReward(values))

    def test_shape_mismatch(self):
        agent = _corridor()
        with pytest.raises(ProductConstructionError):
            build_product_mdp(agent, _flip_kernel(agent), BeliefReward(np.zeros((3, 3, 3))))


class TestForbiddenStates:
    def test_masks_entering_actions(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent), _belief_reward(agent))
        masked = apply_forbidden_states(product, [2], start=0)
        assert not masked.agent.permissible[1, 2]
        assert masked.agent.permissible[1, 0] and masked.agent.permissible[1, 1]
        np.testing.assert_array_equal(masked.mdp.permissible[masked.index(1, 0)], [True, True, False])
        np.testing.assert_array_equal(masked.mdp.permissible[masked.index(1, 1)], [True, True, False])

    def test_forbidden_state_keeps_its_actions(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent), _belief_reward(agent))
        masked = apply_forbidden_states(product, [2], start=0)
        np.testing.assert_array_equal(masked.agent.permissible[2], agent.permissible[2])

    def test_idempotent(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent), _belief_reward(agent))
        once = apply_forbidden_states(product, [2], start=0)
        twice = apply_forbidden_states(once, [2], start=0)
        np.testing.assert_array_equal(twice.agent.permissible, once.agent.permissible)
        np.testing.assert_array_equal(twice.mdp.permissible, once.mdp.permissible)

    def test_idempotent_on_cops_layout(self):
        bundle = cops_variant(forbidden=[[6, 5], [4, 3]])
        once = bundle.product()
        twice = apply_forbidden_states(once, bundle.forbidden, start=bundle.start)
        np.testing.assert_array_equal(twice.agent.permissible, once.agent.permissible)

    def test_empty_set_is_identity(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent), _belief_reward(agent))
        assert apply_forbidden_states(product, []) is product

    def test_forbidden_start(self):
        agent = _corridor()
        product = build_product_mdp(agent, _flip_kernel(agent), _belief_reward(agent))
        with pytest.raises(InfeasibleConstraintError) as info:
            apply_forbidden_states(product, [0], start=0)
        assert info.value.state == 0

    def test_state_left_without_actions(self):
        # State 0 can only move on to state 1
        rows = {(0, 0): [(1, 1.0)], (1, 0): [(1, 1.0)], (2, 0): [(2, 1.0)]}
        agent = Mdp.from_rows(3, 1, rows, np.zeros((3, 1)))
        kernel = BeliefKernel(np.ones((3, 1, 1, 1)))
        product = build_product_mdp(agent, kernel, BeliefReward(np.zeros((3, 1, 1))))
        with pytest.raises(InfeasibleConstraintError) as info:
            apply_forbidden_states(product, [1], start=0)
        assert info.value.state == 0

    def test_unreachable_states_are_not_checked(self):
        rows = {(0, 0): [(0, 1.0)], (1, 0): [(2, 1.0)], (2, 0): [(2, 1.0)]}
        agent = Mdp.from_rows(3, 1, rows, np.zeros((3, 1)))
        kernel = BeliefKernel(np.ones((3, 1, 1, 1)))
        product = build_product_mdp(agent, kernel, BeliefReward(np.zeros((3, 1, 1))))
        masked = apply_forbidden_states(product, [2], start=0)
        # State 1 only leads into the forbidden state but cannot be reached from 0
        assert masked.agent.permissible[1, 0]
        with pytest.raises(InfeasibleConstraintError):
            apply_forbidden_states(product, [2])


class TestScenarioProducts:
    """Both scenario belief kernels give exactly normalized product rows"""

    @pytest.mark.parametrize("name", ["cops_bundle", "camo_bundle"])
    def test_rows_sum_to_one(self, name, request):
        bundle = request.getfixturevalue(name)
        product = bundle.product()
        sums = np.asarray(product.mdp.kernel.sum(axis=1)).reshape(product.mdp.state_count, -1)
        np.testing.assert_allclose(sums[product.mdp.permissible], 1.0, rtol=0, atol=1e-12)

        probs = bundle.kernel.probs
        defined = np.broadcast_to(bundle.agent.permissible[:, None, :], probs.shape[:3])
        np.testing.assert_allclose(probs.sum(axis=-1)[defined], 1.0, rtol=0, atol=1e-12)

    def test_marginal_over_beliefs_is_agent_kernel(self, cops_bundle, cops_product):
        agent = cops_bundle.agent
        state_count, action_count, belief_count = agent.state_count, agent.action_count, cops_bundle.belief_count
        product = cops_product.mdp.kernel.toarray().reshape(state_count, belief_count, action_count,
                                                            state_count, belief_count)
        marginal = product.sum(axis=-1)
        expected = agent.kernel.toarray().reshape(state_count, 1, action_count, state_count)
        np.testing.assert_allclose(marginal, np.broadcast_to(expected, marginal.shape), rtol=0, atol=1e-9)

    def test_single_belief_matches_agent_plan(self):
        """One belief with L equal to the nominal reward plans exactly like the agent alone"""
        bundle = cops_variant(goals=[[5, 4]], reward_minus=10.0)
        _, product_values = backward_induction(bundle.product().mdp, 40)
        _, agent_values = backward_induction(bundle.agent, 40)
        np.testing.assert_allclose(product_values.values, agent_values.values, rtol=0, atol=1e-9)
