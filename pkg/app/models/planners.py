"""
Deceptive planners on the belief product.

plan_optimal_deception solves the fully observed product MDP.
NoObsController approximates the optimal policy when the adversary's belief is
hidden, tracking a distribution over beliefs. plan_robust_dynamics and
plan_robust_rewards plan against uncertain belief kernels and rewards.
"""

import logging
from dataclasses import dataclass
from typing import Callable, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.config import NORMALIZATION_TOL
from app.exceptions import ControllerStateError, KernelFamilyError, RewardFamilyError
from app.models.belief import (
    BeliefKernel,
    BeliefReward,
    ProductMdp,
    apply_forbidden_states,
    build_product_mdp,
)
from app.models.mdp import Mdp, Policy, ValueTable, backward_induction, robust_backward_induction

logger = logging.getLogger(__name__)

NO_OBS_MODES = ("randomized", "weighted-argmax")


@dataclass(frozen=True)
class KernelFamily:
    """
    Uncertainty set of belief kernels: either a finite list of members, or an
    interval [low, high] of a parameter whose kernel entries are affine in it.
    """
    members: Tuple[BeliefKernel, ...] = ()
    parameter: Optional[str] = None
    low: Optional[float] = None
    high: Optional[float] = None
    generator: Optional[Callable[[float], BeliefKernel]] = None

    @classmethod
    def from_members(cls, members: Iterable[BeliefKernel]) -> "KernelFamily":
        return cls(members=tuple(members))

    @classmethod
    def interval(cls, parameter: str, low: float, high: float,
                 generator: Callable[[float], BeliefKernel]) -> "KernelFamily":
        return cls(parameter=parameter, low=low, high=high, generator=generator)

    def candidates(self) -> List[BeliefKernel]:
        """Kernels the stagewise minimum has to consider"""
        if self.generator is None:
            if not self.members:
                raise KernelFamilyError("kernel family is empty")
            return list(self.members)

        if self.low > self.high:
            raise KernelFamilyError(f"empty interval [{self.low}, {self.high}] for {self.parameter}")
        low, high = self.generator(self.low), self.generator(self.high)
        if self.low == self.high:
            return [low]
        # Collinearity of the endpoints and the midpoint on every entry
        mid = self.generator((self.low + self.high) / 2)
        if not np.allclose(mid.probs, (low.probs + high.probs) / 2, rtol=0, atol=1e-12, equal_nan=True):
            raise KernelFamilyError(f"belief kernel is not affine in {self.parameter}; pass the members explicitly")
        return [low, high]


@dataclass(frozen=True)
class RewardFamily:
    """Per-(s, B, a) reward sets summarized by their infimum"""
    lower: np.ndarray

    @classmethod
    def from_members(cls, members: Sequence[BeliefReward]) -> "RewardFamily":
        if not members:
            raise RewardFamilyError("reward family is empty")
        stacked = np.stack([m.values for m in members])
        return cls(lower=stacked.min(axis=0))

    @classmethod
    def from_bounds(cls, low: BeliefReward, high: BeliefReward) -> "RewardFamily":
        return cls(lower=np.minimum(low.values, high.values))

    def infimum(self) -> BeliefReward:
        return BeliefReward(values=self.lower)


def plan_optimal_deception(product: ProductMdp, horizon: int) -> Tuple[Policy, ValueTable]:
    policy, values = backward_induction(product.mdp, horizon)
    logger.info(f"Optimal deceptive plan over horizon {horizon}: "
                f"max V_0 = {values.values[0].max():.4f}")
    return policy, values


def plan_nominal(agent: Mdp, horizon: int) -> Tuple[Policy, ValueTable]:
    """Adversary-free plan on the agent MDP with its nominal reward"""
    return backward_induction(agent, horizon)


def plan_robust_dynamics(
        agent: Mdp,
        family: KernelFamily,
        reward: BeliefReward,
        horizon: int,
        forbidden: Iterable[int] = (),
        start: Optional[int] = None,
) -> Tuple[Policy, ValueTable]:
    """Max-min backward induction where nature picks the worst kernel at every stage"""
    forbidden = list(forbidden)
    products = [
        apply_forbidden_states(build_product_mdp(agent, kernel, reward), forbidden, start)
        for kernel in family.candidates()
    ]
    policy, values = robust_backward_induction([product.mdp for product in products], horizon)
    logger.info(f"Robust (dynamics) plan over {len(products)} candidate kernel(s), horizon {horizon}: "
                f"max V_0 = {values.values[0].max():.4f}")
    return policy, values


def plan_robust_rewards(
        agent: Mdp,
        kernel: BeliefKernel,
        family: RewardFamily,
        horizon: int,
        forbidden: Iterable[int] = (),
        start: Optional[int] = None,
) -> Tuple[Policy, ValueTable]:
    """Worst-case rewards reduce to optimal deception with the infimum reward"""
    lower = family.lower
    mask = np.broadcast_to(agent.permissible[:, None, :], lower.shape)
    if not np.isfinite(lower[mask]).all():
        raise RewardFamilyError("reward family is not bounded below on every permissible (s, B, a)")
    product = apply_forbidden_states(build_product_mdp(agent, kernel, family.infimum()), forbidden, start)
    return plan_optimal_deception(product, horizon)


def belief_indicator(belief: int, belief_count: int) -> np.ndarray:
    dist = np.zeros(belief_count)
    dist[belief] = 1.0
    return dist


def update_belief_distribution(pr: np.ndarray, state: int, action: int, kernel: BeliefKernel) -> np.ndarray:
    """Pr'(B) = sum_B' Pr(B') f(s, B', a, B), renormalized"""
    new = pr @ kernel.probs[state, :, action, :]
    total = new.sum()
    if not total > 0:
        raise ValueError(f"belief distribution vanished at (state {state}, action {action})")
    return new / total


class NoObsController:
    """
    Controller for the case where the agent sees its own state but not the
    adversary's belief. Combines the fully observed plan with a tracked
    distribution over beliefs.

    Modes:
        randomized: sample a belief from the distribution and play the
            planned action for it
        weighted-argmax: maximize the distribution-weighted Q values
    """

    def __init__(
            self,
            product: ProductMdp,
            policy: Policy,
            values: Optional[ValueTable] = None,
            mode: str = "randomized",
            initial: Optional[np.ndarray] = None,
            kernel: Optional[BeliefKernel] = None,
    ):
        if mode not in NO_OBS_MODES:
            raise ValueError(f"unknown no-observation mode {mode!r}")
        if mode == "weighted-argmax" and values is None:
            raise ControllerStateError("weighted-argmax mode needs the value table of the plan")
        self.product = product
        self.policy = policy
        self.values = values
        self.mode = mode
        self.kernel = kernel or product.kernel
        self._initial = initial
        self.distribution: Optional[np.ndarray] = None

    @property
    def horizon(self) -> int:
        return self.policy.horizon

    def initialize(self, distribution: Optional[np.ndarray] = None):
        belief_count = self.product.belief_count
        if distribution is None:
            distribution = self._initial
        if distribution is None:
            distribution = np.full(belief_count, 1.0 / belief_count)
        distribution = np.asarray(distribution, dtype=float)
        if distribution.shape != (belief_count,) or (distribution < 0).any() \
                or abs(distribution.sum() - 1.0) > NORMALIZATION_TOL:
            raise ValueError("initial belief distribution must be a normalized vector over beliefs")
        self.distribution = distribution
        return self

    def observe_belief(self, belief: int):
        self.distribution = belief_indicator(belief, self.product.belief_count)

    def _require_initialized(self):
        if self.distribution is None:
            raise ControllerStateError("controller used before initialize()")

    def q_values(self, state: int, t: int) -> np.ndarray:
        """Q_t(s, B, a) for every belief, shape (B, A); -inf where a is not permissible"""
        mdp = self.product.mdp
        action_count = mdp.action_count
        rows = self.product.index(state, 0) + np.arange(self.product.belief_count)
        kernel_rows = (rows[:, None] * action_count + np.arange(action_count)).reshape(-1)
        future = (mdp.kernel[kernel_rows] @ self.values.values[t + 1]).reshape(len(rows), action_count)
        q = mdp.rewards[rows] + future
        return np.where(mdp.permissible[rows], q, -np.inf)

    def act(self, state: int, t: int, rng: np.random.Generator) -> int:
        self._require_initialized()
        if self.mode == "randomized":
            belief = int(rng.choice(self.product.belief_count, p=self.distribution))
            return self.policy.action(t, self.product.index(state, belief))

        q = self.q_values(state, t)
        permissible = np.isfinite(q[0])
        weighted = self.distribution @ np.where(np.isfinite(q), q, 0.0)
        return int(np.argmax(np.where(permissible, weighted, -np.inf)))

    def update(self, state: int, action: int):
        self._require_initialized()
        self.distribution = update_belief_distribution(self.distribution, state, action, self.kernel)


def act_without_belief_obs(ctrl: NoObsController, state: int, t: int, rng: np.random.Generator) -> int:
    """The caller follows up with ctrl.update(state, action)"""
    return ctrl.act(state, t, rng)
