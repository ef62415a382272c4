"""
Adversary belief spaces and the product MDP on S x B.

Product state of agent state s and belief b is ``s * belief_count + b``.
"""

import logging
from dataclasses import dataclass, replace
from typing import Callable, Iterable, List, Mapping, Optional

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import breadth_first_order

from app.config import NORMALIZATION_TOL
from app.exceptions import InfeasibleConstraintError, ProductConstructionError
from app.models.mdp import Mdp, validate_mdp

logger = logging.getLogger(__name__)

# Number of violations spelled out in a ProductConstructionError
_MAX_REPORTED = 20


@dataclass(frozen=True)
class BeliefKernel:
    """f(s, b, a, b') as an array of shape (S, B, A, B); NaN marks undefined entries"""
    probs: np.ndarray

    @property
    def belief_count(self) -> int:
        return self.probs.shape[1]

    def distribution(self, state: int, belief: int, action: int) -> np.ndarray:
        return self.probs[state, belief, action]

    @classmethod
    def from_function(
            cls,
            state_count: int,
            belief_count: int,
            action_count: int,
            fn: Callable[[int, int, int], Optional[Mapping[int, float]]],
            permissible=None,
    ) -> "BeliefKernel":
        probs = np.full((state_count, belief_count, action_count, belief_count), np.nan)
        for s in range(state_count):
            for a in range(action_count):
                if permissible is not None and not permissible[s, a]:
                    continue
                for b in range(belief_count):
                    row = fn(s, b, a)
                    if row is None:
                        continue
                    probs[s, b, a] = 0.0
                    for target, prob in row.items():
                        probs[s, b, a, target] += prob
        return cls(probs=probs)


@dataclass(frozen=True)
class BeliefReward:
    """L(s, b, a) as an array of shape (S, B, A)"""
    values: np.ndarray

    @classmethod
    def from_function(
            cls,
            state_count: int,
            belief_count: int,
            action_count: int,
            fn: Callable[[int, int, int], float],
    ) -> "BeliefReward":
        values = np.empty((state_count, belief_count, action_count))
        for s in range(state_count):
            for b in range(belief_count):
                for a in range(action_count):
                    values[s, b, a] = fn(s, b, a)
        return cls(values=values)


@dataclass(frozen=True)
class ProductMdp:
    mdp: Mdp
    agent: Mdp
    kernel: BeliefKernel
    reward: BeliefReward

    @property
    def belief_count(self) -> int:
        return self.kernel.belief_count

    def index(self, state: int, belief: int) -> int:
        return state * self.belief_count + belief


def _input_violations(agent: Mdp, kernel: BeliefKernel, reward: BeliefReward) -> List[str]:
    state_count, action_count = agent.state_count, agent.action_count
    belief_count = kernel.belief_count
    if kernel.probs.shape != (state_count, belief_count, action_count, belief_count):
        return [f"belief kernel shape {kernel.probs.shape} does not match "
                f"{(state_count, belief_count, action_count, belief_count)}"]
    if reward.values.shape != (state_count, belief_count, action_count):
        return [f"belief reward shape {reward.values.shape} does not match {(state_count, belief_count, action_count)}"]

    violations = []
    for s, a in np.argwhere(agent.permissible):
        rows = kernel.probs[s, :, a, :]
        for b in range(belief_count):
            row = rows[b]
            if np.isnan(row).any():
                violations.append(f"kernel entry missing at (s={s}, B={b}, a={a})")
            elif (row < 0).any():
                violations.append(f"negative kernel probability at (s={s}, B={b}, a={a})")
            elif abs(row.sum() - 1.0) > NORMALIZATION_TOL:
                violations.append(f"kernel at (s={s}, B={b}, a={a}) sums to {row.sum():.12g}")
            if not np.isfinite(reward.values[s, b, a]):
                violations.append(f"reward missing at (s={s}, B={b}, a={a})")
            if len(violations) >= _MAX_REPORTED:
                return violations
    return violations


def build_product_mdp(agent: Mdp, kernel: BeliefKernel, reward: BeliefReward) -> ProductMdp:
    """
    Build the MDP on S x B whose kernel is P(s, a, s') * f(s, B, a, B') and
    whose reward is L(s, B, a). Permissible sets are inherited from the agent.
    """
    violations = _input_violations(agent, kernel, reward)
    if violations:
        raise ProductConstructionError(violations)

    state_count, action_count = agent.state_count, agent.action_count
    belief_count = kernel.belief_count
    beliefs = np.arange(belief_count)

    coo = agent.kernel.tocoo()
    states, actions = np.divmod(coo.row, action_count)
    f = kernel.probs[states, :, actions, :]
    rows = (states[:, None, None] * belief_count + beliefs[None, :, None]) * action_count + actions[:, None, None]
    cols = coo.col[:, None, None] * belief_count + beliefs[None, None, :]
    vals = coo.data[:, None, None] * f
    rows, cols, vals = np.broadcast_arrays(rows, cols, vals)
    keep = vals != 0

    product_kernel = sp.csr_matrix(
        (vals[keep], (rows[keep], cols[keep])),
        shape=(state_count * belief_count * action_count, state_count * belief_count),
    )
    permissible = np.repeat(agent.permissible, belief_count, axis=0)
    rewards = np.where(permissible, reward.values.reshape(state_count * belief_count, action_count), 0.0)
    mdp = Mdp(kernel=product_kernel, rewards=rewards, permissible=permissible)

    report = validate_mdp(mdp)
    if report:
        raise ProductConstructionError([str(v) for v in report[:_MAX_REPORTED]])

    logger.info(f"Built product MDP: {state_count * belief_count} states "
                f"({state_count} agent x {belief_count} beliefs), {action_count} actions")
    return ProductMdp(mdp=mdp, agent=agent, kernel=kernel, reward=reward)


def apply_forbidden_states(product: ProductMdp, forbidden: Iterable[int], start: Optional[int] = None) -> ProductMdp:
    """
    Mask every action that enters a forbidden agent state with positive probability.

    Forbidden states keep their own action sets; they are unreachable after
    masking. Feasibility is checked on the states reachable from ``start``, or
    on every non-forbidden state when no start is given. Unreachable states
    left without actions keep their original ones.

    Raises:
        InfeasibleConstraintError: the start is forbidden or a reachable state lost all actions
    """
    forbidden = {int(s) for s in forbidden}
    if not forbidden:
        return product

    agent = product.agent
    state_count, action_count = agent.state_count, agent.action_count
    if start is not None and start in forbidden:
        raise InfeasibleConstraintError(start, f"start state {start} is forbidden")

    is_forbidden = np.zeros(state_count, dtype=bool)
    is_forbidden[sorted(forbidden)] = True

    coo = agent.kernel.tocoo()
    enters = np.zeros(state_count * action_count, dtype=bool)
    enters[coo.row[(coo.data > 0) & is_forbidden[coo.col]]] = True
    enters = enters.reshape(state_count, action_count)
    permissible = agent.permissible & ~(enters & ~is_forbidden[:, None])

    if start is None:
        candidates = np.flatnonzero(~is_forbidden)
    else:
        allowed = permissible.reshape(-1)[coo.row] & (coo.data > 0)
        graph = sp.csr_matrix(
            (np.ones(int(allowed.sum())), (coo.row[allowed] // action_count, coo.col[allowed])),
            shape=(state_count, state_count),
        )
        candidates = np.sort(breadth_first_order(graph, start, directed=True, return_predecessors=False))

    for s in candidates:
        if not permissible[s].any():
            logger.error(f"Forbidden-state constraint leaves state {s} without actions")
            raise InfeasibleConstraintError(int(s))

    # Unreachable states that lost every action keep their original set
    emptied = ~permissible.any(axis=1)
    permissible[emptied] = agent.permissible[emptied]

    masked_agent = replace(agent, permissible=permissible)
    masked_mdp = replace(product.mdp, permissible=np.repeat(permissible, product.belief_count, axis=0))
    logger.info(f"Applied forbidden states {sorted(forbidden)}: "
                f"{int(agent.permissible.sum() - permissible.sum())} agent action(s) masked")
    return replace(product, mdp=masked_mdp, agent=masked_agent)
