"""
Finite-state, finite-action, finite-horizon Markov decision processes.

States and actions are dense 0-based integer ids. The transition kernel is a
single CSR matrix with one row per (state, action) pair, row index
``s * action_count + a``; rows of non-permissible pairs are ignored.

Objective convention used everywhere in the package: a run over horizon T
collects T+1 rewards, sum_{t=0}^{T} reward(s_t, a_t), and makes T transitions.
"""

import itertools
import logging
import math
from dataclasses import dataclass
from typing import List, Mapping, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp

from app.config import BRUTE_FORCE_BUDGET, NORMALIZATION_TOL, STATIONARY_TOL
from app.exceptions import (
    BudgetExceededError,
    ConfigError,
    MdpValidationError,
    PolicyHorizonError,
)

logger = logging.getLogger(__name__)

# Sparse row of a kernel: (target state, probability) pairs
Distribution = Sequence[Tuple[int, float]]


@dataclass(frozen=True)
class Violation:
    state: int
    action: Optional[int]
    message: str

    def __str__(self):
        if self.action is None:
            return f"state {self.state}: {self.message}"
        return f"(state {self.state}, action {self.action}): {self.message}"


@dataclass(frozen=True)
class Mdp:
    kernel: sp.csr_matrix
    rewards: np.ndarray
    permissible: np.ndarray

    @property
    def state_count(self) -> int:
        return self.rewards.shape[0]

    @property
    def action_count(self) -> int:
        return self.rewards.shape[1]

    @classmethod
    def from_rows(
            cls,
            state_count: int,
            action_count: int,
            rows: Mapping[Tuple[int, int], Distribution],
            rewards,
            permissible=None,
    ) -> "Mdp":
        """
        Build an MDP from sparse kernel rows keyed by (state, action).

        Rows of non-permissible pairs are dropped. Duplicate targets are kept
        as separate entries so that validate_mdp can report them.
        """
        rewards = np.asarray(rewards, dtype=float)
        if rewards.shape != (state_count, action_count):
            raise ValueError(f"rewards must have shape {(state_count, action_count)}, got {rewards.shape}")
        if permissible is None:
            permissible = np.ones((state_count, action_count), dtype=bool)
        permissible = np.asarray(permissible, dtype=bool)
        if permissible.shape != rewards.shape:
            raise ValueError(f"permissible must have shape {rewards.shape}, got {permissible.shape}")

        indptr = [0]
        indices: List[int] = []
        data: List[float] = []
        for s in range(state_count):
            for a in range(action_count):
                if permissible[s, a]:
                    for target, prob in rows.get((s, a), ()):
                        if not 0 <= int(target) < state_count:
                            raise ValueError(f"(state {s}, action {a}) targets unknown state {target}")
                        indices.append(int(target))
                        data.append(float(prob))
                indptr.append(len(indices))

        kernel = sp.csr_matrix(
            (np.asarray(data, dtype=float), np.asarray(indices, dtype=np.int64), np.asarray(indptr, dtype=np.int64)),
            shape=(state_count * action_count, state_count),
        )
        return cls(kernel=kernel, rewards=rewards, permissible=permissible)

    def distribution(self, state: int, action: int) -> List[Tuple[int, float]]:
        row = state * self.action_count + action
        lo, hi = self.kernel.indptr[row], self.kernel.indptr[row + 1]
        return [(int(t), float(p)) for t, p in zip(self.kernel.indices[lo:hi], self.kernel.data[lo:hi])]


@dataclass(frozen=True)
class Policy:
    """Deterministic time-indexed action table, shape (T+1, state_count)"""
    table: np.ndarray

    @property
    def horizon(self) -> int:
        return self.table.shape[0] - 1

    def action(self, t: int, state: int) -> int:
        return int(self.table[t, state])


@dataclass(frozen=True)
class ValueTable:
    """Values V_t(s), shape (T+2, state_count); the last row is zero"""
    values: np.ndarray

    def at(self, t: int, state: int) -> float:
        return float(self.values[t, state])


def validate_mdp(mdp: Mdp) -> List[Violation]:
    """Return every stochasticity and permissibility violation; empty if well formed"""
    report: List[Violation] = []
    state_count, action_count = mdp.state_count, mdp.action_count
    kernel = mdp.kernel

    if kernel.shape != (state_count * action_count, state_count):
        report.append(Violation(-1, None, f"kernel shape {kernel.shape} does not match the reward table"))
        return report

    for s in np.flatnonzero(~mdp.permissible.any(axis=1)):
        report.append(Violation(int(s), None, "empty permissible set"))

    permissible = mdp.permissible.reshape(-1)
    row_ids = np.repeat(np.arange(state_count * action_count), np.diff(kernel.indptr))
    sums = np.bincount(row_ids, weights=kernel.data, minlength=state_count * action_count)

    negative = np.zeros(permissible.shape, dtype=bool)
    negative[row_ids[kernel.data < 0]] = True

    duplicate = np.zeros(permissible.shape, dtype=bool)
    if kernel.nnz:
        order = np.lexsort((kernel.indices, row_ids))
        same = (np.diff(row_ids[order]) == 0) & (np.diff(kernel.indices[order]) == 0)
        duplicate[row_ids[order][1:][same]] = True

    finite = np.isfinite(mdp.rewards.reshape(-1))

    for row in np.flatnonzero(permissible):
        s, a = divmod(int(row), action_count)
        if negative[row]:
            report.append(Violation(s, a, "negative probability"))
        if duplicate[row]:
            report.append(Violation(s, a, "duplicate target state"))
        if abs(sums[row] - 1.0) > NORMALIZATION_TOL:
            report.append(Violation(s, a, f"probabilities sum to {sums[row]:.12g}"))
        if not finite[row]:
            report.append(Violation(s, a, "reward is not finite"))
    return report


def stage_q_values(mdp: Mdp, next_values: np.ndarray, kernel: Optional[sp.csr_matrix] = None) -> np.ndarray:
    """Q(s, a) = reward(s, a) + sum_s' P(s, a, s') V(s'); -inf where a is not permissible"""
    kernel = mdp.kernel if kernel is None else kernel
    q = mdp.rewards + (kernel @ next_values).reshape(mdp.state_count, mdp.action_count)
    return np.where(mdp.permissible, q, -np.inf)


def _induction(mdp: Mdp, kernels: Sequence[sp.csr_matrix], horizon: int):
    # Stagewise max over actions of the min over kernels; ties go to the lowest action id
    state_count = mdp.state_count
    values = np.zeros((horizon + 2, state_count))
    table = np.zeros((horizon + 1, state_count), dtype=np.int64)
    states = np.arange(state_count)

    t = horizon
    while t >= 0:
        q = stage_q_values(mdp, values[t + 1], kernels[0])
        for kernel in kernels[1:]:
            q = np.minimum(q, stage_q_values(mdp, values[t + 1], kernel))
        table[t] = np.argmax(q, axis=1)
        values[t] = q[states, table[t]]

        if (t < horizon and np.array_equal(table[t], table[t + 1])
                and np.max(np.abs(values[t] - values[t + 1])) <= STATIONARY_TOL):
            # Fixed point of the stage map: every earlier stage repeats this one
            logger.debug(f"Stationary stage reached at t={t}, copying to earlier stages")
            table[:t] = table[t]
            values[:t] = values[t]
            break
        t -= 1

    return Policy(table=table), ValueTable(values=values)


def backward_induction(mdp: Mdp, horizon: int) -> Tuple[Policy, ValueTable]:
    """Exact finite-horizon dynamic programming"""
    if horizon < 0:
        raise ConfigError(f"horizon must be non-negative, got {horizon}")
    report = validate_mdp(mdp)
    if report:
        raise MdpValidationError(report)
    return _induction(mdp, [mdp.kernel], horizon)


def robust_backward_induction(mdps: Sequence[Mdp], horizon: int) -> Tuple[Policy, ValueTable]:
    """
    Backward induction against an adversary that picks, at every stage and
    every (state, action), the worst kernel among ``mdps``.

    All members must share rewards and permissible sets; only their kernels
    differ.
    """
    if not mdps:
        raise ValueError("at least one MDP is required")
    if horizon < 0:
        raise ConfigError(f"horizon must be non-negative, got {horizon}")
    base = mdps[0]
    for member in mdps:
        report = validate_mdp(member)
        if report:
            raise MdpValidationError(report)
        if member.rewards.shape != base.rewards.shape or not np.array_equal(member.permissible, base.permissible):
            raise ValueError("robust members must share state/action sets and permissible actions")
    logger.debug(f"Robust induction over {len(mdps)} candidate kernel(s), horizon {horizon}")
    return _induction(base, [member.kernel for member in mdps], horizon)


def evaluate_policy(mdp: Mdp, policy: Policy, horizon: int, start: int) -> float:
    """Exact expected total reward of ``policy`` from ``start`` by forward propagation"""
    if policy.horizon < horizon:
        raise PolicyHorizonError(f"policy horizon {policy.horizon} is shorter than requested horizon {horizon}")
    state_count, action_count = mdp.state_count, mdp.action_count
    states = np.arange(state_count)

    dist = np.zeros(state_count)
    dist[start] = 1.0
    total = 0.0
    for t in range(horizon + 1):
        actions = policy.table[t]
        total += float(dist @ mdp.rewards[states, actions])
        if t < horizon:
            step = mdp.kernel[states * action_count + actions]
            dist = step.T @ dist
    return total


def policy_value_table(mdp: Mdp, policy: Policy, horizon: int) -> ValueTable:
    """Values of ``policy`` from every state at once, by backward recursion"""
    if policy.horizon < horizon:
        raise PolicyHorizonError(f"policy horizon {policy.horizon} is shorter than requested horizon {horizon}")
    state_count, action_count = mdp.state_count, mdp.action_count
    states = np.arange(state_count)
    values = np.zeros((horizon + 2, state_count))
    for t in range(horizon, -1, -1):
        actions = policy.table[t]
        values[t] = mdp.rewards[states, actions] + mdp.kernel[states * action_count + actions] @ values[t + 1]
    return ValueTable(values=values)


def brute_force_plan(mdp: Mdp, horizon: int, start: int, budget: Optional[int] = None) -> float:
    """
    Optimal expected total reward by enumerating every time-dependent
    deterministic policy over permissible actions.

    Raises:
        BudgetExceededError: more than ``budget`` policies would be enumerated
    """
    budget = BRUTE_FORCE_BUDGET if budget is None else budget
    state_count = mdp.state_count
    choices = [np.flatnonzero(mdp.permissible[s]) for s in range(state_count)]
    rules_per_stage = math.prod(len(c) for c in choices)
    count = rules_per_stage ** (horizon + 1)
    if count > budget:
        raise BudgetExceededError(f"{count} policies exceed the enumeration budget of {budget}")

    # One decision rule = one action per state; a policy is T+1 decision rules
    rules = np.array(list(itertools.product(*choices)), dtype=np.int64).reshape(-1, state_count)
    states = np.arange(state_count)
    stage_rewards = mdp.rewards[states, rules]
    dense = mdp.kernel.toarray().reshape(state_count, mdp.action_count, state_count)
    stage_kernels = dense[states, rules]

    dist = np.zeros((1, state_count))
    dist[0, start] = 1.0
    totals = np.zeros(1)
    for t in range(horizon + 1):
        totals = (totals[:, None] + dist @ stage_rewards.T).reshape(-1)
        if t < horizon:
            dist = np.einsum("ns,dst->ndt", dist, stage_kernels).reshape(-1, state_count)
    return float(totals.max())
