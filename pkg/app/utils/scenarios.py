"""
Gridworld scenarios: cops and deceptive robbers, and camouflage.

Each builder returns a ScenarioBundle holding the agent MDP (with the nominal
reward as its reward table), the adversary's belief kernel and the
belief-induced reward.
"""

import logging
from dataclasses import dataclass, field
from enum import IntEnum
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from app.models.belief import BeliefKernel, BeliefReward, ProductMdp, apply_forbidden_states, build_product_mdp
from app.models.mdp import Mdp, Policy
from app.models.schemas import CamoConfig, CopsConfig
from app.utils.gridworld import GridCell, Grid, Move, apply_move, taxicab_distance

logger = logging.getLogger(__name__)


class Camouflage(IntEnum):
    CAMO = 0
    NO_CAMO = 1


@dataclass(frozen=True)
class ScenarioBundle:
    kind: str
    grid: Grid
    config: Union[CopsConfig, CamoConfig]
    agent: Mdp
    kernel: BeliefKernel
    reward: BeliefReward
    nominal_actions: np.ndarray
    start: int
    # None means uniform over beliefs, drawn per run
    initial_belief: Optional[int]
    belief_labels: List[str]
    action_names: List[str]
    forbidden: Tuple[int, ...] = field(default_factory=tuple)

    @property
    def belief_count(self) -> int:
        return self.kernel.belief_count

    def initial_distribution(self) -> np.ndarray:
        if self.initial_belief is None:
            return np.full(self.belief_count, 1.0 / self.belief_count)
        dist = np.zeros(self.belief_count)
        dist[self.initial_belief] = 1.0
        return dist

    def sample_initial_belief(self, rng: np.random.Generator) -> int:
        if self.initial_belief is None:
            return int(rng.integers(self.belief_count))
        return self.initial_belief

    def nominal_policy(self, horizon: int) -> Policy:
        """Stationary nominal action per agent state, repeated for every belief and stage"""
        row = np.repeat(self.nominal_actions, self.belief_count)
        return Policy(table=np.tile(row, (horizon + 1, 1)).astype(np.int64))

    def product(self, extra_forbidden: Iterable[int] = ()) -> ProductMdp:
        product = build_product_mdp(self.agent, self.kernel, self.reward)
        forbidden = set(self.forbidden) | {int(s) for s in extra_forbidden}
        return apply_forbidden_states(product, forbidden, start=self.start)

    def cell_states(self, cells: Iterable[Sequence[int]]) -> List[int]:
        return [self.grid.state_id(cell) for cell in cells]


def _grid_agent(grid: Grid, moves: Sequence[Move], nominal_reward: np.ndarray) -> Mdp:
    # Deterministic moves; actions leaving the grid are masked
    permissible = np.zeros((grid.state_count, len(moves)), dtype=bool)
    rows = {}
    for s in range(grid.state_count):
        for a, move in enumerate(moves):
            target = grid.step(s, move)
            if target is not None:
                permissible[s, a] = True
                rows[(s, a)] = [(target, 1.0)]
    return Mdp.from_rows(grid.state_count, len(moves), rows, nominal_reward, permissible)


def _nominal_actions(grid: Grid, moves: Sequence[Move], allowed: Sequence[int], target: int) -> np.ndarray:
    """Shortest path to target, then stay; lowest action id among distance-reducing moves"""
    stay = next(a for a in allowed if moves[a] == Move.STAY)
    actions = np.empty(grid.state_count, dtype=np.int64)
    for s in range(grid.state_count):
        actions[s] = stay
        if s == target:
            continue
        here = grid.distance(s, target)
        for a in allowed:
            nxt = grid.step(s, moves[a])
            if nxt is not None and grid.distance(nxt, target) < here:
                actions[s] = a
                break
    return actions


# Cops and deceptive robbers

def cops_belief_transition(
        cell: Sequence[int], belief: int, move: Move, goals: Sequence[Sequence[int]], p: float
) -> Dict[int, float]:
    """
    Next-belief distribution over goal indices.

    The belief is kept with probability 1-p; the remaining p is spread evenly
    over the goals the move brings the agent closer to (or onto), and returned
    to the current belief when there are none.
    """
    nxt = apply_move(GridCell(*cell), move)
    closer = [
        i for i, goal in enumerate(goals)
        if tuple(nxt) == tuple(goal) or taxicab_distance(nxt, goal) < taxicab_distance(cell, goal)
    ]
    dist = {belief: 1.0 - p}
    if not closer:
        dist[belief] += p
        return dist
    share = p / len(closer)
    for i in closer:
        dist[i] = dist.get(i, 0.0) + share
    return dist


def cops_reward(cell: Sequence[int], belief: int, goals: Sequence[Sequence[int]], true_goal: int,
                reward_plus: float = 10.0, reward_minus: float = -10.0) -> float:
    if tuple(cell) != tuple(goals[true_goal]):
        return 0.0
    return reward_minus if belief == true_goal else reward_plus


def build_cops_scenario(cfg: CopsConfig) -> ScenarioBundle:
    grid = Grid(cfg.grid.w, cfg.grid.h)
    moves = list(Move)
    action_count = len(moves)
    goals = [GridCell(*g) for g in cfg.goals]
    tg = grid.state_id(goals[cfg.true_goal])
    belief_count = len(goals)

    nominal_reward = np.zeros((grid.state_count, action_count))
    nominal_reward[tg] = cfg.reward_plus
    agent = _grid_agent(grid, moves, nominal_reward)

    kernel = BeliefKernel.from_function(
        grid.state_count, belief_count, action_count,
        lambda s, b, a: cops_belief_transition(grid.cell(s), b, moves[a], goals, cfg.p),
        agent.permissible,
    )
    reward = BeliefReward.from_function(
        grid.state_count, belief_count, action_count,
        lambda s, b, a: cops_reward(grid.cell(s), b, goals, cfg.true_goal, cfg.reward_plus, cfg.reward_minus),
    )
    logger.info(f"Built cops scenario: {grid.width}x{grid.height} grid, {belief_count} goals, p={cfg.p}")
    return ScenarioBundle(
        kind="cops",
        grid=grid,
        config=cfg,
        agent=agent,
        kernel=kernel,
        reward=reward,
        nominal_actions=_nominal_actions(grid, moves, range(action_count), tg),
        start=grid.state_id(cfg.start),
        initial_belief=None if cfg.initial_belief == "uniform" else int(cfg.initial_belief),
        belief_labels=[f"G{i + 1}" for i in range(belief_count)],
        action_names=[move.name for move in moves],
        forbidden=tuple(grid.state_id(cell) for cell in cfg.forbidden),
    )


# Camouflage

def camo_action(move: Move, camouflage: Camouflage) -> int:
    return int(move) * len(Camouflage) + int(camouflage)


def split_camo_action(action: int) -> Tuple[Move, Camouflage]:
    move, flag = divmod(int(action), len(Camouflage))
    return Move(move), Camouflage(flag)


def camo_belief_transition(grid: Grid, state: int, belief: int, action: int, p: float) -> Dict[int, float]:
    """
    Next-belief distribution over cells. Without camouflage the adversary sees
    the new cell; with it, it sees the cell with probability p and otherwise
    keeps its previous estimate.
    """
    move, flag = split_camo_action(action)
    nxt = grid.step(state, move)
    if flag == Camouflage.NO_CAMO or belief == nxt:
        return {nxt: 1.0}
    return {nxt: p, belief: 1.0 - p}


def camo_nominal_reward(grid: Grid, state: int, tg: int, reward_peak: float = 10.0) -> float:
    return reward_peak / (grid.distance(state, tg) + 1)


def camo_reward(grid: Grid, state: int, belief: int, action: int, tg: int,
                r: float = 1.0, c: float = 5.0, reward_peak: float = 10.0) -> float:
    _, flag = split_camo_action(action)
    seen = grid.distance(state, belief) <= r
    base = 0.0 if seen else camo_nominal_reward(grid, state, tg, reward_peak)
    return base - c if flag == Camouflage.CAMO else base


def build_camo_scenario(cfg: CamoConfig) -> ScenarioBundle:
    grid = Grid(cfg.grid.w, cfg.grid.h)
    moves = [move for move in Move for _ in Camouflage]
    action_count = len(moves)
    tg = grid.state_id(cfg.tg)

    nominal_reward = np.array([
        [camo_nominal_reward(grid, s, tg, cfg.reward_peak)] * action_count for s in range(grid.state_count)
    ])
    agent = _grid_agent(grid, moves, nominal_reward)

    kernel = BeliefKernel.from_function(
        grid.state_count, grid.state_count, action_count,
        lambda s, b, a: camo_belief_transition(grid, s, b, a, cfg.p),
        agent.permissible,
    )
    reward = BeliefReward.from_function(
        grid.state_count, grid.state_count, action_count,
        lambda s, b, a: camo_reward(grid, s, b, a, tg, cfg.r, cfg.c, cfg.reward_peak),
    )
    no_camo = [a for a in range(action_count) if split_camo_action(a)[1] == Camouflage.NO_CAMO]
    initial = cfg.start if cfg.initial_belief == "start" else cfg.initial_belief
    logger.info(f"Built camouflage scenario: {grid.width}x{grid.height} grid, p={cfg.p}, r={cfg.r}, c={cfg.c}")
    return ScenarioBundle(
        kind="camo",
        grid=grid,
        config=cfg,
        agent=agent,
        kernel=kernel,
        reward=reward,
        nominal_actions=_nominal_actions(grid, moves, no_camo, tg),
        start=grid.state_id(cfg.start),
        initial_belief=grid.state_id(initial),
        belief_labels=[f"({cell.col},{cell.row})" for cell in grid.cells()],
        action_names=[f"{move.name}+{flag.name}" for move in Move for flag in Camouflage],
        forbidden=tuple(grid.state_id(cell) for cell in cfg.forbidden),
    )


def build_scenario(cfg: Union[CopsConfig, CamoConfig]) -> ScenarioBundle:
    if isinstance(cfg, CopsConfig):
        return build_cops_scenario(cfg)
    return build_camo_scenario(cfg)
