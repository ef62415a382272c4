import logging
import traceback
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from app.config import PLANNER_THREADS
from app.exceptions import PolicyHorizonError
from app.models.mdp import Policy
from app.models.planners import NoObsController, plan_optimal_deception
from app.models.schemas import CopsConfig
from app.utils.scenarios import ScenarioBundle, build_scenario

logger = logging.getLogger(__name__)


class Controller:
    """Chooses actions during a simulated run; reset by start() at the beginning of each run"""

    horizon: int

    def start(self, belief: int):
        pass

    def observe(self, belief: int):
        pass

    def act(self, t: int, state: int, belief: int, rng: np.random.Generator) -> int:
        raise NotImplementedError

    def advance(self, state: int, action: int):
        pass


class PolicyController(Controller):
    """Plays a product-state policy table with the adversary's belief observed"""

    def __init__(self, policy: Policy, belief_count: int):
        self.policy = policy
        self.belief_count = belief_count

    @property
    def horizon(self) -> int:
        return self.policy.horizon

    def act(self, t, state, belief, rng):
        return self.policy.action(t, state * self.belief_count + belief)


class NoObsAdapter(Controller):
    """Runs a NoObsController; the true belief is only passed on through observe()"""

    def __init__(self, ctrl: NoObsController):
        self.ctrl = ctrl

    @property
    def horizon(self) -> int:
        return self.ctrl.horizon

    def start(self, belief):
        self.ctrl.initialize()

    def observe(self, belief):
        self.ctrl.observe_belief(belief)

    def act(self, t, state, belief, rng):
        return self.ctrl.act(state, t, rng)

    def advance(self, state, action):
        self.ctrl.update(state, action)


@dataclass(frozen=True)
class SimTrace:
    seed: int
    states: np.ndarray
    beliefs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": np.arange(len(self.rewards)),
            "s": self.states,
            "B": self.beliefs,
            "a": self.actions,
            "reward": self.rewards,
        })


@dataclass(frozen=True)
class RunStats:
    mean: np.ndarray
    std: np.ndarray
    runs: int

    @property
    def terminal_mean(self) -> float:
        return float(self.mean[-1])

    @property
    def terminal_std(self) -> float:
        return float(self.std[-1])

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "t": np.arange(1, len(self.mean) + 1),
            "mean_avg_reward": self.mean,
            "std_avg_reward": self.std,
        })


def belief_cdf(bundle: ScenarioBundle) -> np.ndarray:
    """Cumulative belief kernel along the next-belief axis; undefined entries read as 0"""
    return np.cumsum(np.nan_to_num(bundle.kernel.probs, nan=0.0), axis=-1)


def _draw(cdf: np.ndarray, rng: np.random.Generator) -> int:
    # Scaled so that a cdf ending slightly below 1 never selects a trailing zero
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


def simulate_run(
        bundle: ScenarioBundle,
        controller: Controller,
        horizon: int,
        seed: int,
        observe_every: Optional[int] = None,
        cdf: Optional[np.ndarray] = None,
) -> SimTrace:
    """
    One run of T+1 steps. The initial belief is drawn first; each step then
    draws the agent's successor and the adversary's next belief, in that order.
    """
    if controller.horizon < horizon:
        raise PolicyHorizonError(f"controller horizon {controller.horizon} is shorter than {horizon}")
    cdf = belief_cdf(bundle) if cdf is None else cdf
    agent = bundle.agent
    kernel = agent.kernel
    action_count = agent.action_count

    rng = np.random.default_rng(seed)
    belief = bundle.sample_initial_belief(rng)
    state = bundle.start
    controller.start(belief)

    states = np.empty(horizon + 1, dtype=np.int64)
    beliefs = np.empty(horizon + 1, dtype=np.int64)
    actions = np.empty(horizon + 1, dtype=np.int64)
    rewards = np.empty(horizon + 1)
    for t in range(horizon + 1):
        if observe_every is not None and t % observe_every == 0:
            controller.observe(belief)
        action = controller.act(t, state, belief, rng)
        if not agent.permissible[state, action]:
            raise ValueError(f"controller chose action {action}, not permissible in state {state} at t={t}")
        states[t], beliefs[t], actions[t] = state, belief, action
        rewards[t] = bundle.reward.values[state, belief, action]
        if t == horizon:
            break

        row = state * action_count + action
        lo, hi = kernel.indptr[row], kernel.indptr[row + 1]
        next_state = int(kernel.indices[lo + _draw(np.cumsum(kernel.data[lo:hi]), rng)])
        next_belief = _draw(cdf[state, belief, action], rng)
        controller.advance(state, action)
        state, belief = next_state, next_belief

    return SimTrace(seed=seed, states=states, beliefs=beliefs, actions=actions, rewards=rewards)


def average_reward_curve(trace: SimTrace) -> pd.Series:
    """Running average at T' = 1..T+1: the first T' rewards summed and divided by T'"""
    steps = np.arange(1, len(trace.rewards) + 1)
    return pd.Series(np.cumsum(trace.rewards) / steps, index=pd.Index(steps, name="t"), name="avg_reward")


def _run_curve(bundle, controller, horizon, seed, observe_every, cdf) -> np.ndarray:
    trace = simulate_run(bundle, controller, horizon, seed, observe_every, cdf)
    return average_reward_curve(trace).to_numpy()


def monte_carlo(
        bundle: ScenarioBundle,
        controller: Controller,
        runs: int,
        horizon: int,
        base_seed: int,
        observe_every: Optional[int] = None,
        n_jobs: Optional[int] = None,
) -> RunStats:
    """Run i uses seed base_seed + i; statistics are taken over the stored curves in run order"""
    if runs < 1:
        raise ValueError(f"runs must be at least 1, got {runs}")
    n_jobs = min(n_jobs or PLANNER_THREADS, runs)
    cdf = belief_cdf(bundle)
    curves = Parallel(n_jobs=n_jobs)(
        delayed(_run_curve)(bundle, controller, horizon, base_seed + i, observe_every, cdf)
        for i in range(runs)
    )
    curves = np.vstack(curves)
    return RunStats(mean=curves.mean(axis=0), std=curves.std(axis=0), runs=runs)


def mismatch_sweep(
        cfg: CopsConfig,
        p_plan: float,
        p_true_grid: Sequence[float],
        runs: int,
        horizon: int,
        base_seed: int,
) -> pd.DataFrame:
    """
    For every p_true: terminal mean of the policy planned at p_true minus that
    of the policy planned at p_plan, both simulated with the adversary at p_true.
    """
    if not p_true_grid:
        raise ValueError("p_true_grid is empty")
    plan_bundle = build_scenario(cfg.model_copy(update={"p": p_plan}))
    plan_policy, _ = plan_optimal_deception(plan_bundle.product(), horizon)

    rows = []
    for p_true in p_true_grid:
        if p_true == p_plan:
            delta = 0.0
        else:
            true_bundle = build_scenario(cfg.model_copy(update={"p": p_true}))
            belief_count = true_bundle.belief_count
            fixed = monte_carlo(true_bundle, PolicyController(plan_policy, belief_count), runs, horizon, base_seed)
            tuned_policy, _ = plan_optimal_deception(true_bundle.product(), horizon)
            tuned = monte_carlo(true_bundle, PolicyController(tuned_policy, belief_count), runs, horizon, base_seed)
            delta = tuned.terminal_mean - fixed.terminal_mean
        logger.info(f"Mismatch sweep: p_true={p_true}, delta={delta:.4f}")
        rows.append({"p_true": float(p_true), "delta": float(delta)})
    return pd.DataFrame(rows, columns=["p_true", "delta"])


class SimulationService:
    def run(
            self,
            bundle: ScenarioBundle,
            controller: Controller,
            runs: int,
            horizon: int,
            seed: int,
            observe_every: Optional[int] = None,
    ) -> RunStats:
        if controller.horizon > horizon:
            logger.warning(f"Controller horizon {controller.horizon} exceeds simulation horizon {horizon}; "
                           f"only the first {horizon + 1} stages are used")
        try:
            stats = monte_carlo(bundle, controller, runs, horizon, seed, observe_every)
            logger.info(f"Simulated {runs} run(s) of {bundle.kind} over horizon {horizon}: "
                        f"terminal mean {stats.terminal_mean:.4f} (std {stats.terminal_std:.4f})")
            return stats
        except Exception as e:
            logger.error(f"Error in simulation service: {e}")
            logger.error(traceback.format_exc())
            raise

    def traces(
            self,
            bundle: ScenarioBundle,
            controller: Controller,
            runs: int,
            horizon: int,
            seed: int,
            observe_every: Optional[int] = None,
    ):
        cdf = belief_cdf(bundle)
        for i in range(runs):
            yield simulate_run(bundle, controller, horizon, seed + i, observe_every, cdf)

    def sweep(self, cfg: CopsConfig, p_plan: float, p_grid: Sequence[float],
              runs: int, horizon: int, seed: int) -> pd.DataFrame:
        try:
            return mismatch_sweep(cfg, p_plan, p_grid, runs, horizon, seed)
        except Exception as e:
            logger.error(f"Error in mismatch sweep: {e}")
            logger.error(traceback.format_exc())
            raise
