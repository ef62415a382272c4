import hashlib
import json
import logging
import traceback
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Union

import numpy as np

from app.exceptions import ConfigError
from app.models.belief import ProductMdp
from app.models.mdp import Policy, ValueTable, policy_value_table
from app.models.planners import (
    KernelFamily,
    NoObsController,
    RewardFamily,
    plan_optimal_deception,
    plan_robust_dynamics,
    plan_robust_rewards,
)
from app.models.schemas import (
    POLICY_FORMAT,
    CamoConfig,
    CopsConfig,
    PlannerOptions,
    PolicyDocument,
    ValueSummary,
    parse_scenario,
)
from app.services.simulation_service import Controller, NoObsAdapter, PolicyController
from app.services.storage_service import StorageService
from app.utils.scenarios import ScenarioBundle, build_scenario

logger = logging.getLogger(__name__)

# Scenario field scaled by the reward interval of robust-rewards planning
REWARD_SCALE_FIELD = {"cops": "reward_plus", "camo": "reward_peak"}


@dataclass(frozen=True)
class PlanResult:
    bundle: ScenarioBundle
    options: PlannerOptions
    # Scenario model with constraints applied, used for evaluation and belief tracking
    product: ProductMdp
    policy: Policy
    # None for policies reloaded without their plan
    values: Optional[ValueTable] = None


class PlanningService:
    def __init__(self, storage: Optional[StorageService] = None):
        self.storage = storage or StorageService()

    def load_config(self, scenario: Union[str, Dict[str, Any], CopsConfig, CamoConfig]) -> Union[CopsConfig, CamoConfig]:
        if isinstance(scenario, str):
            scenario = self.storage.load_scenario(scenario)
        return parse_scenario(scenario)

    def build_bundle(self, scenario) -> ScenarioBundle:
        return build_scenario(self.load_config(scenario))

    @staticmethod
    def _variant(bundle: ScenarioBundle, **update) -> ScenarioBundle:
        return build_scenario(bundle.config.model_copy(update=update))

    @staticmethod
    def _forbidden_states(bundle: ScenarioBundle, options: PlannerOptions) -> List[int]:
        try:
            extra = bundle.cell_states(options.forbidden)
        except ValueError as e:
            raise ConfigError(str(e)) from e
        return sorted(set(bundle.forbidden) | set(extra))

    @staticmethod
    def cache_key(bundle: ScenarioBundle, options: PlannerOptions) -> str:
        payload = json.dumps(
            {"scenario": bundle.config.model_dump(mode="json"), "options": options.model_dump(mode="json")},
            sort_keys=True,
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def plan(self, bundle: ScenarioBundle, options: PlannerOptions, use_cache: bool = False) -> PlanResult:
        try:
            forbidden = self._forbidden_states(bundle, options)
            product = bundle.product(forbidden)
            horizon = options.horizon

            key = self.cache_key(bundle, options) if use_cache else None
            cached = self.storage.load_cached(key) if use_cache else None
            if cached is not None:
                policy, values = Policy(table=cached["table"]), ValueTable(values=cached["values"])
            else:
                policy, values = self._dispatch(bundle, options, product, forbidden)
                if use_cache:
                    self.storage.save_cached(key, {"table": policy.table, "values": values.values})

            logger.info(f"Planned {options.planner} for {bundle.kind} over horizon {horizon}")
            return PlanResult(bundle=bundle, options=options, product=product, policy=policy, values=values)
        except Exception as e:
            logger.error(f"Error in planning service: {e}")
            logger.error(traceback.format_exc())
            raise

    def _dispatch(self, bundle: ScenarioBundle, options: PlannerOptions, product: ProductMdp, forbidden: List[int]):
        horizon = options.horizon
        if options.planner in ("optimal", "no-obs"):
            return plan_optimal_deception(product, horizon)

        if options.planner == "nominal":
            policy = bundle.nominal_policy(horizon)
            return policy, policy_value_table(product.mdp, policy, horizon)

        if options.planner == "robust-dynamics":
            family = KernelFamily.interval(
                "p", options.p_low, options.p_high, lambda p: self._variant(bundle, p=p).kernel,
            )
            return plan_robust_dynamics(bundle.agent, family, bundle.reward, horizon, forbidden, bundle.start)

        scale = REWARD_SCALE_FIELD[bundle.kind]
        family = RewardFamily.from_bounds(
            self._variant(bundle, **{scale: options.reward_low}).reward,
            self._variant(bundle, **{scale: options.reward_high}).reward,
        )
        return plan_robust_rewards(bundle.agent, bundle.kernel, family, horizon, forbidden, bundle.start)

    def make_controller(self, result: PlanResult) -> Controller:
        if result.options.planner == "no-obs":
            ctrl = NoObsController(
                result.product,
                result.policy,
                result.values,
                mode=result.options.no_obs_mode,
                initial=result.bundle.initial_distribution(),
            )
            return NoObsAdapter(ctrl)
        return PolicyController(result.policy, result.bundle.belief_count)

    def summarize(self, result: PlanResult) -> ValueSummary:
        """Start values of the plan next to the nominal policy's exact value under the belief-induced reward"""
        bundle = result.bundle
        horizon = result.options.horizon
        starts = bundle.start * bundle.belief_count + np.arange(bundle.belief_count)
        initial = bundle.initial_distribution()
        no_obs = result.options.planner == "no-obs"

        values = result.values
        if values is None:
            values = policy_value_table(result.product.mdp, result.policy, horizon)
        start_values = values.values[0, starts]
        nominal = policy_value_table(result.product.mdp, bundle.nominal_policy(horizon), horizon)
        nominal_values = nominal.values[0, starts]

        expected = float(initial @ start_values)
        nominal_value = float(initial @ nominal_values)
        return ValueSummary(
            planner=result.options.planner,
            horizon=horizon,
            start=tuple(bundle.grid.cell(bundle.start)),
            start_values=start_values.tolist(),
            expected_value=expected,
            nominal_values=nominal_values.tolist(),
            nominal_value=nominal_value,
            deception_gain=None if no_obs else expected - nominal_value,
            value_basis="full-observation" if no_obs else "plan",
            no_obs_mode=result.options.no_obs_mode if no_obs else None,
        )

    @staticmethod
    def policy_document(result: PlanResult) -> PolicyDocument:
        bundle = result.bundle
        options = result.options
        return PolicyDocument(
            format=POLICY_FORMAT,
            scenario=bundle.config.model_dump(mode="json"),
            options=options,
            planner=options.planner,
            no_obs_mode=options.no_obs_mode if options.planner == "no-obs" else None,
            horizon=result.policy.horizon,
            state_count=bundle.agent.state_count,
            belief_count=bundle.belief_count,
            action_count=bundle.agent.action_count,
            states=[tuple(cell) for cell in bundle.grid.cells()],
            beliefs=bundle.belief_labels,
            actions=bundle.action_names,
            table=result.policy.table.tolist(),
        )

    def result_from_document(self, document: PolicyDocument) -> PlanResult:
        """
        Rebuild a PlanResult from a stored policy. The value table is only
        needed by weighted-argmax controllers and is recomputed for them.
        """
        bundle = build_scenario(parse_scenario(document.scenario))
        expected = (bundle.agent.state_count, bundle.belief_count, bundle.agent.action_count)
        if expected != (document.state_count, document.belief_count, document.action_count):
            raise ConfigError(f"policy dimensions {(document.state_count, document.belief_count, document.action_count)} "
                              f"do not match the scenario {expected}")
        policy = Policy(table=np.asarray(document.table, dtype=np.int64))
        options = document.options
        if options.planner == "no-obs" and options.no_obs_mode == "weighted-argmax":
            return self.plan(bundle, options)
        product = bundle.product(self._forbidden_states(bundle, options))
        return PlanResult(bundle=bundle, options=options, product=product, policy=policy)
