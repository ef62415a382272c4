"""
Command-line entry point: ``python -m app.cli {plan,simulate,sweep} ...``

Exit codes: 0 success, 1 usage or configuration error, 2 infeasible
constraints, 3 numeric validation failure.
"""

import argparse
import logging
import sys
import traceback
from pathlib import Path
from typing import List, Optional, Tuple

from pydantic import ValidationError

from app.config import DEFAULT_HORIZON, DEFAULT_RUNS, DEFAULT_SEED, LOG_LEVEL, OUTPUT_DIR
from app.exceptions import ConfigError, DeceptionError, PolicyHorizonError
from app.models.schemas import CliConfig, CopsConfig
from app.services.planning_service import PlanningService
from app.services.simulation_service import SimulationService
from app.services.storage_service import StorageService

logger = logging.getLogger(__name__)


class _ArgumentParser(argparse.ArgumentParser):
    # Usage errors share the configuration exit code
    def error(self, message):
        raise ConfigError(f"{self.prog}: {message}")


def _cell(text: str) -> Tuple[int, int]:
    try:
        col, row = (int(part) for part in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a cell as col,row, got {text!r}")
    return col, row


def _float_list(text: str) -> List[float]:
    try:
        values = [float(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")
    if not values:
        raise argparse.ArgumentTypeError("the list is empty")
    return values


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="deceptive-planner", description="Deceptive planning on gridworld scenarios")
    commands = parser.add_subparsers(dest="command", required=True)

    common = _ArgumentParser(add_help=False)
    common.add_argument("--scenario", help="Scenario JSON file or preset name (cops, camouflage)")
    common.add_argument("--horizon", type=int, default=DEFAULT_HORIZON, help="Horizon T")
    common.add_argument("--seed", type=int, default=DEFAULT_SEED)
    common.add_argument("--out", type=Path, help="Output file")

    planner = _ArgumentParser(add_help=False)
    planner.add_argument("--planner", default="optimal",
                         choices=["optimal", "robust-dynamics", "robust-rewards", "no-obs", "nominal"])
    planner.add_argument("--forbidden", type=_cell, nargs="*", default=[], help="Forbidden cells, e.g. 6,5 4,3")
    planner.add_argument("--p-low", type=float)
    planner.add_argument("--p-high", type=float)
    planner.add_argument("--reward-low", type=float)
    planner.add_argument("--reward-high", type=float)
    planner.add_argument("--no-obs-mode", default="randomized", choices=["randomized", "weighted-argmax"])
    planner.add_argument("--cache", action="store_true", help="Reuse planned tables from the joblib cache")

    commands.add_parser("plan", parents=[common, planner], help="Plan and write a policy document")

    simulate = commands.add_parser("simulate", parents=[common, planner], help="Monte-Carlo running-average statistics")
    simulate.add_argument("--runs", type=int, default=DEFAULT_RUNS)
    simulate.add_argument("--policy", type=Path, help="Simulate a stored policy instead of planning")
    simulate.add_argument("--trace-dir", type=Path, help="Write one JSON-lines trace per run")
    simulate.add_argument("--observe-every", type=int,
                          help="Reveal the adversary's belief to no-obs controllers every k steps")

    sweep = commands.add_parser("sweep", parents=[common], help="Learning-rate mismatch sweep")
    sweep.add_argument("--runs", type=int, default=DEFAULT_RUNS)
    sweep.add_argument("--p-grid", type=_float_list, default=[], help="Comma-separated true p values")
    sweep.add_argument("--p-plan", type=float, help="p used for planning (default: the scenario's p)")
    return parser


def parse_args(argv: Optional[List[str]] = None) -> CliConfig:
    args = vars(build_parser().parse_args(argv))
    try:
        cfg = CliConfig(**{key: value for key, value in args.items() if value is not None})
        if cfg.command != "sweep":
            cfg.planner_options()
        return cfg
    except ValidationError as e:
        raise ConfigError(f"invalid options: {e}") from e


def _default_out(cfg: CliConfig, suffix: str) -> Path:
    stem = Path(cfg.scenario).stem if cfg.scenario else (cfg.policy.stem if cfg.policy else "run")
    return OUTPUT_DIR / f"{stem}-{cfg.planner}{suffix}"


def cmd_plan(cfg: CliConfig, planning: Optional[PlanningService] = None) -> int:
    planning = planning or PlanningService()
    storage = planning.storage
    bundle = planning.build_bundle(cfg.scenario)
    result = planning.plan(bundle, cfg.planner_options(), use_cache=cfg.cache)
    summary = planning.summarize(result)

    out = cfg.out or _default_out(cfg, ".policy.json")
    storage.save_policy(planning.policy_document(result), out)
    storage.save_summary(summary, out)
    if summary.deception_gain is None:
        logger.info(f"Full-observation start value {summary.expected_value:.4f}, nominal {summary.nominal_value:.4f}")
    else:
        logger.info(f"Start value {summary.expected_value:.4f}, nominal {summary.nominal_value:.4f}, "
                    f"deception gain {summary.deception_gain:.4f}")
    return 0


def cmd_simulate(cfg: CliConfig, planning: Optional[PlanningService] = None) -> int:
    planning = planning or PlanningService()
    storage = planning.storage
    if cfg.policy is not None:
        document = storage.load_policy(cfg.policy)
        if document.horizon < cfg.horizon:
            raise PolicyHorizonError(f"policy horizon {document.horizon} is shorter than --horizon {cfg.horizon}")
        result = planning.result_from_document(document)
    else:
        result = planning.plan(planning.build_bundle(cfg.scenario), cfg.planner_options(), use_cache=cfg.cache)

    simulation = SimulationService()
    controller = planning.make_controller(result)
    stats = simulation.run(result.bundle, controller, cfg.runs, cfg.horizon, cfg.seed, cfg.observe_every)
    storage.write_stats(stats.to_frame(), cfg.out or _default_out(cfg, ".stats.csv"))

    if cfg.trace_dir is not None:
        traces = simulation.traces(result.bundle, controller, cfg.runs, cfg.horizon, cfg.seed, cfg.observe_every)
        for i, trace in enumerate(traces):
            storage.write_trace(trace.to_frame(), cfg.trace_dir / f"run-{i:04d}.jsonl")
        logger.info(f"Wrote {cfg.runs} trace(s) to {cfg.trace_dir}")
    return 0


def cmd_sweep(cfg: CliConfig, planning: Optional[PlanningService] = None) -> int:
    planning = planning or PlanningService()
    config = planning.load_config(cfg.scenario)
    if not isinstance(config, CopsConfig):
        raise ConfigError("the mismatch sweep needs a cops scenario")
    p_plan = config.p if cfg.p_plan is None else cfg.p_plan
    frame = SimulationService().sweep(config, p_plan, cfg.p_grid, cfg.runs, cfg.horizon, cfg.seed)
    planning.storage.write_sweep(frame, cfg.out or _default_out(cfg, ".sweep.csv"))
    return 0


COMMANDS = {"plan": cmd_plan, "simulate": cmd_simulate, "sweep": cmd_sweep}


def main(argv: Optional[List[str]] = None) -> int:
    logging.basicConfig(
        level=LOG_LEVEL,
        format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
    )
    try:
        cfg = parse_args(argv)
        return COMMANDS[cfg.command](cfg, PlanningService(StorageService()))
    except DeceptionError as e:
        logger.error(f"{type(e).__name__}: {e}")
        logger.error(traceback.format_exc())
        return e.exit_code


if __name__ == "__main__":
    sys.exit(main())
