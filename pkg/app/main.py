import logging
import traceback
from typing import List

import numpy as np
from fastapi import Depends, FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware

from app.config import LOG_LEVEL
from app.exceptions import ConfigError, DeceptionError, InfeasibleConstraintError, PolicyHorizonError
from app.models.schemas import (
    CopsConfig,
    CurvePoint,
    PlanRequest,
    SimulateRequest,
    SimulationResponse,
    SweepRequest,
    SweepResponse,
    SweepRow,
    ValueSummary,
)
from app.services.planning_service import PlanningService
from app.services.simulation_service import SimulationService
from app.services.storage_service import StorageService

# Configure logging
logging.basicConfig(
    level=LOG_LEVEL,
    format="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
)
logger = logging.getLogger(__name__)

# Initialize FastAPI app
app = FastAPI(
    title="Deceptive Planning API",
    description="Plan and simulate deceptive policies against an adversary with evolving beliefs",
    version="1.0.0",
)

# Add CORS middleware
app.add_middleware(
    CORSMiddleware,
    allow_origins=["*"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


# Dependency injections
def get_storage_service():
    return StorageService()


def get_planning_service(storage: StorageService = Depends(get_storage_service)):
    return PlanningService(storage)


def get_simulation_service():
    return SimulationService()


def _http_error(e: Exception) -> HTTPException:
    logger.error(f"{type(e).__name__}: {e}")
    logger.error(traceback.format_exc())
    if isinstance(e, (ConfigError, PolicyHorizonError)):
        return HTTPException(status_code=422, detail=str(e))
    if isinstance(e, InfeasibleConstraintError):
        return HTTPException(status_code=409, detail=str(e))
    return HTTPException(status_code=500, detail=str(e))


@app.get("/health")
async def health_check():
    """
    Health check endpoint
    """
    return {"status": "healthy"}


@app.get("/scenarios", response_model=List[str])
def list_scenarios(storage: StorageService = Depends(get_storage_service)):
    return storage.presets()


@app.get("/scenarios/{name}")
def get_scenario(name: str, storage: StorageService = Depends(get_storage_service)):
    if name not in storage.presets():
        raise HTTPException(status_code=404, detail=f"No preset named {name}")
    return storage.load_scenario(name)


@app.post("/plan", response_model=ValueSummary)
def plan(request: PlanRequest, planning: PlanningService = Depends(get_planning_service)):
    """
    Plan for a scenario and return start values, the nominal policy's value
    and the deception gain. Policy tables are written by the CLI only.
    """
    try:
        bundle = planning.build_bundle(request.scenario)
        result = planning.plan(bundle, request.options)
        return planning.summarize(result)
    except DeceptionError as e:
        raise _http_error(e)


@app.post("/simulate", response_model=SimulationResponse)
def simulate(
        request: SimulateRequest,
        planning: PlanningService = Depends(get_planning_service),
        simulation: SimulationService = Depends(get_simulation_service),
):
    """
    Monte-Carlo running-average reward of a planned controller, with the mean
    curve down-sampled to at most ``curve_points`` points
    """
    try:
        bundle = planning.build_bundle(request.scenario)
        result = planning.plan(bundle, request.options)
        controller = planning.make_controller(result)
        stats = simulation.run(bundle, controller, request.runs, request.options.horizon,
                               request.seed, request.observe_every)
    except DeceptionError as e:
        raise _http_error(e)

    keep = np.unique(np.linspace(0, len(stats.mean) - 1, request.curve_points).round().astype(int))
    return SimulationResponse(
        planner=request.options.planner,
        runs=stats.runs,
        horizon=request.options.horizon,
        terminal_mean=stats.terminal_mean,
        terminal_std=stats.terminal_std,
        curve=[CurvePoint(t=int(i) + 1, mean=float(stats.mean[i]), std=float(stats.std[i])) for i in keep],
    )


@app.post("/sweep", response_model=SweepResponse)
def sweep(
        request: SweepRequest,
        planning: PlanningService = Depends(get_planning_service),
        simulation: SimulationService = Depends(get_simulation_service),
):
    try:
        config = planning.load_config(request.scenario)
        if not isinstance(config, CopsConfig):
            raise ConfigError("the mismatch sweep needs a cops scenario")
        frame = simulation.sweep(config, request.p_plan, request.p_grid, request.runs, request.horizon, request.seed)
    except DeceptionError as e:
        raise _http_error(e)
    rows = [SweepRow(p_true=row.p_true, delta=row.delta) for row in frame.itertuples(index=False)]
    return SweepResponse(p_plan=request.p_plan, rows=rows)
