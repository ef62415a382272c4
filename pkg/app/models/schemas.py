from pathlib import Path
from typing import Annotated, Any, Dict, List, Literal, Optional, Tuple, Union

from pydantic import BaseModel, Field, TypeAdapter, ValidationError, field_validator, model_validator

from app.config import DEFAULT_HORIZON, DEFAULT_RUNS, DEFAULT_SEED
from app.exceptions import ConfigError

Cell = Tuple[int, int]

PlannerKind = Literal["optimal", "robust-dynamics", "robust-rewards", "no-obs", "nominal"]
NoObsMode = Literal["randomized", "weighted-argmax"]

POLICY_FORMAT = "deceptive-policy/1"


class GridSize(BaseModel):
    w: int = Field(..., description="Number of columns", ge=1)
    h: int = Field(..., description="Number of rows", ge=1)

    def contains(self, cell: Cell) -> bool:
        return 0 <= cell[0] < self.w and 0 <= cell[1] < self.h


def _check_cells(grid: GridSize, **cells: List[Cell]):
    for name, values in cells.items():
        for cell in values:
            if not grid.contains(cell):
                raise ValueError(f"{name} cell {tuple(cell)} is outside the {grid.w}x{grid.h} grid")


class CopsConfig(BaseModel):
    kind: Literal["cops"] = "cops"
    grid: GridSize
    start: Cell
    goals: List[Cell] = Field(..., min_length=1)
    true_goal: int = Field(0, description="Index of the true goal in goals", ge=0)
    p: float = Field(0.1, description="Adversary learning rate", ge=0, le=1)
    reward_plus: float = 10.0
    reward_minus: float = -10.0
    initial_belief: Union[Literal["uniform"], int] = "uniform"
    forbidden: List[Cell] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_layout(self):
        _check_cells(self.grid, start=[self.start], goal=self.goals, forbidden=self.forbidden)
        if len(set(self.goals)) != len(self.goals):
            raise ValueError("goals must be distinct")
        if self.true_goal >= len(self.goals):
            raise ValueError(f"true_goal {self.true_goal} is not an index into {len(self.goals)} goals")
        if isinstance(self.initial_belief, int) and not 0 <= self.initial_belief < len(self.goals):
            raise ValueError(f"initial_belief {self.initial_belief} is not a goal index")
        return self


class CamoConfig(BaseModel):
    kind: Literal["camo"] = "camo"
    grid: GridSize
    start: Cell = (0, 0)
    tg: Cell
    p: float = Field(0.1, description="Probability that camouflage fails", ge=0, le=1)
    r: float = Field(1.0, description="Adversary vision radius", ge=0)
    c: float = Field(5.0, description="Camouflage cost", ge=0)
    reward_peak: float = Field(10.0, description="Nominal reward at the true goal")
    initial_belief: Union[Literal["start"], Cell] = "start"
    forbidden: List[Cell] = Field(default_factory=list)

    @model_validator(mode="after")
    def validate_layout(self):
        _check_cells(self.grid, start=[self.start], tg=[self.tg], forbidden=self.forbidden)
        if self.initial_belief != "start":
            _check_cells(self.grid, initial_belief=[self.initial_belief])
        return self


ScenarioConfig = Annotated[Union[CopsConfig, CamoConfig], Field(discriminator="kind")]
_scenario_adapter = TypeAdapter(ScenarioConfig)


def parse_scenario(document: Any) -> Union[CopsConfig, CamoConfig]:
    if isinstance(document, (CopsConfig, CamoConfig)):
        return document
    try:
        return _scenario_adapter.validate_python(document)
    except ValidationError as e:
        raise ConfigError(f"invalid scenario document: {e}") from e


class PlannerOptions(BaseModel):
    planner: PlannerKind = "optimal"
    horizon: int = Field(DEFAULT_HORIZON, ge=0)
    forbidden: List[Cell] = Field(default_factory=list)
    p_low: Optional[float] = Field(None, ge=0, le=1)
    p_high: Optional[float] = Field(None, ge=0, le=1)
    reward_low: Optional[float] = None
    reward_high: Optional[float] = None
    no_obs_mode: NoObsMode = "randomized"

    @model_validator(mode="after")
    def validate_intervals(self):
        if self.planner == "robust-dynamics":
            if self.p_low is None or self.p_high is None:
                raise ValueError("robust-dynamics needs p_low and p_high")
            if self.p_low > self.p_high:
                raise ValueError(f"p_low {self.p_low} exceeds p_high {self.p_high}")
        if self.planner == "robust-rewards":
            if self.reward_low is None or self.reward_high is None:
                raise ValueError("robust-rewards needs reward_low and reward_high")
            if self.reward_low > self.reward_high:
                raise ValueError(f"reward_low {self.reward_low} exceeds reward_high {self.reward_high}")
        return self


class ValueSummary(BaseModel):
    planner: PlannerKind
    horizon: int
    start: Cell
    start_values: List[float] = Field(..., description="V_0(start, b) for every belief b")
    expected_value: float = Field(..., description="Start value under the initial belief distribution")
    nominal_values: List[float]
    nominal_value: float
    # None when the values only bound the controller from above
    deception_gain: Optional[float] = None
    value_basis: Literal["plan", "full-observation"] = Field(
        "plan", description="full-observation: start values of the fully observed plan the no-obs controller follows"
    )
    no_obs_mode: Optional[NoObsMode] = None


class PolicyDocument(BaseModel):
    format: Literal["deceptive-policy/1"] = POLICY_FORMAT
    scenario: Dict[str, Any]
    options: PlannerOptions
    planner: PlannerKind
    no_obs_mode: Optional[NoObsMode] = None
    horizon: int
    state_count: int
    belief_count: int
    action_count: int
    states: List[Cell]
    beliefs: List[str]
    actions: List[str]
    product_index: str = "s*belief_count+b"
    table: List[List[int]]

    @model_validator(mode="after")
    def validate_table(self):
        if len(self.table) != self.horizon + 1:
            raise ValueError(f"table has {len(self.table)} rows, expected {self.horizon + 1}")
        width = self.state_count * self.belief_count
        if any(len(row) != width for row in self.table):
            raise ValueError(f"every table row must have {width} entries")
        return self


class PlanRequest(BaseModel):
    scenario: Union[str, Dict[str, Any]] = Field(..., description="Preset name or scenario document")
    options: PlannerOptions = Field(default_factory=PlannerOptions)


class SimulateRequest(PlanRequest):
    runs: int = Field(DEFAULT_RUNS, ge=1)
    seed: int = DEFAULT_SEED
    observe_every: Optional[int] = Field(None, ge=1)
    curve_points: int = Field(50, description="Points kept in the returned mean curve", ge=2)


class CurvePoint(BaseModel):
    t: int
    mean: float
    std: float


class SimulationResponse(BaseModel):
    planner: PlannerKind
    runs: int
    horizon: int
    terminal_mean: float
    terminal_std: float
    curve: List[CurvePoint]


class SweepRequest(BaseModel):
    scenario: Union[str, Dict[str, Any]] = "cops"
    p_plan: float = Field(0.1, ge=0, le=1)
    p_grid: List[float] = Field(..., min_length=1)
    horizon: int = Field(DEFAULT_HORIZON, ge=0)
    runs: int = Field(DEFAULT_RUNS, ge=1)
    seed: int = DEFAULT_SEED

    @field_validator("p_grid")
    def validate_grid(cls, v):
        if any(not 0 <= p <= 1 for p in v):
            raise ValueError("every p in p_grid must lie in [0, 1]")
        return v


class SweepRow(BaseModel):
    p_true: float
    delta: float


class SweepResponse(BaseModel):
    p_plan: float
    rows: List[SweepRow]


class CliConfig(BaseModel):
    command: Literal["plan", "simulate", "sweep"]
    scenario: Optional[str] = None
    planner: PlannerKind = "optimal"
    horizon: int = Field(DEFAULT_HORIZON, ge=0)
    runs: int = Field(DEFAULT_RUNS, ge=1)
    seed: int = DEFAULT_SEED
    out: Optional[Path] = None
    policy: Optional[Path] = None
    forbidden: List[Cell] = Field(default_factory=list)
    p_low: Optional[float] = Field(None, ge=0, le=1)
    p_high: Optional[float] = Field(None, ge=0, le=1)
    reward_low: Optional[float] = None
    reward_high: Optional[float] = None
    p_grid: List[float] = Field(default_factory=list)
    p_plan: Optional[float] = Field(None, ge=0, le=1)
    no_obs_mode: NoObsMode = "randomized"
    observe_every: Optional[int] = Field(None, ge=1)
    trace_dir: Optional[Path] = None
    cache: bool = False

    @model_validator(mode="after")
    def validate_command(self):
        if self.scenario is None and not (self.command == "simulate" and self.policy is not None):
            raise ValueError("--scenario is required")
        if self.command == "sweep":
            if not self.p_grid:
                raise ValueError("sweep needs a non-empty --p-grid")
            if any(not 0 <= p <= 1 for p in self.p_grid):
                raise ValueError("every p in --p-grid must lie in [0, 1]")
        if self.policy is not None and not self.policy.is_file():
            raise ValueError(f"policy file {self.policy} does not exist")
        return self

    def planner_options(self) -> PlannerOptions:
        return PlannerOptions(
            planner=self.planner,
            horizon=self.horizon,
            forbidden=self.forbidden,
            p_low=self.p_low,
            p_high=self.p_high,
            reward_low=self.reward_low,
            reward_high=self.reward_high,
            no_obs_mode=self.no_obs_mode,
        )
