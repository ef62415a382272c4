import os
from dotenv import load_dotenv
from pathlib import Path

# Load environment variables
load_dotenv()

# Base directory
BASE_DIR = Path(__file__).resolve().parent.parent

# Scenario presets shipped with the repo
SCENARIO_DIR = BASE_DIR / "data" / "scenarios"

# Output locations
OUTPUT_DIR = Path(os.getenv("DECEPTIVE_PLANNER_OUTPUT_DIR", str(BASE_DIR / "output")))
CACHE_DIR = Path(os.getenv("DECEPTIVE_PLANNER_CACHE_DIR", str(OUTPUT_DIR / "cache")))

# Parallelism cap for Monte-Carlo runs
PLANNER_THREADS = max(1, int(os.getenv("DECEPTIVE_PLANNER_THREADS", "1")))

# Experiment defaults (T=2000, 100 runs)
DEFAULT_HORIZON = int(os.getenv("DECEPTIVE_PLANNER_HORIZON", "2000"))
DEFAULT_RUNS = int(os.getenv("DECEPTIVE_PLANNER_RUNS", "100"))
DEFAULT_SEED = int(os.getenv("DECEPTIVE_PLANNER_SEED", "0"))

# Largest number of policies brute_force_plan will enumerate
BRUTE_FORCE_BUDGET = int(os.getenv("DECEPTIVE_PLANNER_BRUTE_FORCE_BUDGET", str(10 ** 7)))

# Numeric tolerances
NORMALIZATION_TOL = 1e-9
STATIONARY_TOL = 1e-12

LOG_LEVEL = os.getenv("DECEPTIVE_PLANNER_LOG_LEVEL", "INFO")
