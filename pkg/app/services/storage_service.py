import json
import logging
import traceback
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import joblib
import pandas as pd
from pydantic import ValidationError

from app.config import CACHE_DIR, SCENARIO_DIR
from app.exceptions import ConfigError
from app.models.schemas import PolicyDocument, ValueSummary

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class StorageService:
    _instance = None

    def __new__(cls):
        if cls._instance is None:
            logger.info("Creating new StorageService instance")
            instance = super(StorageService, cls).__new__(cls)
            instance.scenario_dir = SCENARIO_DIR
            instance.cache_dir = CACHE_DIR
            cls._instance = instance
        return cls._instance

    # Scenario documents

    def presets(self) -> List[str]:
        return sorted(path.stem for path in Path(self.scenario_dir).glob("*.json"))

    def load_scenario(self, ref: PathLike) -> Dict[str, Any]:
        """Load a scenario document from a file path or a preset name"""
        path = Path(ref)
        if not path.is_file():
            preset = Path(self.scenario_dir) / f"{ref}.json"
            if not preset.is_file():
                raise ConfigError(f"scenario {ref} is neither a file nor a preset ({', '.join(self.presets())})")
            path = preset
        try:
            with open(path) as f:
                document = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"scenario file {path} is not valid JSON: {e}") from e
        logger.info(f"Loaded scenario from {path}")
        return document

    # Policies and summaries

    def save_policy(self, document: PolicyDocument, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(document.model_dump_json())
        logger.info(f"Policy written to {path}")
        return path

    def load_policy(self, path: PathLike) -> PolicyDocument:
        try:
            return PolicyDocument.model_validate_json(Path(path).read_text())
        except ValidationError as e:
            raise ConfigError(f"invalid policy document {path}: {e}") from e

    @staticmethod
    def summary_path(policy_path: PathLike) -> Path:
        policy_path = Path(policy_path)
        return policy_path.with_name(f"{policy_path.stem}.summary.json")

    def save_summary(self, summary: ValueSummary, policy_path: PathLike) -> Path:
        path = self.summary_path(policy_path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(summary.model_dump_json(indent=2))
        logger.info(f"Value summary written to {path}")
        return path

    # Tabular outputs

    def write_stats(self, frame: pd.DataFrame, path: PathLike) -> Path:
        return self._write_csv(frame[["t", "mean_avg_reward", "std_avg_reward"]], path)

    def write_sweep(self, frame: pd.DataFrame, path: PathLike) -> Path:
        return self._write_csv(frame[["p_true", "delta"]], path)

    def write_trace(self, frame: pd.DataFrame, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame[["t", "s", "B", "a", "reward"]].to_json(path, orient="records", lines=True)
        return path

    def _write_csv(self, frame: pd.DataFrame, path: PathLike) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        logger.info(f"Wrote {len(frame)} row(s) to {path}")
        return path

    # Binary cache of planned tables

    def cache_path(self, key: str) -> Path:
        return Path(self.cache_dir) / f"{key}.joblib"

    def load_cached(self, key: str) -> Optional[Any]:
        path = self.cache_path(key)
        if not path.is_file():
            return None
        try:
            cached = joblib.load(path)
            logger.info(f"Loaded cached plan {key}")
            return cached
        except Exception as e:
            logger.warning(f"Ignoring unreadable cache entry {path}: {e}")
            logger.debug(traceback.format_exc())
            return None

    def save_cached(self, key: str, obj: Any) -> Path:
        path = self.cache_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        joblib.dump(obj, path, compress=3)
        logger.info(f"Cached plan {key} at {path}")
        return path
