from __future__ import annotations

from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


REPO_ROOT = Path(__file__).resolve().parents[1]


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="OCCLUFUSE_", env_file=".env", extra="ignore")

    seed: Optional[int] = Field(None, ge=0, description="Fallback seed when --seed is not given")
    output_dir: Path = REPO_ROOT / "data" / "runs"
    metrics_path: Path = REPO_ROOT / "data" / "metrics.jsonl"
    metrics_enabled: bool = True
    calibration_path: Path = REPO_ROOT / "calibration" / "sensors.json"
    jobs: int = Field(1, ge=1)
    log_level: str = "WARNING"


@lru_cache(maxsize=1)
def get_settings() -> Settings:
    return Settings()


def reset_settings() -> None:
    get_settings.cache_clear()
