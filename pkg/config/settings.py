import json
import logging
import os
from functools import lru_cache
from pathlib import Path
from typing import Optional, Union

from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from models.curtain_models import SensorConfig
from utils.exceptions import ConfigurationError

# Load environment variables
load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class Settings(BaseModel):
    threads: int = Field(1, ge=1)
    log_level: str = "INFO"
    sensor_config_path: Optional[str] = None
    bench_trials: int = Field(100, ge=2)


@lru_cache()
def get_settings() -> Settings:
    """
    Settings read from the environment (and a .env file when present)
    """
    try:
        return Settings(
            threads=int(os.getenv("CURTAIN_THREADS", "1")),
            log_level=os.getenv("CURTAIN_LOG_LEVEL", "INFO").upper(),
            sensor_config_path=os.getenv("CURTAIN_SENSOR_CONFIG") or None,
            bench_trials=int(os.getenv("CURTAIN_BENCH_TRIALS", "100"))
        )
    except (ValueError, ValidationError) as error:
        raise ConfigurationError(f"invalid environment configuration: {error}") from error


def load_sensor_config(path: Optional[Union[str, Path]] = None) -> SensorConfig:
    """
    Parse a sensor configuration file; falls back to CURTAIN_SENSOR_CONFIG, then to defaults
    """
    path = path or get_settings().sensor_config_path
    if path is None:
        return SensorConfig()

    path = Path(path)
    try:
        return SensorConfig.model_validate(json.loads(path.read_text()))
    except FileNotFoundError as error:
        raise ConfigurationError(f"sensor configuration {path} not found") from error
    except json.JSONDecodeError as error:
        raise ConfigurationError(f"sensor configuration {path} is not valid JSON: {error}") from error
    except ValidationError as error:
        raise ConfigurationError(f"sensor configuration {path} is invalid: {error}") from error


def configure_logging(level: Optional[str] = None) -> None:
    level = (level or get_settings().log_level).upper()
    numeric = logging.getLevelName(level)
    if not isinstance(numeric, int):
        raise ConfigurationError(f"unknown log level {level!r}")
    logging.basicConfig(level=numeric, format=LOG_FORMAT)
