from __future__ import annotations

import json
from pathlib import Path
from typing import Dict, List, Optional

from pydantic import ValidationError

from ..errors import ConfigError
from ..geometry import RigidTransform
from ..models import SensorCalibration
from ..sensor import SensorModel
from ..settings import get_settings


_CALIBRATION_CACHE: Optional[Dict[str, SensorCalibration]] = None
_CACHE_PATH: Optional[Path] = None


# path of the bundled calibration file unless OCCLUFUSE_CALIBRATION_PATH overrides it
def _calibration_path() -> Path:
    return get_settings().calibration_path


# load all object classes; cached per path
def load_calibrations(force: bool = False, path: Optional[Path] = None) -> Dict[str, SensorCalibration]:
    global _CALIBRATION_CACHE, _CACHE_PATH
    source = Path(path) if path is not None else _calibration_path()
    if _CALIBRATION_CACHE is not None and not force and _CACHE_PATH == source:
        return _CALIBRATION_CACHE
    try:
        with source.open("r", encoding="utf-8") as f:
            data = json.load(f)
    except FileNotFoundError as exc:
        raise ConfigError(f"calibration file not found: {source}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{source}: line {exc.lineno}: {exc.msg}") from exc
    try:
        parsed = {name.lower(): SensorCalibration.model_validate(entry) for name, entry in data.items()}
    except ValidationError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    _CALIBRATION_CACHE = parsed
    _CACHE_PATH = source
    return _CALIBRATION_CACHE


def object_classes() -> List[str]:
    return sorted(load_calibrations())


def get_calibration(object_class: str) -> SensorCalibration:
    calibrations = load_calibrations()
    entry = calibrations.get(object_class.lower())
    if entry is None:
        raise ConfigError(f"unknown object class {object_class!r}; known: {', '.join(sorted(calibrations))}")
    return entry


# a SensorModel for the object class, optionally placed at a mount
def sensor_model_for(object_class: str, mount: Optional[RigidTransform] = None) -> SensorModel:
    return get_calibration(object_class).to_domain(mount)
