import copy
import json
import os
from typing import Any, Dict, List

from ..errors import ConfigValidationError
from ..schemas import VehicleType

PRESETS_FILE = os.path.join(os.path.dirname(__file__), '..', 'presets.json')

with open(PRESETS_FILE, 'r', encoding="utf-8") as f:
    _bundled = json.load(f)

PRESET_NAMES = sorted(_bundled["presets"])


def default_vehicles() -> List[VehicleType]:
    """car, van, 20-seater, minibus and bus."""
    return [VehicleType(**v) for v in _bundled["vehicles"]]


def get_preset(name: str) -> Dict[str, Any]:
    """Preset as a raw config dict, with the default vehicle catalog filled in."""
    key = name.lower()
    if key not in _bundled["presets"]:
        raise ConfigValidationError(f"unknown preset {name!r}; choose from {', '.join(PRESET_NAMES)}")
    preset = copy.deepcopy(_bundled["presets"][key])
    fleet = preset.setdefault("fleet", {})
    fleet.setdefault("vehicles", copy.deepcopy(_bundled["vehicles"]))
    return preset
