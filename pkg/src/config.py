"""
Run Configuration - Presets, config files and command-line overrides

Resolution order: built-in defaults -> preset -> JSON config file ->
command-line flags. The resolved configuration is written next to every
artifact as resolved_config.json.
"""

import copy
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Sequence, Union

from .errors import ConfigurationError
from .evalkit import EvalProtocol
from .lugan import GeneratorConfig
from .recognizer import RecognizerConfig
from .synth_gait import CameraRig
from .trainers import LuganTrainingConfig, RecognizerTrainingConfig
from .utils import default_output_root, load_json, save_json

logger = logging.getLogger(__name__)

RESOLVED_NAME = "resolved_config.json"
SECTIONS = ("synth", "rig", "recognizer", "lugan", "lugan_training", "recognizer_training", "protocol")

DEFAULTS: Dict[str, Dict[str, Any]] = {
    "synth": {"ids": 20, "conditions": ["NM", "BG", "CL"], "frames": 60, "runs": 2, "workers": 1},
    "rig": {"preset": "casia-like"},
    "recognizer": {},
    "lugan": {"miniature": False},
    "lugan_training": {},
    "recognizer_training": {},
    "protocol": {"same_view_policy": "both"},
}

PRESETS: Dict[str, Dict[str, Dict[str, Any]]] = {
    "casia-like": {
        "rig": {"preset": "casia-like"},
        "synth": {"runs": 6},
    },
    "ou-like": {
        "rig": {"preset": "ou-like"},
        "synth": {"conditions": ["NM"], "frames": 25, "runs": 2},
    },
    "cocentered-k": {
        "rig": {"preset": "cocentered-4"},
        "synth": {"conditions": ["NM"], "runs": 2},
    },
    "acceptance": {
        "rig": {"preset": "acceptance"},
        "synth": {"ids": 20, "conditions": ["NM", "BG", "CL"], "frames": 60, "runs": 2},
        "recognizer": {"width_scale": 0.25},
        "lugan": {"miniature": True},
        "lugan_training": {"epochs": 20, "batch_size": 32},
        "recognizer_training": {"epochs": 30, "P": 8, "K": 4},
    },
}


@dataclass
class RunConfig:
    """Fully resolved settings of one invocation"""

    out: str = ""
    seed: int = 0
    preset: Optional[str] = None
    synth: Dict[str, Any] = field(default_factory=dict)
    rig: Dict[str, Any] = field(default_factory=dict)
    recognizer: Dict[str, Any] = field(default_factory=dict)
    lugan: Dict[str, Any] = field(default_factory=dict)
    lugan_training: Dict[str, Any] = field(default_factory=dict)
    recognizer_training: Dict[str, Any] = field(default_factory=dict)
    protocol: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def save(self, directory: Union[str, Path]) -> Path:
        return save_json(self.to_dict(), Path(directory) / RESOLVED_NAME)


def _merge(base: Dict[str, Any], update: Mapping[str, Any], origin: str) -> None:
    for section, values in update.items():
        if section in ("out", "seed", "preset"):
            if values is not None:
                base[section] = values
            continue
        if section not in SECTIONS:
            raise ConfigurationError(f"{origin}: unknown config section {section!r}")
        if not isinstance(values, Mapping):
            raise ConfigurationError(f"{origin}: section {section!r} must be a mapping")
        base[section].update({k: v for k, v in values.items() if v is not None})


def resolve_config(
    preset: Optional[str] = None,
    config_path: Optional[Union[str, Path]] = None,
    overrides: Optional[Mapping[str, Any]] = None,
    views_k: Optional[int] = None,
) -> RunConfig:
    """
    Merge defaults, preset, config file and overrides

    Args:
        preset: Preset name
        config_path: Optional JSON config file
        overrides: Section -> {key: value} from the command line (None values ignored)
        views_k: Camera count of the cocentered-k preset

    Raises:
        ConfigurationError: On unknown presets or sections
    """
    resolved: Dict[str, Any] = copy.deepcopy(DEFAULTS)
    resolved.update({"out": str(default_output_root()), "seed": 0, "preset": preset})
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigurationError(f"unknown preset {preset!r}; expected one of {sorted(PRESETS)}")
        _merge(resolved, copy.deepcopy(PRESETS[preset]), f"preset {preset}")
        if preset == "cocentered-k":
            resolved["rig"]["preset"] = f"cocentered-{views_k or 4}"
    if config_path is not None:
        _merge(resolved, load_json(config_path), str(config_path))
    if overrides:
        _merge(resolved, overrides, "command line")
    try:
        resolved["seed"] = int(resolved["seed"])
    except (TypeError, ValueError) as e:
        raise ConfigurationError(f"seed must be an integer, got {resolved['seed']!r}") from e
    return RunConfig(**resolved)


def build_rig(config: RunConfig) -> CameraRig:
    options = dict(config.rig)
    name = options.pop("preset", "casia-like")
    return CameraRig.preset(name, **options)


def _typed(cls, values: Mapping[str, Any], section: str):
    unknown = set(values) - set(cls.__dataclass_fields__)
    if unknown:
        raise ConfigurationError(f"unknown {section} settings {sorted(unknown)}")
    return cls(**values)


def recognizer_config(config: RunConfig, view_list: Sequence[float], view_mode: Optional[str] = None) -> RecognizerConfig:
    values = dict(config.recognizer)
    values["view_list"] = tuple(view_list)
    if view_mode is not None:
        values["view_mode"] = view_mode
    result = _typed(RecognizerConfig, values, "recognizer")
    result.validate()
    return result


def generator_config(config: RunConfig, rig: Optional[CameraRig] = None) -> GeneratorConfig:
    """
    Build the LUGAN architecture section

    Args:
        config: Resolved run configuration
        rig: When given, its image frame fills focal_px and principal_point
            unless the configuration sets them
    """
    values = dict(config.lugan)
    miniature = bool(values.pop("miniature", False))
    if rig is not None:
        frame = rig.image_frame
        values.setdefault("focal_px", float(frame[0, 0]))
        values.setdefault("principal_point", (float(frame[0, 2]), float(frame[1, 2])))
    result = _typed(GeneratorConfig, values, "lugan")
    if miniature:
        result = GeneratorConfig.miniature(**values)
    result.validate()
    return result


def lugan_training(config: RunConfig) -> LuganTrainingConfig:
    return _typed(LuganTrainingConfig, config.lugan_training, "lugan_training")


def recognizer_training(config: RunConfig) -> RecognizerTrainingConfig:
    return _typed(RecognizerTrainingConfig, config.recognizer_training, "recognizer_training")


def eval_protocol(config: RunConfig) -> EvalProtocol:
    values = dict(config.protocol)
    for key in ("gallery_runs", "probe_conditions", "view_list"):
        if values.get(key) is not None:
            values[key] = tuple(values[key])
    protocol = _typed(EvalProtocol, values, "protocol")
    protocol.validate()
    return protocol
