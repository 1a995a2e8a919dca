"""
Utility Functions - Helper functions shared across the gait toolkit

JSON persistence, output directories, logging setup, seed splitting and
parameter digests.
"""

import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Union

import numpy as np
from dotenv import load_dotenv

load_dotenv()

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def setup_logging(verbose: bool = False) -> None:
    """
    Configure root logging once for a CLI invocation

    Args:
        verbose: Force DEBUG level; otherwise GAIT_LOG_LEVEL (default INFO)
    """
    level = logging.DEBUG if verbose else os.getenv("GAIT_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)


def default_output_root() -> Path:
    """Output root from GAIT_OUTPUT_ROOT, falling back to ./runs"""
    return Path(os.getenv("GAIT_OUTPUT_ROOT", "runs"))


def save_json(payload: Mapping[str, Any], output_path: Union[str, Path]) -> Path:
    """
    Save a mapping to a JSON file with stable key order

    Args:
        payload: Mapping to save
        output_path: Output file path

    Returns:
        Path written
    """
    output_path = Path(output_path)
    output_path.parent.mkdir(parents=True, exist_ok=True)

    with open(output_path, "w") as f:
        json.dump(payload, f, indent=2, sort_keys=True, default=_json_default)
        f.write("\n")
    return output_path


def load_json(path: Union[str, Path]) -> Dict[str, Any]:
    """
    Load a JSON object from disk

    Raises:
        FileNotFoundError: If the file does not exist
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"File not found: {path}")
    with open(path) as f:
        return json.load(f)


def _json_default(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, (set, frozenset)):
        return sorted(value)
    return str(value)


def create_directory_structure(base_path: Union[str, Path]) -> Path:
    """
    Create an artifact directory (and parents)

    Args:
        base_path: Directory to create

    Returns:
        The directory path
    """
    base_path = Path(base_path)
    base_path.mkdir(parents=True, exist_ok=True)
    return base_path


def derive_seed(root_seed: int, component: str) -> int:
    """
    Split a root seed into an independent per-component seed

    The component name is hashed so adding a component never shifts the
    seeds of the others.

    Args:
        root_seed: Invocation seed
        component: Component name, e.g. "synth" or "lugan"

    Returns:
        32-bit seed
    """
    name_key = int.from_bytes(hashlib.sha256(component.encode()).digest()[:4], "little")
    sequence = np.random.SeedSequence([int(root_seed) & 0xFFFFFFFF, name_key])
    return int(sequence.generate_state(1)[0])


def array_digest(arrays: Mapping[str, np.ndarray]) -> str:
    """
    SHA-256 over named arrays in sorted name order

    Args:
        arrays: Name -> array mapping (e.g. a state dict converted to numpy)

    Returns:
        Hex digest
    """
    digest = hashlib.sha256()
    for name in sorted(arrays):
        value = np.ascontiguousarray(arrays[name])
        digest.update(name.encode())
        digest.update(str(value.dtype).encode())
        digest.update(str(value.shape).encode())
        digest.update(value.tobytes())
    return digest.hexdigest()


def file_digest(path: Union[str, Path]) -> str:
    """SHA-256 of a file's bytes"""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def format_percentage(value: float, decimals: int = 1) -> str:
    """
    Format a fraction in [0, 1] as a percentage string

    Args:
        value: Fraction
        decimals: Number of decimal places

    Returns:
        Formatted percentage string
    """
    return f"{value * 100:.{decimals}f}"
