"""Utility functions for the spatial MMSE enhancement system"""

import hashlib
import json
import os
from datetime import datetime
from importlib import metadata
from typing import Any, Dict, Iterable

import numpy as np


def ensure_directory(path: str) -> None:
    """Ensure directory exists, create if not"""
    if path:
        os.makedirs(path, exist_ok=True)


def _to_builtin(value: Any) -> Any:
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, np.generic):
        return value.item()
    raise TypeError(f"Object of type {type(value).__name__} is not JSON serializable")


def save_json(data: Dict[Any, Any], filepath: str) -> None:
    """Save data to JSON file"""
    ensure_directory(os.path.dirname(filepath))
    with open(filepath, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True, default=_to_builtin)


def format_timestamp(dt: datetime = None) -> str:
    """Format datetime to ISO string"""
    if dt is None:
        dt = datetime.now()
    return dt.isoformat()


def config_hash(data: Dict[str, Any]) -> str:
    """Stable SHA-256 of a JSON-serializable mapping"""
    encoded = json.dumps(data, sort_keys=True, default=_to_builtin).encode()
    return hashlib.sha256(encoded).hexdigest()


def package_versions(packages: Iterable[str] = ("numpy", "scipy", "pandas", "pydantic", "soundfile")) -> Dict[str, str]:
    """Installed versions of the numerical stack"""
    versions = {}
    for name in packages:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = "not installed"
    return versions
