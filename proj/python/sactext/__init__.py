"""Python access to the sactext trainers and run tools."""

import json
from os import PathLike
from typing import Any, Iterable, Optional, Sequence

from . import _core
from ._core import ConfigError, TrainingAbort, enumerate_goals, uniform_random_success

__all__ = [
    "ConfigError",
    "TrainingAbort",
    "compare",
    "enumerate_goals",
    "read_metrics",
    "resolve_config",
    "run",
    "uniform_random_success",
]


def resolve_config(config: Optional[dict] = None, overrides: Sequence[str] = ()) -> dict:
    """Fills defaults and validates; returns the resolved configuration."""
    return json.loads(_core.resolve_config(json.dumps(config or {}), list(overrides)))


def run(config: Optional[dict] = None, overrides: Sequence[str] = (), write_files: bool = True) -> dict:
    """Trains until total_steps; returns {"records": [...], "wall_seconds": float}."""
    records, seconds = _core.run(json.dumps(config or {}), list(overrides), write_files)
    return {"records": json.loads(records), "wall_seconds": seconds}


def read_metrics(path: "str | PathLike[str]") -> list[dict[str, Any]]:
    return json.loads(_core.read_metrics(path))


def compare(run_dirs: Iterable["str | PathLike[str]"], out_dir=None, grid: int = 200) -> dict:
    return json.loads(_core.compare(list(run_dirs), out_dir, grid))
