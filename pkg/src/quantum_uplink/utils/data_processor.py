"""
Data Processing Utilities
Functions for writing and reading run artifacts (CSV tables, JSON reports) and
for parsing sweep grids.
"""

import json
import math
from pathlib import Path
from typing import Any, Union

import numpy as np
import pandas as pd

from .logger import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


def to_jsonable(value: Any) -> Any:
    """
    Convert numpy scalars/arrays, tuples and non-finite floats into plain JSON.

    Non-finite floats become the strings "inf", "-inf" or "nan".
    """
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [to_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return str(value)
    return value


def dumps_json(data: Any) -> str:
    """Deterministic JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n"


def write_json(path: PathLike, data: Any) -> Path:
    path = Path(path)
    path.write_text(dumps_json(data))
    logger.debug("Wrote %s", path)
    return path


def read_json(path: PathLike) -> Any:
    return json.loads(Path(path).read_text())


def save_frame(df: pd.DataFrame, path: PathLike) -> Path:
    """Save a table as CSV without the index."""
    path = Path(path)
    df.to_csv(path, index=False)
    logger.info("Saved %d rows to %s", len(df), path)
    return path


def load_frame(path: PathLike) -> pd.DataFrame:
    df = pd.read_csv(path)
    logger.debug("Loaded %s with shape %s", path, df.shape)
    return df


def parse_sweep(spec: str) -> np.ndarray:
    """
    Parse an inclusive `min:max:step` grid.

    Raises:
        ValueError: malformed text, step <= 0 or max < min
    """
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"sweep must look like min:max:step, got {spec!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as e:
        raise ValueError(f"sweep bounds must be numbers, got {spec!r}") from e
    if step <= 0 or not all(math.isfinite(x) for x in (start, stop, step)):
        raise ValueError(f"sweep step must be positive and finite, got {spec!r}")
    if stop < start:
        raise ValueError(f"sweep max below min in {spec!r}")
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return np.round(start + step * np.arange(n), 12)


def parse_list(spec: str) -> list:
    """Comma-separated floats."""
    try:
        return [float(x) for x in spec.split(",") if x.strip()]
    except ValueError as e:
        raise ValueError(f"expected comma-separated numbers, got {spec!r}") from e
