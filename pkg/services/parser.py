import json
import logging
import re
from pathlib import Path
from typing import Dict, List, Tuple, Union

import pandas as pd
from pydantic import ValidationError

from models.schemas import FreeKnotError, OneKnotSpline, SampledFunction
from services.funcs import GridError, grid_from_points
from services.spline import SplineError, make_one_knot, spline_from_dict
from services.validator import REQUIRED_COLUMNS, blocking_issues, numeric_rows, validate_samples
from utils.file_manager import write_csv

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]


class ParserError(FreeKnotError):
    """Raised when an input file (samples CSV, spline JSON, config) cannot be used."""
    pass


def normalize_column_name(name: str) -> str:
    """
    Normalize a column name:
    - Trim whitespace
    - Convert to lowercase
    - Replace spaces and special characters with underscores
    """
    if name is None or pd.isna(name):
        return "unnamed_column"

    name = str(name).strip().lower()
    name = re.sub(r'[^\w]+', '_', name)
    name = name.strip('_')

    return name or "unnamed_column"


def ensure_unique_columns(columns: List[str]) -> List[str]:
    """Ensure all column names are unique by appending numbers to duplicates."""
    seen = {}
    result = []

    for col in columns:
        if col in seen:
            seen[col] += 1
            result.append(f"{col}_{seen[col]}")
        else:
            seen[col] = 0
            result.append(col)

    return result


def _read_raw_csv(file_path: Path) -> pd.DataFrame:
    # Try different encodings
    for encoding in ['utf-8', 'latin-1']:
        try:
            return pd.read_csv(file_path, encoding=encoding, dtype=str, skipinitialspace=True)
        except UnicodeDecodeError:
            continue
    raise ParserError(f"Could not decode {file_path.name}. Please use UTF-8.")


def read_samples_frame(file_path: PathLike) -> pd.DataFrame:
    """Read a `t,f` CSV as raw string cells with normalized headers."""
    file_path = Path(file_path)
    if file_path.suffix.lower() != '.csv':
        raise ParserError(f"Unsupported file format: {file_path.suffix or '(none)'}")

    try:
        df = _read_raw_csv(file_path)
    except ParserError:
        raise
    except FileNotFoundError:
        raise ParserError(f"No such file: {file_path}")
    except pd.errors.EmptyDataError:
        raise ParserError(f"{file_path.name} is empty or contains no data.")
    except Exception as e:
        raise ParserError(f"Failed to parse {file_path.name}: {str(e)}")

    df.columns = ensure_unique_columns([normalize_column_name(col) for col in df.columns])
    missing = [col for col in REQUIRED_COLUMNS if col not in df.columns]
    if missing:
        raise ParserError(f"{file_path.name}: missing column(s) {missing}; expected header 't,f'")
    return df


def samples_from_frame(df: pd.DataFrame, label: str = "csv") -> SampledFunction:
    """Validate a raw sample frame and turn it into a SampledFunction on its own grid."""
    issues = validate_samples(df)
    blocking = blocking_issues(issues)
    if blocking:
        raise ParserError("; ".join(issue.description for issue in blocking))
    for issue in issues:
        logger.warning(f"{label}: {issue.description}")

    usable = numeric_rows(df).sort_values("t", kind="mergesort")
    try:
        grid = grid_from_points(usable["t"].to_numpy(dtype=float))
    except GridError as e:
        raise ParserError(f"{label}: {e}")
    if not grid.uniform:
        logger.info(f"{label}: non-uniform abscissae, {grid.size} points on [{grid.c}, {grid.d}]")
    return SampledFunction(grid=grid, values=usable["f"].to_numpy(dtype=float), label=label)


def read_samples_csv(file_path: PathLike) -> SampledFunction:
    file_path = Path(file_path)
    return samples_from_frame(read_samples_frame(file_path), label=file_path.stem)


def samples_frame(data: SampledFunction) -> pd.DataFrame:
    return pd.DataFrame({"t": data.t, "f": data.f}, columns=list(REQUIRED_COLUMNS))


def write_samples_csv(data: SampledFunction, file_path: PathLike) -> Path:
    """Write samples as a `t,f` CSV that read_samples_csv reads back unchanged."""
    return write_csv(Path(file_path), samples_frame(data))


def _load_json(file_path: PathLike) -> dict:
    file_path = Path(file_path)
    try:
        with open(file_path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise ParserError(f"No such file: {file_path}")
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ParserError(f"{file_path.name} is not valid JSON: {e}")
    if not isinstance(payload, dict):
        raise ParserError(f"{file_path.name}: expected a JSON object")
    return payload


def read_spline_json(file_path: PathLike) -> OneKnotSpline:
    """
    Load a one-knot spline. Accepts the compact form written by `solve` next to the
    report (`kind`, `pieces`, `knot`, `interval`), a full report (`best_spline`), or a
    dumped OneKnotSpline (`piece1`, `piece2`, ...).
    """
    payload = _load_json(file_path)
    if "best_spline" in payload:
        payload = payload["best_spline"]
        if not isinstance(payload, dict):
            raise ParserError("best_spline must be an object")

    try:
        if "pieces" in payload:
            return spline_from_dict(payload)
        dumped = OneKnotSpline.model_validate(payload)
        return make_one_knot(dumped.piece1, dumped.piece2, dumped.kind, dumped.interval)
    except (SplineError, ValidationError) as e:
        raise ParserError(f"malformed spline file {Path(file_path).name}: {e}")


def read_config_file(file_path: PathLike) -> Dict[str, str]:
    """
    Flat `key = value` settings. Blank lines and `#` comments are ignored; keys are
    normalized like CSV headers (`Big M` -> `big_m`).
    """
    file_path = Path(file_path)
    try:
        lines = file_path.read_text(encoding="utf-8").splitlines()
    except FileNotFoundError:
        raise ParserError(f"No such config file: {file_path}")

    settings: Dict[str, str] = {}
    for number, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ParserError(f"{file_path.name}:{number}: expected 'key = value', got {raw!r}")
        settings[normalize_column_name(key)] = value.strip()
    return settings


def split_pair(value: str) -> Tuple[float, float]:
    parts = [p for p in re.split(r"[,\s]+", str(value).strip()) if p]
    if len(parts) != 2:
        raise ParserError(f"expected two numbers, got {value!r}")
    return float(parts[0]), float(parts[1])
