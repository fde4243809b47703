import os
import tempfile
from pathlib import Path
from typing import Union

import pandas as pd

from utils.serialization import CSV_FLOAT_FORMAT, to_json

DEFAULT_OUTPUT_DIR = Path("out")
THREADS_ENV = "FREEKNOT_THREADS"

REPORT_FILE = "report.json"
TABLE_FILE = "table.txt"
WORKBOOK_FILE = "table.xlsx"
MODEL_FILE = "model.lp"
SPLINE_FILE = "spline.json"
TRAIN_REPORT_FILE = "train.json"


def figure_file(label: str) -> str:
    return f"fig_{label}.csv"


def history_file(optimizer: str) -> str:
    return f"history_{optimizer}.csv"


def samples_file(label: str) -> str:
    return f"samples_{label}.csv"


def ensure_output_dir(path: Union[str, Path, None]) -> Path:
    """Create the output directory and check it is writable before any work starts."""
    out = Path(path) if path is not None else DEFAULT_OUTPUT_DIR
    out.mkdir(parents=True, exist_ok=True)
    if not os.access(out, os.W_OK):
        raise PermissionError(f"output directory {out} is not writable")
    return out


def thread_cap(default: int = 1) -> int:
    """Worker cap from the environment (at least 1)."""
    value = os.getenv(THREADS_ENV)
    if not value:
        return default
    try:
        return max(1, int(value))
    except ValueError:
        return default


def _atomic_write(path: Path, text: str):
    # write-then-rename
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    with os.fdopen(fd, "w", newline="\n") as fh:
        fh.write(text)
    os.replace(tmp, path)


def write_text(path: Path, text: str) -> Path:
    _atomic_write(path, text)
    return path


def write_json(path: Path, obj) -> Path:
    _atomic_write(path, to_json(obj))
    return path


def write_csv(path: Path, frame: pd.DataFrame) -> Path:
    _atomic_write(path, frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n"))
    return path
