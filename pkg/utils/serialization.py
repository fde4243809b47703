import json
import math
from typing import Any

import numpy as np
import pandas as pd
from pydantic import BaseModel

CSV_FLOAT_FORMAT = "%.17g"


def convert_to_serializable(obj: Any) -> Any:
    """
    Recursively convert numpy/pandas/pydantic values to JSON-serializable Python types.
    Non-finite floats become None.
    """
    if obj is None:
        return None

    if isinstance(obj, BaseModel):
        return convert_to_serializable(obj.model_dump(mode="json"))

    # Handle numpy types
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        value = float(obj)
        return value if math.isfinite(value) else None
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return [convert_to_serializable(item) for item in obj.tolist()]

    # Check for scalar NA values (avoid arrays)
    try:
        if pd.isna(obj) and not isinstance(obj, (list, tuple, np.ndarray)):
            return None
    except (ValueError, TypeError):
        pass

    # Handle collections
    if isinstance(obj, dict):
        return {str(k): convert_to_serializable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [convert_to_serializable(item) for item in obj]

    return obj


def to_json(obj: Any) -> str:
    """Stable JSON text: sorted keys, two-space indent, trailing newline."""
    return json.dumps(convert_to_serializable(obj), indent=2, sort_keys=True) + "\n"
