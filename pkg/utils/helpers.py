import datetime
import math
from typing import Any

import humanize
import numpy as np


def humanize_seconds(seconds: float) -> str:
    return humanize.precisedelta(datetime.timedelta(seconds=seconds), minimum_unit="milliseconds")


def humanize_count(n: int) -> str:
    return humanize.intcomma(n)


def to_jsonable(val: Any) -> Any:
    """Convert numpy scalars/arrays and complex numbers into plain JSON values"""
    if isinstance(val, dict):
        return {str(k): to_jsonable(v) for k, v in val.items()}
    if isinstance(val, (list, tuple)):
        return [to_jsonable(v) for v in val]
    if isinstance(val, np.ndarray):
        return to_jsonable(val.tolist())
    if isinstance(val, (complex, np.complexfloating)):
        return [to_jsonable(val.real), to_jsonable(val.imag)]
    if isinstance(val, np.bool_):
        return bool(val)
    if isinstance(val, np.integer):
        return int(val)
    if isinstance(val, (float, np.floating)):
        val = float(val)
        if math.isnan(val) or math.isinf(val):
            return None
        return val
    return val
