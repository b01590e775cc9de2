import hashlib
import json
import os
import pathlib
from contextlib import contextmanager
from typing import Any, Dict, Generator, List

import pandas as pd

from utils.helpers import to_jsonable

FLOAT_FORMAT = "%.12g"


@contextmanager
def atomic_write(path: pathlib.Path) -> Generator[pathlib.Path, None, None]:
    tmp = path.with_name(path.name + ".part")
    try:
        yield tmp
        os.replace(tmp, path)
    except Exception:
        tmp.unlink(missing_ok=True)
        raise


def write_csv(path: pathlib.Path, columns: Dict[str, Any]) -> pathlib.Path:
    frame = pd.DataFrame(columns)
    with atomic_write(path) as tmp:
        frame.to_csv(tmp, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def _round_floats(val: Any) -> Any:
    if isinstance(val, float):
        return float(FLOAT_FORMAT % val)
    if isinstance(val, dict):
        return {k: _round_floats(v) for k, v in val.items()}
    if isinstance(val, list):
        return [_round_floats(v) for v in val]
    return val


def dumps(payload: Any) -> str:
    return json.dumps(_round_floats(to_jsonable(payload)), indent=2, sort_keys=True) + "\n"


def write_json(path: pathlib.Path, payload: Dict[str, Any] | List[Any]) -> pathlib.Path:
    with atomic_write(path) as tmp:
        tmp.write_text(dumps(payload), encoding="utf-8")
    return path


def read_json(path: pathlib.Path) -> Any:
    return json.loads(pathlib.Path(path).read_text(encoding="utf-8"))


def content_hash(payload: Any) -> str:
    """git-style blob hash of the canonical JSON form"""
    data = dumps(payload).encode("utf-8")
    header = f"blob {len(data)}\0".encode("utf-8")
    return hashlib.sha1(header + data).hexdigest()


def file_hash(path: pathlib.Path) -> str:
    """git-style blob hash of a file's bytes"""
    data = pathlib.Path(path).read_bytes()
    header = f"blob {len(data)}\0".encode("utf-8")
    return hashlib.sha1(header + data).hexdigest()
