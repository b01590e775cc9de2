import logging
import pathlib
import shutil
import tempfile
from contextlib import contextmanager
from typing import Generator

from config import MVLAB_OUT_DIR

logger = logging.getLogger(__name__)


def get_output_dir(out_dir: str | None = None) -> pathlib.Path:
    path = pathlib.Path(out_dir or MVLAB_OUT_DIR)
    path.mkdir(parents=True, exist_ok=True)
    return path


@contextmanager
def open_output_dir(out_dir: str | None = None) -> Generator[pathlib.Path, None, None]:
    """
    Stage outputs in a sibling temporary directory and move them into place on success.
    Files already present in out_dir that were not rewritten are left alone.
    """
    target = get_output_dir(out_dir)
    staging = pathlib.Path(tempfile.mkdtemp(prefix=".staging-", dir=target.parent))
    try:
        yield staging
        for item in sorted(staging.iterdir()):
            item.replace(target / item.name)
    except Exception:
        logger.warning("Discarding staged outputs for %s", target)
        raise
    finally:
        shutil.rmtree(staging, ignore_errors=True)
