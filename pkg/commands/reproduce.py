"""
reproduce <example-id> - chained pipeline with gates and manifest
"""
import logging

from commands.base import ExperimentConfig
from storage import open_output_dir
from tasks.reproduce import EXAMPLES, run_example

logger = logging.getLogger(__name__)


def run_reproduce(cfg: ExperimentConfig, example_id: str) -> int:
    with open_output_dir(cfg.out_dir) as out:
        manifest = run_example(example_id, cfg, out)

    if manifest["passed"]:
        logger.info("%s: all %d gates passed", example_id, len(manifest["gates"]))
        return 0
    for name in manifest["failed_gates"]:
        logger.error("%s: gate '%s' failed: %s", example_id, name, manifest["gates"][name].get("error"))
    return 1


EXAMPLE_IDS = sorted(EXAMPLES)
