"""
Dispatcher module for the Endo Key-frame Tool.
Routes task names to pipeline runs.
"""

import logging
from typing import Any, Callable, Dict, Optional

from endo_keyframe_tool.engine.config import resolve_config
from endo_keyframe_tool.engine.errors import InvalidInputError

logger = logging.getLogger(__name__)

# Path arguments each task accepts from the request data
TASK_ARGUMENTS = {
    "score": ("input", "depth", "out"),
    "select": ("input", "depth", "out"),
    "depth_eval": ("depth", "truth", "out"),
    "localize": ("depth", "out", "save_edges"),
    "eval_iou": ("depth", "truth", "out", "save_edges"),
    "table": ("input", "out"),
}

# Arguments without which a task cannot start
REQUIRED_ARGUMENTS = {
    "score": ("input",),
    "select": ("input",),
    "depth_eval": ("depth", "truth"),
    "localize": ("depth",),
    "eval_iou": ("depth", "truth"),
    "table": ("input",),
}


def normalize_task(task: str) -> str:
    """Lower-case the task name and accept the hyphenated command-line spelling."""
    return task.strip().lower().replace("-", "_")


def get_task_map() -> Dict[str, Callable]:
    # Lazy import keeps the dispatcher importable without loading the whole engine
    from endo_keyframe_tool.engine.pipeline import (
        run_depth_eval,
        run_eval_iou,
        run_localize,
        run_score,
        run_select,
        run_table,
    )

    return {
        "score": run_score,
        "select": run_select,
        "depth_eval": run_depth_eval,
        "localize": run_localize,
        "eval_iou": run_eval_iou,
        "table": run_table,
    }


def supported_tasks() -> list:
    return sorted(TASK_ARGUMENTS)


def dispatch(task: str, data: Dict[str, Any], settings: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """
    Route a task to its pipeline run.

    Args:
        task: Task name (score, select, depth_eval, localize, eval_iou, table; hyphens accepted)
        data: Path arguments (input, depth, truth, out, save_edges) and an optional config file path
        settings: RunConfig overrides applied on top of the config file

    Returns:
        The run's report as a JSON-ready dictionary

    Raises:
        InvalidInputError: If the task is not recognized or a required path is missing
    """
    task_normalized = normalize_task(task)
    task_map = get_task_map()
    if task_normalized not in task_map:
        raise InvalidInputError(f"Unknown task: {task}. Supported tasks: {supported_tasks()}")

    missing = [name for name in REQUIRED_ARGUMENTS[task_normalized] if not data.get(name)]
    if missing:
        raise InvalidInputError(f"task '{task_normalized}' is missing required data: {missing}")

    config = resolve_config(data.get("config"), settings or {})
    arguments = {name: data[name] for name in TASK_ARGUMENTS[task_normalized] if data.get(name) is not None}
    logger.info(f"Dispatching {task_normalized} with {sorted(arguments)}")

    report = task_map[task_normalized](config=config, **arguments)
    return report.model_dump(mode="json")
