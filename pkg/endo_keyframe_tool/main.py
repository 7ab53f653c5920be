"""
Endo Key-frame Tool - Main FastAPI Application
HTTP surface over the same task dispatcher the command line uses.
"""

import logging
import os
from typing import Any, Dict, Optional

from fastapi import FastAPI
from pydantic import BaseModel, Field, ValidationError

from endo_keyframe_tool import __version__
from endo_keyframe_tool.engine.config import get_default_config
from endo_keyframe_tool.engine.dispatcher import dispatch, supported_tasks
from endo_keyframe_tool.engine.errors import InvalidInputError, ToolError
from endo_keyframe_tool.engine.reports import compute_capsule

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

API_ENDPOINT = "/api/keyframe_tool"

# Request paths are confined to this directory; defaults to the working directory
DATA_ROOT_ENV = "ENDO_DATA_ROOT"
PATH_ARGUMENTS = ("input", "depth", "truth", "out", "config")

app = FastAPI(
    title="Endo Key-frame Tool",
    description="Key-frame selection, depth-map metrics and depth-driven polyp localization",
    version=__version__,
)


class KeyframeToolRequest(BaseModel):
    """Request schema for the Endo Key-frame Tool API."""
    task: str
    data: Dict[str, Any] = Field(..., description="Paths relative to the data root: input, depth, truth, out, config; plus save_edges")
    settings: Optional[Dict[str, Any]] = Field(default_factory=dict, description="RunConfig overrides")

    model_config = {
        "json_schema_extra": {
            "example": {
                "task": "select",
                "data": {"input": "data/seq_104_126/frames", "out": "out/seq_104_126"},
                "settings": {"policy": "top_k", "k": 5},
            }
        }
    }


class KeyframeToolResponse(BaseModel):
    """Response schema for the Endo Key-frame Tool API."""
    status: str
    result: Dict[str, Any]
    capsule: str


def exit_code_for(error: Exception) -> int:
    """Exit code the command line would report for this error."""
    if isinstance(error, ToolError):
        return error.exit_code
    if isinstance(error, ValidationError):
        return 1
    if isinstance(error, OSError):
        return 3
    return 1


def get_data_root() -> str:
    """Directory every request path is resolved against, read per request."""
    return os.path.realpath(os.environ.get(DATA_ROOT_ENV) or os.getcwd())


def resolve_data_path(name: str, value: Any, root: str) -> str:
    """
    Map a client path onto the data root.

    Raises:
        InvalidInputError: If the path is not a string, is absolute, contains
            a '..' component or resolves outside the root
    """
    if not isinstance(value, str) or not value.strip():
        raise InvalidInputError(f"data.{name} must be a non-empty relative path")
    if os.path.isabs(value) or value.startswith(("/", "\\")):
        raise InvalidInputError(f"data.{name} must be relative to the data root, got an absolute path")
    if ".." in value.replace("\\", "/").split("/"):
        raise InvalidInputError(f"data.{name} must not contain '..'")

    resolved = os.path.realpath(os.path.join(root, value))
    if os.path.commonpath([root, resolved]) != root:
        raise InvalidInputError(f"data.{name} resolves outside the data root")
    return resolved


def resolve_request_data(data: Dict[str, Any]) -> Dict[str, Any]:
    """Copy of the request data with every path argument confined to the data root."""
    root = get_data_root()
    resolved = dict(data)
    for name in PATH_ARGUMENTS:
        if data.get(name) is not None:
            resolved[name] = resolve_data_path(name, data[name], root)
    return resolved


@app.get("/")
async def root():
    """Root endpoint."""
    return {
        "message": "Endo Key-frame Tool API",
        "version": __version__,
        "endpoint": API_ENDPOINT,
    }


@app.get("/health")
async def health_check():
    """Health check: supported tasks and the default configuration."""
    try:
        return {
            "status": "healthy",
            "version": __version__,
            "tasks": supported_tasks(),
            "default_config": get_default_config().echo(),
        }
    except Exception as e:
        return {
            "status": "unhealthy",
            "error": str(e),
            "error_type": type(e).__name__,
        }


@app.post(API_ENDPOINT, response_model=KeyframeToolResponse)
def keyframe_tool(request: KeyframeToolRequest):
    """
    Main API endpoint for the Endo Key-frame Tool.

    Runs the task through the dispatcher and returns the report the command
    line would write. Path arguments are relative to the data root
    (ENDO_DATA_ROOT). Errors come back as status "error", never as exceptions.

    Args:
        request: KeyframeToolRequest containing task, data, and settings

    Returns:
        KeyframeToolResponse with status, result, and capsule
    """
    try:
        logger.info(f"Processing task: {request.task}")
        data = resolve_request_data(request.data)
        report = dispatch(task=request.task, data=data, settings=request.settings or {})
        return KeyframeToolResponse(status="success", result=report, capsule=report["capsule"])

    except Exception as e:
        logger.error(f"Error processing task {request.task}: {str(e)}", exc_info=True)

        error_output = {
            "error": str(e),
            "error_type": type(e).__name__,
            "exit_code": exit_code_for(e),
        }
        capsule = compute_capsule(
            input_data={"task": request.task, "data": request.data, "settings": request.settings or {}},
            output_data=error_output,
        )
        return KeyframeToolResponse(status="error", result=error_output, capsule=capsule)


if __name__ == "__main__":
    import uvicorn
    uvicorn.run(app, host="0.0.0.0", port=8000)
