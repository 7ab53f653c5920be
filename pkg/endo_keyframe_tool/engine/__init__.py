"""
Engine module for the Endo Key-frame Tool.
Contains the raster, feature, depth, key-frame and localization engines and the run pipeline.
"""

from endo_keyframe_tool.engine.dispatcher import dispatch
from endo_keyframe_tool.engine.config import RunConfig, SelectionPolicy, resolve_config
from endo_keyframe_tool.engine.errors import ToolError
from endo_keyframe_tool.engine.invariants import enforce_invariants

__all__ = [
    "dispatch",
    "RunConfig",
    "SelectionPolicy",
    "resolve_config",
    "ToolError",
    "enforce_invariants",
]
