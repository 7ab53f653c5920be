"""
Configuration for the Endo Key-frame Tool.
Holds the RunConfig model and loads flat YAML/JSON config files.
"""

import logging
import math
import os
from functools import lru_cache
from typing import Any, Dict, List, Literal, Optional

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from endo_keyframe_tool.engine.errors import FormatError, InvalidInputError

logger = logging.getLogger(__name__)

# Orthonormal color-opponent basis; rows produce O1, O2, O3 from (R, G, B)
DEFAULT_COC_MATRIX: List[List[float]] = [
    [1.0 / math.sqrt(2.0), -1.0 / math.sqrt(2.0), 0.0],
    [1.0 / math.sqrt(6.0), 1.0 / math.sqrt(6.0), -2.0 / math.sqrt(6.0)],
    [1.0 / math.sqrt(3.0), 1.0 / math.sqrt(3.0), 1.0 / math.sqrt(3.0)],
]

# Config-file keys that belong to the selection policy rather than RunConfig
POLICY_KEYS = ("policy", "q", "k", "threshold")


class SelectionPolicy(BaseModel):
    """How key frames are picked from the fused score series."""

    model_config = ConfigDict(extra="forbid")

    mode: Literal["quantile", "top_k", "absolute"] = "quantile"
    q: Optional[float] = None
    k: Optional[int] = None
    threshold: Optional[float] = None

    @model_validator(mode="before")
    @classmethod
    def _default_quantile(cls, data: Any) -> Any:
        # Quantile mode falls back to the documented q when nothing is given
        if isinstance(data, dict) and data.get("mode", "quantile") == "quantile":
            if all(data.get(name) is None for name in ("q", "k", "threshold")):
                data = {**data, "q": 0.8}
        return data

    @model_validator(mode="after")
    def _exactly_one_parameter(self) -> "SelectionPolicy":
        active = {"quantile": "q", "top_k": "k", "absolute": "threshold"}[self.mode]
        values = {"q": self.q, "k": self.k, "threshold": self.threshold}

        if values[active] is None:
            raise ValueError(f"policy mode '{self.mode}' requires '{active}'")
        extra = [name for name, value in values.items() if name != active and value is not None]
        if extra:
            raise ValueError(f"policy mode '{self.mode}' does not accept {extra}")
        if self.q is not None and not 0.0 < self.q < 1.0:
            raise ValueError("q must lie in (0, 1)")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be a positive integer")
        return self


class RunConfig(BaseModel):
    """All tunables of a run. Defaults are the documented design defaults."""

    model_config = ConfigDict(extra="forbid")

    # imgproc / features
    sigma: float = Field(1.0, gt=0, description="Gaussian sigma for the edge criterion")
    channel: Literal["coc_o3", "coc_o1", "coc_o2", "luminance"] = "coc_o3"
    coc_matrix: List[List[float]] = Field(default_factory=lambda: [row[:] for row in DEFAULT_COC_MATRIX])
    hu_transform: Literal["raw", "signed_log"] = "raw"
    edge_source: Literal["frame", "depth"] = "frame"
    fast_threshold: float = Field(20.0 / 255.0, ge=0)
    fast_levels: int = Field(8, ge=1)
    fast_scale_factor: float = Field(1.2, gt=1.0)

    # localize
    canny_low: Optional[float] = Field(None, ge=0)
    canny_high: Optional[float] = Field(None, ge=0)
    canny_sigma: Optional[float] = Field(1.0, gt=0)
    close_radius: int = Field(5, ge=1)

    # depth
    k_scales: int = Field(4, ge=1)
    alpha: float = 0.5
    depth_png_invert: bool = False

    # keyframes
    policy: SelectionPolicy = Field(default_factory=SelectionPolicy)
    table_iou_scope: Literal["keyframes", "all"] = "keyframes"

    # execution
    workers: int = Field(1, ge=1)

    @field_validator("coc_matrix")
    @classmethod
    def _three_by_three(cls, value: List[List[float]]) -> List[List[float]]:
        if len(value) != 3 or any(len(row) != 3 for row in value):
            raise ValueError("coc_matrix must be 3x3")
        return value

    def echo(self) -> Dict[str, Any]:
        """Return the config as a plain JSON-ready dict for report echoing. workers is left out; it never changes results."""
        return self.model_dump(mode="json", exclude={"workers"})


@lru_cache(maxsize=1)
def get_default_config() -> RunConfig:
    """Build and cache the default configuration."""
    return RunConfig()


def _fold_policy_keys(raw: Dict[str, Any]) -> Dict[str, Any]:
    """
    Move flat policy keys (policy/q/k/threshold) into a nested policy dict.

    Args:
        raw: Flat mapping as read from a config file or command line

    Returns:
        Mapping accepted by RunConfig
    """
    folded = {key: value for key, value in raw.items() if key not in POLICY_KEYS}
    policy = raw.get("policy")

    if isinstance(policy, dict):
        folded["policy"] = dict(policy)
        return folded

    policy_fields = {}
    if policy is not None:
        policy_fields["mode"] = policy
    for key in ("q", "k", "threshold"):
        if raw.get(key) is not None:
            policy_fields[key] = raw[key]
    if policy_fields:
        folded["policy"] = policy_fields
    return folded


def load_config_file(path: str) -> Dict[str, Any]:
    """
    Read a flat YAML or JSON config file.

    Args:
        path: Path to the config file

    Returns:
        Dictionary of raw config values (policy keys still flat)

    Raises:
        InvalidInputError: If the file does not exist
        FormatError: If the file is not a YAML/JSON mapping
    """
    if not os.path.exists(path):
        raise InvalidInputError(f"config file not found: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            content = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise FormatError(f"config file {path} is not valid YAML/JSON: {e}") from e

    if content is None:
        logger.warning(f"Config file {path} is empty, using defaults")
        return {}
    if not isinstance(content, dict):
        raise FormatError(f"config file {path} must contain a mapping, got {type(content).__name__}")
    return {str(k).strip(): v for k, v in content.items()}


def resolve_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """
    Build the effective RunConfig: defaults, then file values, then overrides.

    Args:
        path: Optional config file path
        overrides: Optional flat overrides (command-line flags or HTTP settings); None values are ignored

    Returns:
        Validated RunConfig
    """
    merged: Dict[str, Any] = {}
    if path:
        merged.update(load_config_file(path))

    overrides = {key: value for key, value in (overrides or {}).items() if value is not None}

    # A mode given on the command line replaces the file's whole policy
    if "policy" in overrides:
        for stale in POLICY_KEYS:
            merged.pop(stale, None)
    merged.update(overrides)

    return RunConfig.model_validate(_fold_policy_keys(merged))
