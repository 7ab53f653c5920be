"""
Report models and writers for the Endo Key-frame Tool.
Every JSON report is written with sorted keys and carries a capsule hash over
the tool version, its inputs and its body, so reruns can be compared by hash.
"""

import csv
import hashlib
import json
import logging
import os
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, Field

from endo_keyframe_tool import __version__
from endo_keyframe_tool.engine.localize import IouReport

logger = logging.getLogger(__name__)

SCORES_COLUMNS = ["index", "d_raw", "s_raw", "p_raw", "d_norm", "s_norm", "p_norm", "fused", "selected"]
TABLE_COLUMNS = ["sequence", "key_frames", "miou", "miou_gt_half"]


class FrameScore(BaseModel):
    index: int
    file: Optional[str] = None
    d_raw: float
    s_raw: float
    p_raw: float
    d_norm: float
    s_norm: float
    p_norm: float
    fused: float
    selected: bool = False


class WeightsReport(BaseModel):
    w1: float
    w2: float
    w3: float
    d1: float = Field(..., description="Total variation of the normalized moment distance")
    s1: float = Field(..., description="Total variation of the normalized edge score")
    p1: float = Field(..., description="Total variation of the normalized keypoint count")


class SelectionReport(BaseModel):
    mode: Literal["quantile", "top_k", "absolute"]
    q: Optional[float] = None
    k: Optional[int] = None
    threshold: Optional[float] = None
    indices: List[int]
    key_frames: int


class ToolReport(BaseModel):
    """Fields shared by every report."""

    tool: str = "endo_keyframe_tool"
    version: str = __version__
    task: str
    config: Dict[str, Any]
    inputs: Dict[str, str] = Field(default_factory=dict, description="Input file name -> SHA-256 of its bytes")
    capsule: str = ""


class ScoreReport(ToolReport):
    sequence_id: str
    n_frames: int
    frames: List[FrameScore]
    weights: WeightsReport
    sequence_fused_score: float
    selection: Optional[SelectionReport] = None
    invariants_passed: bool
    invariant_report: Dict[str, Dict[str, Any]]


class DepthPairReport(BaseModel):
    index: int
    prediction: str
    ground_truth: str
    status: Literal["ok", "degenerate", "invalid"]
    s: Optional[float] = None
    t: Optional[float] = None
    ssi: Optional[float] = None
    regularizer: Optional[float] = None
    error: Optional[str] = None


class DepthReport(ToolReport):
    alpha: float
    k_scales: int
    pairs: List[DepthPairReport]
    n_evaluated: int
    n_degenerate: int
    n_invalid: int = 0
    total_loss: Optional[float] = None


class LocalizedFrame(BaseModel):
    index: int
    file: str
    mask: str
    edge_pixels: int
    boundary_pixels: int
    region_pixels: int
    open_contour: bool
    empty_edges: bool
    iou: Optional[float] = None


class LocalizeReport(ToolReport):
    sequence_id: str
    frames: List[LocalizedFrame]
    n_open_contours: int
    iou: Optional[IouReport] = None


class TableRow(BaseModel):
    sequence: str
    key_frames: int
    miou: float
    miou_gt_half: Literal["Yes", "No"]


class TableReport(ToolReport):
    iou_scope: Literal["keyframes", "all"]
    rows: List[TableRow]


def stringify_keys(obj: Any) -> Any:
    """
    Recursively convert all dictionary keys to strings so hashing is stable.

    Args:
        obj: Object to canonicalize (dict, list, or primitive)

    Returns:
        Canonicalized object with all keys as strings
    """
    if isinstance(obj, dict):
        return {str(k): stringify_keys(v) for k, v in obj.items()}
    elif isinstance(obj, (list, tuple)):
        return [stringify_keys(i) for i in obj]
    else:
        return obj


def canonical_json(obj: Any) -> str:
    return json.dumps(stringify_keys(obj), sort_keys=True, indent=2, allow_nan=False)


def compute_capsule(input_data: Dict[str, Any], output_data: Dict[str, Any], engine_version: str = __version__) -> str:
    """
    Deterministic SHA-256 capsule over the version, the inputs and the output body.

    Args:
        input_data: Config echo and input file digests
        output_data: Report body without the capsule field
        engine_version: Tool version string

    Returns:
        Hex digest
    """
    capsule_data = {
        "engine_version": engine_version,
        "input_hash": hashlib.sha256(canonical_json(input_data).encode()).hexdigest(),
        "output_hash": hashlib.sha256(canonical_json(output_data).encode()).hexdigest(),
    }
    return hashlib.sha256(json.dumps(capsule_data, sort_keys=True).encode()).hexdigest()


def seal(report: ToolReport) -> ToolReport:
    """Fill in the report's capsule from its own content."""
    body = report.model_dump(mode="json", exclude={"capsule"})
    report.capsule = compute_capsule({"config": report.config, "inputs": report.inputs}, body, report.version)
    return report


def write_json(report: BaseModel, path: str) -> Dict[str, Any]:
    """Write a report as canonical JSON and return the dumped dict."""
    payload = report.model_dump(mode="json")
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(canonical_json(payload))
        f.write("\n")
    logger.info(f"Wrote {path}")
    return payload


def _cell(value: Any) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_scores_csv(frames: List[FrameScore], path: str) -> None:
    """scores.csv with a fixed column order; floats are written with repr."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SCORES_COLUMNS)
        for row in frames:
            writer.writerow([_cell(getattr(row, column)) for column in SCORES_COLUMNS])
    logger.info(f"Wrote {path}")


def write_table_csv(rows: List[TableRow], path: str) -> None:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(TABLE_COLUMNS)
        for row in rows:
            writer.writerow([_cell(getattr(row, column)) for column in TABLE_COLUMNS])
    logger.info(f"Wrote {path}")
