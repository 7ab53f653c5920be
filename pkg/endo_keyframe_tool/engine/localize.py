"""
Polyp localization for the Endo Key-frame Tool.
Canny over depth maps, closing plus largest-component refinement, region
filling, and IoU / mIoU scoring against ground-truth masks.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field

from endo_keyframe_tool.engine.config import RunConfig
from endo_keyframe_tool.engine.depth import InverseDepthMap
from endo_keyframe_tool.engine.errors import EmptyResultError, InvalidInputError
from endo_keyframe_tool.engine.imgproc import (
    as_mask,
    canny,
    component_sizes,
    connected_components,
    fill_holes,
    morph_close,
    normalize_to_u8,
)

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LocalizationResult:
    """Raw edges, refined boundary and filled region for one depth map."""

    edges: np.ndarray
    refined: np.ndarray
    region: np.ndarray
    open_contour: bool = False
    empty_edges: bool = False


class IouReport(BaseModel):
    per_frame_iou: List[float] = Field(..., description="IoU per (predicted, truth) pair, in input order")
    miou: float
    pass_half: bool = Field(..., description="miou > 0.5 (strict)")


def depth_boundary(
    dm: InverseDepthMap,
    low: Optional[float] = None,
    high: Optional[float] = None,
    sigma: Optional[float] = 1.0,
) -> np.ndarray:
    """Raw Canny edges of the depth map stretched to 0..255. Thresholds are in those units."""
    return canny(normalize_to_u8(dm.filled()), low=low, high=high, sigma=sigma)


def refine_boundary(edges: np.ndarray, close_radius: int = 5) -> np.ndarray:
    """
    Close small gaps and keep the largest 8-connected component.

    Equal-sized components resolve to the one met first in raster order.

    Raises:
        EmptyResultError: If there are no edge pixels
    """
    mask = as_mask(edges, "edge mask")
    if not mask.any():
        raise EmptyResultError("edge mask is empty; nothing to refine")

    labels = connected_components(morph_close(mask, close_radius), connectivity=8)
    sizes = component_sizes(labels)
    sizes[0] = 0
    # argmax returns the first maximum, which is the lowest label
    return labels == int(np.argmax(sizes))


def boundary_to_mask(refined: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    Fill the region enclosed by a boundary.

    Returns:
        (region, open_contour). region is fill_holes(refined) | refined and never
        smaller than refined; open_contour is True when the boundary encloses nothing.
    """
    boundary = as_mask(refined, "boundary")
    region = fill_holes(boundary) | boundary
    open_contour = bool(boundary.any()) and int(region.sum()) == int(boundary.sum())
    return region, open_contour


def localize_depth_map(dm: InverseDepthMap, config: Optional[RunConfig] = None) -> LocalizationResult:
    """Full chain for one depth map; an empty edge mask yields an empty region, not an error."""
    config = config or RunConfig()
    edges = depth_boundary(dm, config.canny_low, config.canny_high, config.canny_sigma)
    try:
        refined = refine_boundary(edges, config.close_radius)
    except EmptyResultError:
        empty = np.zeros(dm.shape, dtype=bool)
        return LocalizationResult(edges=edges, refined=empty, region=empty, open_contour=True, empty_edges=True)

    region, open_contour = boundary_to_mask(refined)
    return LocalizationResult(edges=edges, refined=refined, region=region, open_contour=open_contour)


def localize_sequence(
    depth_maps: Sequence[InverseDepthMap],
    config: Optional[RunConfig] = None,
) -> List[LocalizationResult]:
    """Localize every map; results come back in input order."""
    config = config or RunConfig()
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            return list(pool.map(lambda dm: localize_depth_map(dm, config), depth_maps))
    return [localize_depth_map(dm, config) for dm in depth_maps]


def iou(a: np.ndarray, b: np.ndarray) -> float:
    """
    |a & b| / |a | b|. Two empty masks score 1, exactly one empty mask scores 0.

    Raises:
        InvalidInputError: If the masks differ in shape
    """
    a = as_mask(a, "predicted mask")
    b = as_mask(b, "truth mask")
    if a.shape != b.shape:
        raise InvalidInputError(f"mask shapes differ: {a.shape} vs {b.shape}")
    union = int(np.count_nonzero(a | b))
    if union == 0:
        return 1.0
    return int(np.count_nonzero(a & b)) / union


def miou(pairs: Sequence[Tuple[np.ndarray, np.ndarray]]) -> IouReport:
    """Per-pair IoU, their mean, and the strict mIoU > 0.5 verdict."""
    if len(pairs) == 0:
        raise InvalidInputError("mIoU needs at least one mask pair")
    per_frame = [iou(predicted, truth) for predicted, truth in pairs]
    mean = sum(per_frame) / len(per_frame)
    return IouReport(per_frame_iou=per_frame, miou=mean, pass_half=mean > 0.5)
