"""
Per-frame criteria for the Endo Key-frame Tool.
Hu-moment signature and distance, edge score, and FAST keypoint counting over
an area-averaged scale pyramid.
"""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage
from skimage import measure

from endo_keyframe_tool.engine.errors import DegenerateInputError, InvalidInputError, InvalidParameterError
from endo_keyframe_tool.engine.imgproc import (
    Frame,
    as_plane,
    frame_channel,
    gaussian_smooth,
    gradient_magnitude,
    sobel_gradients,
)

logger = logging.getLogger(__name__)

# Bresenham circle of radius 3 as (dx, dy), clockwise from 12 o'clock
FAST_RING = (
    (0, -3), (1, -3), (2, -2), (3, -1),
    (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1),
    (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)
FAST_ARC = 9
FAST_MARGIN = 3


@dataclass(frozen=True)
class HuVector:
    """The seven Hu invariants I1..I7."""

    phi: np.ndarray

    def __post_init__(self) -> None:
        phi = np.asarray(self.phi, dtype=np.float64)
        if phi.shape != (7,):
            raise InvalidInputError(f"HuVector needs 7 entries, got shape {phi.shape}")
        if not np.all(np.isfinite(phi)):
            raise InvalidInputError("HuVector entries must be finite")
        object.__setattr__(self, "phi", phi)

    def signed_log(self) -> "HuVector":
        """sign(phi) * log10|phi|, with zero mapped to zero."""
        out = np.zeros(7)
        nonzero = self.phi != 0.0
        out[nonzero] = np.sign(self.phi[nonzero]) * np.log10(np.abs(self.phi[nonzero]))
        return HuVector(out)


@dataclass(frozen=True)
class Keypoint:
    x: float
    y: float
    level: int
    score: float


def central_moments(p: np.ndarray, max_order: int = 3) -> np.ndarray:
    """
    Central moments mu[p, q] about the intensity centroid, for p + q <= max_order.

    x runs along columns and y along rows. Entries with p + q > max_order are 0.

    Raises:
        DegenerateInputError: If the total mass is not positive
    """
    plane = as_plane(p)
    m00 = plane.sum()
    if not m00 > 0.0:
        raise DegenerateInputError(f"moments need positive total mass, got {m00}")

    rows, cols = np.indices(plane.shape, dtype=np.float64)
    xc = (cols * plane).sum() / m00
    yc = (rows * plane).sum() / m00

    # Transposed so that the first index runs along x; an explicit centroid
    # makes scikit-image sum about it directly instead of converting raw moments
    mu = measure.moments_central(plane.T, center=(xc, yc), order=max_order)
    orders = np.add.outer(np.arange(max_order + 1), np.arange(max_order + 1))
    mu[orders > max_order] = 0.0
    mu[0, 0] = m00
    # First-order central moments vanish by construction
    if max_order >= 1:
        mu[1, 0] = 0.0
        mu[0, 1] = 0.0
    return mu


def hu_moments(p: np.ndarray) -> HuVector:
    """Seven Hu invariants from scale-normalized central moments (scikit-image)."""
    mu = central_moments(p, 3)
    nu = measure.moments_normalized(mu, order=3)
    return HuVector(measure.moments_hu(nu))


def moment_distance(a: HuVector, b: HuVector) -> float:
    """Sum of squared differences of the seven invariants."""
    diff = a.phi - b.phi
    return float(np.sum(diff * diff))


def edge_score(p: np.ndarray, sigma: float = 1.0) -> float:
    """Mean gradient magnitude of the Gaussian-smoothed plane."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    sx, sy = sobel_gradients(gaussian_smooth(p, sigma))
    return float(gradient_magnitude(sx, sy).mean())


def _longest_circular_run(flags: np.ndarray) -> np.ndarray:
    """Longest run of True along axis 0 of a (16, ...) stack, wrapping around."""
    run = np.zeros(flags.shape[1:], dtype=np.int32)
    best = np.zeros_like(run)
    n = flags.shape[0]
    for k in range(n + FAST_ARC - 1):
        run = (run + 1) * flags[k % n]
        np.maximum(best, run, out=best)
    return best


def fast_score_map(p: np.ndarray, t: float) -> np.ndarray:
    """
    FAST-9 segment test over every pixel with a 3-pixel margin.

    Returns:
        Score plane: 0 where the test fails, otherwise
        max(sum over brighter ring pixels of |v - c| - t, same over darker ones)
    """
    plane = as_plane(p)
    height, width = plane.shape
    if height < 2 * FAST_MARGIN + 1 or width < 2 * FAST_MARGIN + 1:
        raise InvalidInputError(f"FAST needs at least 7x7, got {width}x{height}")
    if t < 0:
        raise InvalidParameterError(f"FAST threshold must be nonnegative, got {t}")

    inner_h = height - 2 * FAST_MARGIN
    inner_w = width - 2 * FAST_MARGIN
    center = plane[FAST_MARGIN:FAST_MARGIN + inner_h, FAST_MARGIN:FAST_MARGIN + inner_w]
    ring = np.stack([
        plane[FAST_MARGIN + dy:FAST_MARGIN + dy + inner_h, FAST_MARGIN + dx:FAST_MARGIN + dx + inner_w]
        for dx, dy in FAST_RING
    ])

    brighter = ring > center + t
    darker = ring < center - t
    is_corner = (_longest_circular_run(brighter) >= FAST_ARC) | (_longest_circular_run(darker) >= FAST_ARC)

    deviation = np.abs(ring - center) - t
    score = np.maximum((deviation * brighter).sum(axis=0), (deviation * darker).sum(axis=0))

    out = np.zeros_like(plane)
    out[FAST_MARGIN:FAST_MARGIN + inner_h, FAST_MARGIN:FAST_MARGIN + inner_w] = np.where(is_corner, score, 0.0)
    return out


def fast_keypoints(p: np.ndarray, t: float, nms: bool = True) -> List[Keypoint]:
    """
    FAST-9 corners of a plane, in raster order.

    Args:
        p: Input plane (at least 7x7)
        t: Intensity threshold in the plane's units
        nms: Apply 3x3 non-maximum suppression on the corner score

    Returns:
        List of level-0 Keypoints
    """
    score = fast_score_map(p, t)
    corners = score > 0.0
    if nms:
        local_max = ndimage.maximum_filter(score, size=3, mode="constant", cval=0.0)
        corners &= score >= local_max
    rows, cols = np.nonzero(corners)
    return [Keypoint(x=float(c), y=float(r), level=0, score=float(score[r, c])) for r, c in zip(rows, cols)]


def build_pyramid(p: np.ndarray, levels: int, scale_factor: float) -> Dict[int, np.ndarray]:
    """
    Area-averaged pyramid; level l has size round(W / s^l) x round(H / s^l).

    Level 0 is the input itself and every further level is resampled from the
    one above it. Sizes only shrink, so once a level drops below 7x7 the
    pyramid stops there.
    """
    if levels < 1:
        raise InvalidParameterError(f"pyramid needs at least one level, got {levels}")
    if not scale_factor > 1.0:
        raise InvalidParameterError(f"scale factor must exceed 1, got {scale_factor}")

    base = as_plane(p)
    height, width = base.shape
    image = Image.fromarray(base.astype(np.float32))
    pyramid = {}
    for level in range(levels):
        scale = scale_factor ** level
        size = (int(round(width / scale)), int(round(height / scale)))
        if size[0] < 2 * FAST_MARGIN + 1 or size[1] < 2 * FAST_MARGIN + 1:
            logger.debug(f"Pyramid level {level} ({size[0]}x{size[1]}) too small, stopping")
            break
        if level == 0:
            pyramid[level] = base
        else:
            image = image.resize(size, resample=Image.Resampling.BOX)
            pyramid[level] = np.asarray(image, dtype=np.float64)
    return pyramid


def orb_keypoints(
    f: Frame,
    levels: int = 8,
    scale_factor: float = 1.2,
    t: float = 20.0 / 255.0,
    channel: str = "coc_o3",
    coc_matrix: Optional[Sequence[Sequence[float]]] = None,
) -> List[Keypoint]:
    """
    FAST keypoints (NMS on) at every usable pyramid level.

    Coordinates are mapped back to level-0 pixels. Orientation and descriptors
    are not computed.
    """
    plane = frame_channel(f, channel, coc_matrix)
    keypoints = []
    for level, level_plane in build_pyramid(plane, levels, scale_factor).items():
        scale = scale_factor ** level
        for kp in fast_keypoints(level_plane, t, nms=True):
            keypoints.append(Keypoint(x=kp.x * scale, y=kp.y * scale, level=level, score=kp.score))
    return keypoints


def orb_count(
    f: Frame,
    levels: int = 8,
    scale_factor: float = 1.2,
    t: float = 20.0 / 255.0,
    channel: str = "coc_o3",
    coc_matrix: Optional[Sequence[Sequence[float]]] = None,
) -> int:
    """Number of pyramid keypoints; the occlusion criterion p."""
    return len(orb_keypoints(f, levels, scale_factor, t, channel, coc_matrix))
