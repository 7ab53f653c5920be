"""
Raster primitives for the Endo Key-frame Tool.
Color conversion, separable smoothing, Sobel gradients, Canny, labeling and
binary morphology. All functions are pure; planes are float64 2-D arrays and
masks are bool 2-D arrays.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from skimage.filters import threshold_otsu

from endo_keyframe_tool.engine.errors import InvalidInputError, InvalidParameterError

logger = logging.getLogger(__name__)

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

SOBEL_X = np.array([[-1.0, 0.0, 1.0],
                    [-2.0, 0.0, 2.0],
                    [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T

# Convolution border rule everywhere: half-sample symmetric (d c b a | a b c d)
BORDER_MODE = "reflect"

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)
FOUR_CONNECTED = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class Frame:
    """An RGB raster with its position in the sequence. rgb has shape (H, W, 3), values in [0, 1]."""

    index: int
    rgb: np.ndarray

    def __post_init__(self) -> None:
        rgb = np.asarray(self.rgb, dtype=np.float64)
        if rgb.ndim != 3 or rgb.shape[2] != 3:
            raise InvalidInputError(f"frame {self.index}: expected (H, W, 3) raster, got shape {rgb.shape}")
        if rgb.shape[0] < 3 or rgb.shape[1] < 3:
            raise InvalidInputError(f"frame {self.index}: raster must be at least 3x3, got {rgb.shape[1]}x{rgb.shape[0]}")
        if self.index < 0:
            raise InvalidInputError(f"frame index must be nonnegative, got {self.index}")
        if not np.all(np.isfinite(rgb)) or rgb.min() < 0.0 or rgb.max() > 1.0:
            raise InvalidInputError(f"frame {self.index}: channel values must lie in [0, 1]")
        object.__setattr__(self, "rgb", rgb)

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


@dataclass(frozen=True)
class CocImage:
    """Color-opponent planes of a frame."""

    o1: np.ndarray
    o2: np.ndarray
    o3: np.ndarray


def as_plane(p: np.ndarray, name: str = "plane") -> np.ndarray:
    """
    Coerce an array to a finite float64 plane.

    Raises:
        InvalidInputError: If the array is not 2-D or holds NaN/Inf
    """
    plane = np.asarray(p, dtype=np.float64)
    if plane.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {plane.shape}")
    if not np.all(np.isfinite(plane)):
        raise InvalidInputError(f"{name} contains non-finite values")
    return plane


def as_mask(m: np.ndarray, name: str = "mask") -> np.ndarray:
    mask = np.asarray(m).astype(bool)
    if mask.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {mask.shape}")
    return mask


def to_grayscale(f: Frame) -> np.ndarray:
    """Luminance 0.299 R + 0.587 G + 0.114 B."""
    rgb = f.rgb
    wr, wg, wb = LUMA_WEIGHTS
    return wr * rgb[..., 0] + wg * rgb[..., 1] + wb * rgb[..., 2]


def rgb_to_coc(f: Frame, matrix: Optional[Sequence[Sequence[float]]] = None) -> CocImage:
    """
    Convert a frame to the color-opponent space.

    Args:
        f: Source frame
        matrix: Optional 3x3 basis; rows give O1, O2, O3. Defaults to the orthonormal
            basis O1=(R-G)/sqrt2, O2=(R+G-2B)/sqrt6, O3=(R+G+B)/sqrt3

    Returns:
        CocImage with planes matching the frame dimensions
    """
    if matrix is None:
        from endo_keyframe_tool.engine.config import DEFAULT_COC_MATRIX
        matrix = DEFAULT_COC_MATRIX
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (3, 3):
        raise InvalidParameterError(f"COC matrix must be 3x3, got {m.shape}")

    coc = np.einsum("hwc,kc->khw", f.rgb, m)
    return CocImage(o1=coc[0], o2=coc[1], o3=coc[2])


def frame_channel(f: Frame, channel: str = "coc_o3", matrix: Optional[Sequence[Sequence[float]]] = None) -> np.ndarray:
    """Return the working plane of a frame for the configured channel."""
    if channel == "luminance":
        return to_grayscale(f)
    coc = rgb_to_coc(f, matrix)
    planes = {"coc_o1": coc.o1, "coc_o2": coc.o2, "coc_o3": coc.o3}
    if channel not in planes:
        raise InvalidParameterError(f"unknown channel '{channel}', expected one of {sorted(planes) + ['luminance']}")
    return planes[channel]


def gaussian_kernel(sigma: float) -> np.ndarray:
    """Sampled 1-D Gaussian of size 2*ceil(3*sigma)+1, normalized to sum 1."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be positive, got {sigma}")
    radius = int(math.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-(x * x) / (2.0 * sigma * sigma))
    return kernel / kernel.sum()


def gaussian_smooth(p: np.ndarray, sigma: float) -> np.ndarray:
    """Separable Gaussian smoothing with reflect padding; output has the input shape."""
    kernel = gaussian_kernel(sigma)
    plane = as_plane(p)
    smoothed = ndimage.correlate1d(plane, kernel, axis=0, mode=BORDER_MODE)
    return ndimage.correlate1d(smoothed, kernel, axis=1, mode=BORDER_MODE)


def sobel_gradients(p: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    3x3 Sobel gradients with reflect padding.

    Returns:
        (sx, sy): horizontal (along columns) and vertical (along rows) responses

    Raises:
        InvalidInputError: If the raster is smaller than 3x3
    """
    plane = as_plane(p)
    if plane.shape[0] < 3 or plane.shape[1] < 3:
        raise InvalidInputError(f"Sobel needs at least 3x3, got {plane.shape[1]}x{plane.shape[0]}")
    sx = ndimage.correlate(plane, SOBEL_X, mode=BORDER_MODE)
    sy = ndimage.correlate(plane, SOBEL_Y, mode=BORDER_MODE)
    return sx, sy


def gradient_magnitude(sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    sx = np.asarray(sx, dtype=np.float64)
    sy = np.asarray(sy, dtype=np.float64)
    if sx.shape != sy.shape:
        raise InvalidInputError(f"gradient planes differ in shape: {sx.shape} vs {sy.shape}")
    return np.sqrt(sx * sx + sy * sy)


def normalize_to_u8(p: np.ndarray) -> np.ndarray:
    """Stretch [min, max] affinely onto [0, 255]; a constant plane maps to all zeros."""
    plane = as_plane(p)
    lo = plane.min()
    hi = plane.max()
    if hi == lo:
        return np.zeros_like(plane)
    return (plane - lo) / (hi - lo) * 255.0


def otsu_threshold(values: np.ndarray) -> float:
    """Otsu threshold of a value histogram (scikit-image, 256 bins)."""
    values = np.asarray(values, dtype=np.float64)
    if values.max() == values.min():
        return float(values.max())
    return float(threshold_otsu(values))


def _non_max_suppression(mag: np.ndarray, sx: np.ndarray, sy: np.ndarray) -> np.ndarray:
    """
    Keep pixels that are ridge maxima across the quantized gradient direction.

    A pixel survives when its magnitude is strictly greater than the neighbour
    behind it and at least the neighbour ahead of it, so a symmetric ridge two
    pixels wide keeps exactly one of them.
    """
    height, width = mag.shape
    angle = np.rad2deg(np.arctan2(sy, sx)) % 180.0
    padded = np.pad(mag, 1, mode="constant")

    # (row, col) step for each quantized direction: 0, 45, 90, 135 degrees
    sectors = [
        ((angle < 22.5) | (angle >= 157.5), (0, 1)),
        ((angle >= 22.5) & (angle < 67.5), (1, 1)),
        ((angle >= 67.5) & (angle < 112.5), (1, 0)),
        ((angle >= 112.5) & (angle < 157.5), (1, -1)),
    ]

    keep = np.zeros_like(mag, dtype=bool)
    for in_sector, (dr, dc) in sectors:
        ahead = padded[1 + dr:1 + dr + height, 1 + dc:1 + dc + width]
        behind = padded[1 - dr:1 - dr + height, 1 - dc:1 - dc + width]
        keep |= in_sector & (mag > behind) & (mag >= ahead)
    return keep


def canny(
    p: np.ndarray,
    low: Optional[float] = None,
    high: Optional[float] = None,
    sigma: Optional[float] = 1.0,
) -> np.ndarray:
    """
    Canny edge detector.

    Gaussian smoothing (skipped when sigma is None), Sobel gradients, 4-direction
    non-maximum suppression and double-threshold hysteresis with 8-connected linking.

    Args:
        p: Input plane
        low: Low threshold on gradient magnitude; defaults to 0.5 * high
        high: High threshold; defaults to the Otsu threshold of the magnitude histogram
        sigma: Smoothing sigma, or None when p is already smoothed

    Returns:
        Boolean edge mask

    Raises:
        InvalidParameterError: If a threshold is negative or low > high
    """
    if low is not None and high is not None and low > high:
        raise InvalidParameterError(f"canny low threshold {low} exceeds high threshold {high}")

    plane = as_plane(p)
    smoothed = gaussian_smooth(plane, sigma) if sigma is not None else plane
    sx, sy = sobel_gradients(smoothed)
    mag = gradient_magnitude(sx, sy)

    if mag.max() == 0.0:
        return np.zeros(mag.shape, dtype=bool)

    if high is None:
        high = otsu_threshold(mag)
    if low is None:
        low = 0.5 * high
    if low < 0 or high < 0:
        raise InvalidParameterError(f"canny thresholds must be nonnegative, got low={low}, high={high}")
    if low > high:
        raise InvalidParameterError(f"canny low threshold {low} exceeds high threshold {high}")
    logger.debug(f"Canny thresholds low={low:.6g} high={high:.6g}")

    ridge = _non_max_suppression(mag, sx, sy) & (mag > 0.0)
    candidates = ridge & (mag >= low)
    strong = candidates & (mag >= high)

    labels, _ = ndimage.label(candidates, structure=EIGHT_CONNECTED)
    linked = np.unique(labels[strong])
    linked = linked[linked > 0]
    return np.isin(labels, linked)


def connected_components(m: np.ndarray, connectivity: int = 8) -> np.ndarray:
    """
    Label foreground components.

    Labels are numbered 1..L in order of each component's first pixel in
    raster-scan order; background is 0.

    Raises:
        InvalidParameterError: If connectivity is not 4 or 8
    """
    if connectivity not in (4, 8):
        raise InvalidParameterError(f"connectivity must be 4 or 8, got {connectivity}")
    mask = as_mask(m)
    structure = EIGHT_CONNECTED if connectivity == 8 else FOUR_CONNECTED
    labels, count = ndimage.label(mask, structure=structure)
    if count == 0:
        return labels.astype(np.int32)

    # Renumber by first raster-scan encounter
    values, first_index = np.unique(labels.ravel(), return_index=True)
    foreground = values > 0
    order = values[foreground][np.argsort(first_index[foreground], kind="stable")]
    mapping = np.zeros(count + 1, dtype=np.int32)
    mapping[order] = np.arange(1, count + 1, dtype=np.int32)
    return mapping[labels]


def component_sizes(labels: np.ndarray) -> np.ndarray:
    """Pixel count per label; index 0 is the background."""
    return np.bincount(np.asarray(labels).ravel())


def disk_structure(radius: int) -> np.ndarray:
    """Digital disk {dx^2 + dy^2 <= (radius + 1/2)^2}; radius 1 is the full 3x3 square."""
    if radius < 1:
        raise InvalidParameterError(f"structuring element radius must be >= 1, got {radius}")
    y, x = np.ogrid[-radius:radius + 1, -radius:radius + 1]
    return (x * x + y * y) <= (radius + 0.5) ** 2


def morph_close(m: np.ndarray, radius: int) -> np.ndarray:
    """Dilation then erosion with a disk; the mask is zero-padded so closing stays extensive at borders."""
    structure = disk_structure(radius)
    mask = as_mask(m)
    padded = np.pad(mask, radius, mode="constant", constant_values=False)
    closed = ndimage.binary_erosion(
        ndimage.binary_dilation(padded, structure=structure),
        structure=structure,
        border_value=0,
    )
    return closed[radius:-radius, radius:-radius]


def fill_holes(m: np.ndarray) -> np.ndarray:
    """Background pixels not 4-connected to the raster border become foreground."""
    return ndimage.binary_fill_holes(as_mask(m), structure=FOUR_CONNECTED)
