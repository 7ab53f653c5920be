"""
Depth-map metrics for the Endo Key-frame Tool.
Scale-and-shift alignment, the scale-and-shift-invariant loss, the multi-scale
gradient-matching term, and PFM / 16-bit PNG depth-map I/O.
"""

import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image

from endo_keyframe_tool.engine.errors import (
    DegenerateInputError,
    FormatError,
    InvalidInputError,
    InvalidParameterError,
)

logger = logging.getLogger(__name__)

# Relative tolerance on the normal-equation determinant
SINGULAR_TOLERANCE = 1e-12


@dataclass(frozen=True)
class InverseDepthMap:
    """Relative inverse depth (larger = nearer) with an optional validity mask."""

    values: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise InvalidInputError(f"depth map must be 2-D, got shape {values.shape}")
        valid = None
        if self.valid is not None:
            valid = np.asarray(self.valid).astype(bool)
            if valid.shape != values.shape:
                raise InvalidInputError(f"validity mask shape {valid.shape} does not match map shape {values.shape}")
            if not np.all(np.isfinite(values[valid])):
                raise InvalidInputError("depth map has non-finite values on valid pixels")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self) -> Tuple[int, int]:
        return self.values.shape

    @property
    def mask(self) -> np.ndarray:
        """Effective validity: the explicit mask, or every finite pixel."""
        if self.valid is not None:
            return self.valid
        return np.isfinite(self.values)

    def filled(self) -> np.ndarray:
        """Values with invalid pixels replaced by the smallest valid value (farthest)."""
        mask = self.mask
        if not mask.any():
            return np.zeros_like(self.values)
        return np.where(mask, self.values, self.values[mask].min())


@dataclass(frozen=True)
class ScaleShift:
    s: float
    t: float


def _check_pair(pred: InverseDepthMap, gt: InverseDepthMap) -> np.ndarray:
    if pred.shape != gt.shape:
        raise InvalidInputError(f"prediction {pred.shape} and ground truth {gt.shape} differ in shape")
    return pred.mask & gt.mask


def fit_scale_shift(pred: InverseDepthMap, gt: InverseDepthMap) -> ScaleShift:
    """
    Closed-form least-squares (s, t) minimizing sum (s * d_i + t - d'_i)^2 over valid pixels.

    Solves the 2x2 normal equations in centered form.

    Raises:
        InvalidInputError: If the maps differ in shape
        DegenerateInputError: If fewer than 2 valid pixels or the prediction is constant
    """
    valid = _check_pair(pred, gt)
    n = int(valid.sum())
    if n < 2:
        raise DegenerateInputError(f"alignment needs at least 2 valid pixels, got {n}")

    d = pred.values[valid]
    g = gt.values[valid]
    d_mean = d.sum() / n
    g_mean = g.sum() / n
    dc = d - d_mean

    # det of [[sum d^2, sum d], [sum d, n]] equals n * sum (d - mean)^2
    det = n * np.sum(dc * dc)
    scale = max(1.0, n * np.sum(d * d))
    if abs(det) < SINGULAR_TOLERANCE * scale:
        raise DegenerateInputError("prediction is constant on the valid pixels; scale and shift are not identifiable")

    s = np.sum(dc * (g - g_mean)) / np.sum(dc * dc)
    t = g_mean - s * d_mean
    return ScaleShift(s=float(s), t=float(t))


def residual_map(pred: InverseDepthMap, gt: InverseDepthMap, p: ScaleShift) -> np.ndarray:
    """Q_i = s * d_i + t - d'_i on valid pixels, 0 elsewhere."""
    valid = _check_pair(pred, gt)
    q = np.zeros(pred.shape)
    q[valid] = p.s * pred.values[valid] + p.t - gt.values[valid]
    return q


def ssi_loss(pred: InverseDepthMap, gt: InverseDepthMap, p: Optional[ScaleShift] = None) -> float:
    """
    Scale-and-shift-invariant loss (1 / 2N) sum (s * d_i + t - d'_i)^2 at the optimal (s, t).

    Args:
        pred: Predicted inverse depth
        gt: Ground-truth inverse depth
        p: Precomputed alignment; fitted when omitted
    """
    if p is None:
        p = fit_scale_shift(pred, gt)
    valid = _check_pair(pred, gt)
    n = int(valid.sum())
    r = p.s * pred.values[valid] + p.t - gt.values[valid]
    return float(np.sum(r * r) / (2.0 * n))


def _halve(values: np.ndarray, valid: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """2x2 area average; a coarse pixel is valid only if all four children are."""
    height = values.shape[0] // 2 * 2
    width = values.shape[1] // 2 * 2
    v = np.where(valid, values, 0.0)[:height, :width]
    m = valid[:height, :width]
    coarse = v.reshape(height // 2, 2, width // 2, 2).mean(axis=(1, 3))
    coarse_valid = m.reshape(height // 2, 2, width // 2, 2).all(axis=(1, 3))
    return coarse, coarse_valid


def _gradient_l1(q: np.ndarray, valid: np.ndarray) -> float:
    """Sum of |forward differences| in x and y over pairs of valid pixels."""
    dx = np.abs(q[:, 1:] - q[:, :-1])
    dx_valid = valid[:, 1:] & valid[:, :-1]
    dy = np.abs(q[1:, :] - q[:-1, :])
    dy_valid = valid[1:, :] & valid[:-1, :]
    return float(np.sum(dx[dx_valid]) + np.sum(dy[dy_valid]))


def gradient_matching_loss(
    pred: InverseDepthMap,
    gt: InverseDepthMap,
    k_scales: int = 4,
    p: Optional[ScaleShift] = None,
) -> float:
    """
    Multi-scale gradient matching of the alignment residual.

    (1 / N) * sum over scales k of sum_i |dx Q^k_i| + |dy Q^k_i|, where Q^k is the
    residual of both maps downsampled k-1 times by 2x2 area averaging, (s, t) is
    fitted once at full resolution and N is the full-resolution valid count.

    Raises:
        InvalidParameterError: If k_scales < 1 or the coarsest scale is below 2x2
    """
    if k_scales < 1:
        raise InvalidParameterError(f"k_scales must be >= 1, got {k_scales}")
    valid = _check_pair(pred, gt)
    coarsest = min(pred.shape) // (2 ** (k_scales - 1))
    if coarsest < 2:
        raise InvalidParameterError(
            f"{k_scales} scales reduce a {pred.shape[1]}x{pred.shape[0]} map below 2x2"
        )
    if p is None:
        p = fit_scale_shift(pred, gt)

    n = int(valid.sum())
    d = np.where(valid, pred.values, 0.0)
    g = np.where(valid, gt.values, 0.0)
    level_valid = valid

    total = 0.0
    for level in range(k_scales):
        if level > 0:
            d, _ = _halve(d, level_valid)
            g, level_valid = _halve(g, level_valid)
        q = np.where(level_valid, p.s * d + p.t - g, 0.0)
        total += _gradient_l1(q, level_valid)
    return total / n


@dataclass(frozen=True)
class PairMetrics:
    s: float
    t: float
    ssi: float
    regularizer: float


def evaluate_pair(pred: InverseDepthMap, gt: InverseDepthMap, k_scales: int = 4) -> PairMetrics:
    """Fit once and compute both loss terms for one prediction / ground-truth pair."""
    p = fit_scale_shift(pred, gt)
    return PairMetrics(
        s=p.s,
        t=p.t,
        ssi=ssi_loss(pred, gt, p),
        regularizer=gradient_matching_loss(pred, gt, k_scales, p),
    )


def combine_losses(ssi_values: Sequence[float], reg_values: Sequence[float], alpha: float = 0.5) -> float:
    """(1 / M) * sum_m (ssi_m + alpha * reg_m), reduced in list order."""
    if len(ssi_values) == 0:
        raise InvalidInputError("total loss needs at least one pair")
    if len(ssi_values) != len(reg_values):
        raise InvalidInputError("loss term lists differ in length")
    total = 0.0
    for ssi, reg in zip(ssi_values, reg_values):
        total += ssi + alpha * reg
    return total / len(ssi_values)


def total_loss(
    pairs: Sequence[Tuple[InverseDepthMap, InverseDepthMap]],
    alpha: float = 0.5,
    k_scales: int = 4,
    workers: int = 1,
) -> float:
    """
    Batched loss over M pairs: mean of ssi + alpha * gradient-matching term.

    Pairs may be evaluated concurrently; the final reduction runs in list order.

    Raises:
        InvalidInputError: If pairs is empty
    """
    if len(pairs) == 0:
        raise InvalidInputError("total loss needs at least one pair")

    def _evaluate(pair: Tuple[InverseDepthMap, InverseDepthMap]) -> PairMetrics:
        return evaluate_pair(pair[0], pair[1], k_scales)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            metrics: List[PairMetrics] = list(pool.map(_evaluate, pairs))
    else:
        metrics = [_evaluate(pair) for pair in pairs]
    return combine_losses([m.ssi for m in metrics], [m.regularizer for m in metrics], alpha)


def _read_header_line(f) -> str:
    line = f.readline()
    if not line:
        raise FormatError("PFM header is truncated")
    try:
        return line.decode("ascii").strip()
    except UnicodeDecodeError as e:
        raise FormatError("PFM header is not ASCII") from e


def read_pfm(path: str) -> InverseDepthMap:
    """
    Read a single-channel PFM ("Pf") file.

    A negative scale means little-endian payload, positive means big-endian.
    Rows are stored bottom-up and returned top-down. Non-finite pixels are
    marked invalid.

    Raises:
        FormatError: On a 3-channel file, malformed header or truncated payload
    """
    try:
        with open(path, "rb") as f:
            magic = _read_header_line(f)
            if magic == "PF":
                raise FormatError(f"{path}: 3-channel PFM ('PF') is not supported")
            if magic != "Pf":
                raise FormatError(f"{path}: not a PFM file (magic {magic!r})")

            dims = _read_header_line(f).split()
            if len(dims) != 2:
                raise FormatError(f"{path}: malformed PFM dimensions line")
            try:
                width, height = int(dims[0]), int(dims[1])
                scale = float(_read_header_line(f))
            except ValueError as e:
                raise FormatError(f"{path}: malformed PFM header: {e}") from e
            if width <= 0 or height <= 0 or scale == 0.0:
                raise FormatError(f"{path}: invalid PFM header values ({width}x{height}, scale {scale})")

            payload = f.read()
    except OSError as e:
        raise FormatError(f"{path}: cannot read PFM: {e}") from e

    expected = width * height * 4
    if len(payload) < expected:
        raise FormatError(f"{path}: PFM payload truncated ({len(payload)} of {expected} bytes)")

    dtype = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload[:expected], dtype=dtype).reshape(height, width)
    values = np.flipud(data).astype(np.float64)
    finite = np.isfinite(values)
    return InverseDepthMap(values=values, valid=None if finite.all() else finite)


def write_pfm(depth_map: InverseDepthMap, path: str) -> None:
    """Write a little-endian single-channel PFM (scale -1.0, rows bottom-up)."""
    values = np.asarray(depth_map.values, dtype="<f4")
    height, width = values.shape
    with open(path, "wb") as f:
        f.write(f"Pf\n{width} {height}\n-1.0\n".encode("ascii"))
        f.write(np.ascontiguousarray(np.flipud(values)).tobytes())


def read_depth_png16(path: str, invert: bool = False) -> InverseDepthMap:
    """
    Read a 16-bit single-channel PNG as values in [0, 1].

    Zero pixels are marked invalid. With invert, v becomes 1 - v (for files
    that store depth rather than inverse depth).

    Raises:
        FormatError: If the file is not a 16-bit single-channel image
    """
    try:
        with Image.open(path) as img:
            img.load()
            mode = img.mode
            raw = np.asarray(img)
    except OSError as e:
        raise FormatError(f"{path}: cannot decode PNG: {e}") from e

    if not (mode.startswith("I;16") or mode == "I"):
        raise FormatError(f"{path}: expected a 16-bit single-channel PNG, got mode {mode}")
    if raw.ndim != 2:
        raise FormatError(f"{path}: expected a single channel, got shape {raw.shape}")
    if mode == "I" and (raw.min() < 0 or raw.max() > 65535):
        raise FormatError(f"{path}: values exceed the 16-bit range")

    raw = raw.astype(np.float64)
    values = raw / 65535.0
    if invert:
        values = 1.0 - values
    return InverseDepthMap(values=values, valid=raw != 0)


def load_depth_map(path: str, invert: bool = False) -> InverseDepthMap:
    """Read a depth map by extension: .pfm or 16-bit .png."""
    ext = os.path.splitext(path)[1].lower()
    if ext == ".pfm":
        return read_pfm(path)
    if ext == ".png":
        return read_depth_png16(path, invert=invert)
    raise FormatError(f"{path}: unsupported depth map format '{ext}' (expected .pfm or .png)")
