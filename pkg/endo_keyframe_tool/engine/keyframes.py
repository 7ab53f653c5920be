"""
Key-frame selection engine for the Endo Key-frame Tool.
Assembles per-frame criteria (moment distance d, edge score s, keypoint count p),
min-max normalizes them, weights each by its total variation, fuses, and selects.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from endo_keyframe_tool.engine.config import RunConfig, SelectionPolicy
from endo_keyframe_tool.engine.depth import InverseDepthMap
from endo_keyframe_tool.engine.errors import DegenerateInputError, InvalidInputError, InvalidParameterError
from endo_keyframe_tool.engine.features import HuVector, edge_score, hu_moments, moment_distance, orb_count
from endo_keyframe_tool.engine.imgproc import Frame, frame_channel, normalize_to_u8

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScoreSeries:
    """Raw and normalized per-frame criteria, plus the fused score once weights are known."""

    d_raw: np.ndarray
    s_raw: np.ndarray
    p_raw: np.ndarray
    d_norm: np.ndarray
    s_norm: np.ndarray
    p_norm: np.ndarray
    fused: Optional[np.ndarray] = None

    @classmethod
    def from_raw(cls, d_raw: Sequence[float], s_raw: Sequence[float], p_raw: Sequence[float]) -> "ScoreSeries":
        d = np.asarray(d_raw, dtype=np.float64)
        s = np.asarray(s_raw, dtype=np.float64)
        p = np.asarray(p_raw, dtype=np.float64)
        if not (d.shape == s.shape == p.shape) or d.ndim != 1:
            raise InvalidInputError("criterion series must be 1-D and of equal length")
        return cls(
            d_raw=d,
            s_raw=s,
            p_raw=p,
            d_norm=min_max_normalize(d),
            s_norm=min_max_normalize(s),
            p_norm=min_max_normalize(p),
        )

    @property
    def n(self) -> int:
        return int(self.d_raw.shape[0])

    def with_fused(self, fused: np.ndarray) -> "ScoreSeries":
        return replace(self, fused=np.asarray(fused, dtype=np.float64))


@dataclass(frozen=True)
class AdaptiveWeights:
    """Simplex weights w1, w2, w3 and the total variations d1, s1, p1 they came from."""

    w1: float
    w2: float
    w3: float
    d1: float = 0.0
    s1: float = 0.0
    p1: float = 0.0

    def as_tuple(self) -> Tuple[float, float, float]:
        return (self.w1, self.w2, self.w3)


def min_max_normalize(series: Sequence[float]) -> np.ndarray:
    """(x - min) / (max - min); a constant series maps to all zeros."""
    values = np.asarray(series, dtype=np.float64)
    if values.size == 0:
        raise InvalidInputError("cannot normalize an empty series")
    lo = values.min()
    hi = values.max()
    if hi == lo:
        return np.zeros_like(values)
    return (values - lo) / (hi - lo)


def total_variation(series: Sequence[float]) -> float:
    """Sum of absolute consecutive differences."""
    values = np.asarray(series, dtype=np.float64)
    return float(np.sum(np.abs(np.diff(values))))


def weights_from_variations(d1: float, s1: float, p1: float) -> AdaptiveWeights:
    """
    w_j = v_j / (d1 + s1 + p1).

    Raises:
        DegenerateInputError: If no criterion varies
    """
    total = d1 + s1 + p1
    if total == 0.0:
        raise DegenerateInputError("no criterion varies across the sequence; weights are undefined")
    return AdaptiveWeights(w1=d1 / total, w2=s1 / total, w3=p1 / total, d1=d1, s1=s1, p1=p1)


def adaptive_weights(series: ScoreSeries) -> AdaptiveWeights:
    """Weights from the total variation of each normalized criterion."""
    if series.n < 2:
        raise InvalidInputError(f"weights need at least 2 frames, got {series.n}")
    return weights_from_variations(
        total_variation(series.d_norm),
        total_variation(series.s_norm),
        total_variation(series.p_norm),
    )


def fuse_scores(series: ScoreSeries, w: AdaptiveWeights) -> np.ndarray:
    """Per-frame fused score w1 * d + w2 * s + w3 * p on normalized criteria, in [0, 1]."""
    fused = w.w1 * series.d_norm + w.w2 * series.s_norm + w.w3 * series.p_norm
    return np.clip(fused, 0.0, 1.0)


def sequence_fused_score(w: AdaptiveWeights) -> float:
    """Whole-sequence score w1 * d1 + w2 * s1 + w3 * p1 over the total variations."""
    return w.w1 * w.d1 + w.w2 * w.s1 + w.w3 * w.p1


def nearest_rank_threshold(values: np.ndarray, q: float) -> float:
    """The ceil(q * n)-th smallest value (1-based)."""
    ordered = np.sort(values, kind="stable")
    # Rounding guards ceil against representation error in q * n
    rank = max(1, int(math.ceil(round(q * len(ordered), 9))))
    return float(ordered[rank - 1])


def select_keyframes(fused: Sequence[float], policy: SelectionPolicy) -> List[int]:
    """
    Indices of selected frames, ascending.

    quantile: fused >= nearest-rank q-quantile; top_k: the k highest, ties toward
    the lower index; absolute: fused >= threshold.

    Raises:
        InvalidParameterError: If k exceeds the number of frames
    """
    values = np.asarray(fused, dtype=np.float64)
    n = values.shape[0]
    if n < 1:
        raise InvalidInputError("selection needs at least one frame")

    if policy.mode == "quantile":
        cut = nearest_rank_threshold(values, policy.q)
        chosen = np.nonzero(values >= cut)[0]
    elif policy.mode == "top_k":
        if policy.k > n:
            raise InvalidParameterError(f"top_k asks for {policy.k} frames but the sequence has {n}")
        order = np.lexsort((np.arange(n), -values))
        chosen = np.sort(order[:policy.k])
    else:
        chosen = np.nonzero(values >= policy.threshold)[0]
    return [int(i) for i in chosen]


def _depth_edge_plane(depth_map: InverseDepthMap) -> np.ndarray:
    """Depth map stretched to [0, 1] so edge scores compare across frames."""
    return normalize_to_u8(depth_map.filled()) / 255.0


def _frame_criteria(
    frame: Frame,
    config: RunConfig,
    depth_map: Optional[InverseDepthMap],
) -> Tuple[HuVector, float, int]:
    try:
        plane = frame_channel(frame, config.channel, config.coc_matrix)
        hu = hu_moments(plane)
        if config.hu_transform == "signed_log":
            hu = hu.signed_log()

        edge_plane = _depth_edge_plane(depth_map) if depth_map is not None else plane
        s = edge_score(edge_plane, config.sigma)
        p = orb_count(
            frame,
            levels=config.fast_levels,
            scale_factor=config.fast_scale_factor,
            t=config.fast_threshold,
            channel=config.channel,
            coc_matrix=config.coc_matrix,
        )
    except DegenerateInputError as e:
        raise DegenerateInputError(f"frame {frame.index}: {e}") from e
    logger.debug(f"Frame {frame.index}: s={s:.6g} p={p}")
    return hu, s, p


def compute_frame_scores(
    frames: Sequence[Frame],
    config: Optional[RunConfig] = None,
    depth_maps: Optional[Sequence[InverseDepthMap]] = None,
) -> ScoreSeries:
    """
    Raw and normalized criteria for a frame sequence.

    d_raw[0] = 0 and d_raw[i] is the moment distance between frames i and i-1.
    Frames are scored concurrently when config.workers > 1; results are
    assembled in frame order.

    Args:
        frames: Sequence of at least two frames
        config: Run configuration (defaults when omitted)
        depth_maps: Depth maps aligned with frames; used for the edge criterion
            when config.edge_source is "depth"

    Raises:
        InvalidInputError: On fewer than 2 frames, duplicate indices, mixed sizes or missing depth
        DegenerateInputError: On a zero-mass frame (message names the frame index)
    """
    config = config or RunConfig()
    if len(frames) < 2:
        raise InvalidInputError(f"scoring needs at least 2 frames, got {len(frames)}")
    indices = [f.index for f in frames]
    if len(set(indices)) != len(indices):
        raise InvalidInputError("frame indices must be unique within a sequence")
    shapes = {f.rgb.shape for f in frames}
    if len(shapes) > 1:
        raise InvalidInputError(f"frames of one sequence must share dimensions, got {sorted(shapes)}")

    edge_maps: List[Optional[InverseDepthMap]] = [None] * len(frames)
    if config.edge_source == "depth":
        if depth_maps is None or len(depth_maps) != len(frames):
            raise InvalidInputError("edge_source 'depth' needs one depth map per frame")
        edge_maps = list(depth_maps)

    logger.info(f"Scoring {len(frames)} frames with {config.workers} worker(s)")
    jobs = list(zip(frames, edge_maps))
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            criteria = list(pool.map(lambda job: _frame_criteria(job[0], config, job[1]), jobs))
    else:
        criteria = [_frame_criteria(frame, config, dm) for frame, dm in jobs]

    d_raw = [0.0]
    for i in range(1, len(criteria)):
        d_raw.append(moment_distance(criteria[i][0], criteria[i - 1][0]))
    s_raw = [c[1] for c in criteria]
    p_raw = [float(c[2]) for c in criteria]
    return ScoreSeries.from_raw(d_raw, s_raw, p_raw)


def score_sequence(
    frames: Sequence[Frame],
    config: Optional[RunConfig] = None,
    depth_maps: Optional[Sequence[InverseDepthMap]] = None,
) -> Tuple[ScoreSeries, AdaptiveWeights]:
    """Score, weight and fuse a sequence."""
    series = compute_frame_scores(frames, config, depth_maps)
    weights = adaptive_weights(series)
    logger.info(f"Weights: w1={weights.w1:.4f} w2={weights.w2:.4f} w3={weights.w3:.4f}")
    return series.with_fused(fuse_scores(series, weights)), weights
