"""
Sequence ingestion for the Endo Key-frame Tool.
Finds frame, depth and mask files, decodes them, and records the byte digest
of every input so reports can be tied to exactly what was read.
"""

import glob
import hashlib
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from PIL import Image

from endo_keyframe_tool.engine.depth import InverseDepthMap, load_depth_map
from endo_keyframe_tool.engine.errors import FormatError, InvalidInputError
from endo_keyframe_tool.engine.imgproc import Frame

logger = logging.getLogger(__name__)

FRAME_EXTENSIONS = (".png", ".jpg", ".jpeg")
DEPTH_EXTENSIONS = (".pfm", ".png")
MASK_EXTENSIONS = (".png",)


@dataclass
class SequenceManifest:
    """Ordered, aligned file lists of one sequence plus their decoded frames."""

    sequence_id: str
    frame_paths: List[str] = field(default_factory=list)
    frames: List[Frame] = field(default_factory=list)
    depth_paths: List[str] = field(default_factory=list)
    truth_paths: List[str] = field(default_factory=list)
    digests: Dict[str, str] = field(default_factory=dict)

    def __len__(self) -> int:
        return max(len(self.frame_paths), len(self.depth_paths), len(self.truth_paths))

    def file_names(self) -> List[str]:
        """Base names of the primary file list (frames, else depth maps)."""
        paths = self.frame_paths or self.depth_paths
        return [os.path.basename(p) for p in paths]

    def load_depth_maps(self, invert: bool = False) -> List[InverseDepthMap]:
        if not self.depth_paths:
            raise InvalidInputError(f"sequence '{self.sequence_id}' has no depth maps")
        return [load_depth_map(path, invert) for path in self.depth_paths]

    def load_truth_masks(self) -> List[np.ndarray]:
        if not self.truth_paths:
            raise InvalidInputError(f"sequence '{self.sequence_id}' has no ground-truth masks")
        return [read_mask_png(path) for path in self.truth_paths]


def list_files(source: str, extensions: Sequence[str]) -> List[str]:
    """
    Files from a directory or a glob pattern, sorted lexicographically by file name.

    Raises:
        InvalidInputError: If the directory or pattern matches nothing
    """
    if os.path.isdir(source):
        paths = [os.path.join(source, name) for name in os.listdir(source)]
    else:
        paths = glob.glob(source)
        if not paths:
            raise InvalidInputError(f"no files match {source}")

    paths = [p for p in paths if os.path.isfile(p) and os.path.splitext(p)[1].lower() in extensions]
    return sorted(paths, key=lambda p: (os.path.basename(p), p))


def file_digest(path: str) -> str:
    sha = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            sha.update(chunk)
    return sha.hexdigest()


def _image_to_rgb(img: Image.Image) -> np.ndarray:
    """Decoded image as float RGB in [0, 1]; 16-bit grayscale is scaled by 65535."""
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        gray = np.asarray(img, dtype=np.float64) / 65535.0
        return np.repeat(np.clip(gray, 0.0, 1.0)[..., None], 3, axis=2)
    if img.mode != "RGB":
        img = img.convert("RGB")
    return np.asarray(img, dtype=np.float64) / 255.0


def load_frame(path: str, index: int) -> Frame:
    """
    Decode a PNG or JPEG into a Frame.

    Raises:
        FormatError: If the file cannot be decoded (message names the file)
    """
    try:
        with Image.open(path) as img:
            img.load()
            rgb = _image_to_rgb(img)
    except (OSError, ValueError, Image.DecompressionBombError) as e:
        raise FormatError(f"cannot decode image {path}: {e}") from e
    return Frame(index=index, rgb=rgb)


def read_mask_png(path: str) -> np.ndarray:
    """Binary mask from an 8-bit PNG; any nonzero pixel is foreground."""
    try:
        with Image.open(path) as img:
            img.load()
            values = np.asarray(img.convert("L") if img.mode not in ("L", "1") else img)
    except OSError as e:
        raise FormatError(f"cannot decode mask {path}: {e}") from e
    return values.astype(bool)


def write_mask_png(mask: np.ndarray, path: str) -> None:
    """8-bit PNG, foreground 255 and background 0."""
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    Image.fromarray(np.where(np.asarray(mask, dtype=bool), 255, 0).astype(np.uint8), mode="L").save(path, format="PNG")


def ingest_frames(source: str, sequence_id: Optional[str] = None) -> SequenceManifest:
    """
    Decode every frame of a directory or glob; index is the sorted position.

    Raises:
        InvalidInputError: On fewer than 2 frames or mixed frame dimensions
        FormatError: On an undecodable file
    """
    paths = list_files(source, FRAME_EXTENSIONS)
    if len(paths) < 2:
        raise InvalidInputError(f"need at least 2 frames in {source}, found {len(paths)}")

    frames = [load_frame(path, index) for index, path in enumerate(paths)]
    first = frames[0].rgb.shape
    for path, frame in zip(paths, frames):
        if frame.rgb.shape != first:
            raise InvalidInputError(
                f"frame {os.path.basename(path)} is {frame.width}x{frame.height}, "
                f"expected {first[1]}x{first[0]} like the rest of the sequence"
            )

    manifest = SequenceManifest(
        sequence_id=sequence_id or _sequence_name(source),
        frame_paths=paths,
        frames=frames,
    )
    _record_digests(manifest, "frames", paths)
    logger.info(f"Ingested {len(frames)} frames ({first[1]}x{first[0]}) from {source}")
    return manifest


def ingest_sequence(
    input: Optional[str] = None,
    depth: Optional[str] = None,
    truth: Optional[str] = None,
    sequence_id: Optional[str] = None,
) -> SequenceManifest:
    """
    Build a manifest from any combination of frame, depth and truth sources.

    Lists that are present must be aligned (equal length).
    """
    if input is None and depth is None:
        raise InvalidInputError("a sequence needs frames (--input) or depth maps (--depth)")

    if input is not None:
        manifest = ingest_frames(input, sequence_id)
    else:
        manifest = SequenceManifest(sequence_id=sequence_id or _sequence_name(depth))

    if depth is not None:
        manifest.depth_paths = list_files(depth, DEPTH_EXTENSIONS)
        if not manifest.depth_paths:
            raise InvalidInputError(f"no depth maps (.pfm/.png) found in {depth}")
        _record_digests(manifest, "depth", manifest.depth_paths)
    if truth is not None:
        manifest.truth_paths = list_files(truth, MASK_EXTENSIONS)
        if not manifest.truth_paths:
            raise InvalidInputError(f"no ground-truth masks (.png) found in {truth}")
        _record_digests(manifest, "truth", manifest.truth_paths)

    lengths = {
        name: len(paths)
        for name, paths in (
            ("frames", manifest.frame_paths),
            ("depth", manifest.depth_paths),
            ("truth", manifest.truth_paths),
        )
        if paths
    }
    if len(set(lengths.values())) > 1:
        raise InvalidInputError(f"sequence '{manifest.sequence_id}' lists are not aligned: {lengths}")
    return manifest


def _sequence_name(source: str) -> str:
    base = source if os.path.isdir(source) else os.path.dirname(source)
    return os.path.basename(os.path.normpath(base)) or "sequence"


def _record_digests(manifest: SequenceManifest, role: str, paths: Sequence[str]) -> None:
    for path in paths:
        manifest.digests[f"{role}/{os.path.basename(path)}"] = file_digest(path)
