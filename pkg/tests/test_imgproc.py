"""
Tests for the raster primitives.
"""

import math
from collections import deque

import numpy as np
import pytest

from endo_keyframe_tool.engine.errors import InvalidInputError, InvalidParameterError
from endo_keyframe_tool.engine.imgproc import (
    Frame,
    canny,
    component_sizes,
    connected_components,
    disk_structure,
    fill_holes,
    gaussian_kernel,
    gaussian_smooth,
    gradient_magnitude,
    morph_close,
    normalize_to_u8,
    rgb_to_coc,
    sobel_gradients,
    to_grayscale,
)
from tests.synthetic import disk, hemisphere, radii, ring


def test_frame_rejects_bad_rasters():
    with pytest.raises(InvalidInputError):
        Frame(index=0, rgb=np.zeros((2, 5, 3)))
    with pytest.raises(InvalidInputError):
        Frame(index=0, rgb=np.zeros((5, 5)))
    with pytest.raises(InvalidInputError):
        Frame(index=0, rgb=np.full((5, 5, 3), 1.5))
    with pytest.raises(InvalidInputError):
        Frame(index=-1, rgb=np.zeros((5, 5, 3)))


def test_grayscale_weights():
    rgb = np.zeros((3, 3, 3))
    rgb[..., 0] = 1.0
    assert np.allclose(to_grayscale(Frame(0, rgb)), 0.299)
    assert np.allclose(to_grayscale(Frame(0, np.ones((3, 3, 3)))), 1.0)


def test_coc_default_basis():
    rgb = np.zeros((4, 4, 3))
    rgb[..., 0] = 0.6
    rgb[..., 1] = 0.2
    rgb[..., 2] = 0.1
    coc = rgb_to_coc(Frame(0, rgb))
    assert np.allclose(coc.o1, (0.6 - 0.2) / math.sqrt(2.0))
    assert np.allclose(coc.o2, (0.6 + 0.2 - 0.2) / math.sqrt(6.0))
    assert np.allclose(coc.o3, 0.9 / math.sqrt(3.0))
    assert coc.o3.shape == (4, 4)


def test_coc_rejects_bad_matrix():
    with pytest.raises(InvalidParameterError):
        rgb_to_coc(Frame(0, np.zeros((3, 3, 3))), matrix=[[1.0, 0.0], [0.0, 1.0]])


def test_gaussian_kernel_shape_and_mass():
    kernel = gaussian_kernel(1.0)
    assert kernel.shape == (7,)
    assert kernel.sum() == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(kernel, kernel[::-1])
    with pytest.raises(InvalidParameterError):
        gaussian_kernel(0.0)


def test_smoothing_preserves_constant_and_mean():
    assert np.allclose(gaussian_smooth(np.full((9, 11), 0.7), 1.5), 0.7)
    rng = np.random.default_rng(3)
    plane = rng.random((20, 20))
    # Half-sample symmetric padding keeps the mean for a normalized kernel
    for sigma in (0.5, 1.0, 2.0):
        assert abs(gaussian_smooth(plane, sigma).mean() - plane.mean()) <= 1e-9


def dense_smooth(plane, sigma):
    """Non-separable 2-D correlation with half-sample symmetric padding."""
    kernel = np.outer(gaussian_kernel(sigma), gaussian_kernel(sigma))
    radius = kernel.shape[0] // 2
    padded = np.pad(plane, radius, mode="symmetric")
    out = np.zeros_like(plane)
    for r in range(plane.shape[0]):
        for c in range(plane.shape[1]):
            out[r, c] = np.sum(padded[r:r + kernel.shape[0], c:c + kernel.shape[1]] * kernel)
    return out


def test_smoothing_matches_dense_convolution():
    rng = np.random.default_rng(8)
    for sigma in (0.7, 1.0, 1.6):
        plane = rng.random((17, 23))
        assert np.max(np.abs(gaussian_smooth(plane, sigma) - dense_smooth(plane, sigma))) <= 1e-9


def test_smoothing_centered_impulse_gives_kernel():
    plane = np.zeros((15, 15))
    plane[7, 7] = 1.0
    smoothed = gaussian_smooth(plane, 1.0)
    kernel = gaussian_kernel(1.0)
    assert np.allclose(smoothed[4:11, 4:11], np.outer(kernel, kernel), rtol=0.0, atol=1e-15)
    assert smoothed.sum() == pytest.approx(1.0, abs=1e-12)
    outside = np.ones_like(smoothed, dtype=bool)
    outside[4:11, 4:11] = False
    assert np.all(smoothed[outside] == 0.0)


def test_sobel_unit_ramp_is_eight():
    ramp = np.tile(np.arange(10, dtype=np.float64), (8, 1))
    sx, sy = sobel_gradients(ramp)
    mag = gradient_magnitude(sx, sy)
    assert np.all(mag[1:-1, 1:-1] == 8.0)
    assert np.all(sy[1:-1, 1:-1] == 0.0)


def test_sobel_needs_three_by_three():
    with pytest.raises(InvalidInputError):
        sobel_gradients(np.zeros((2, 5)))


def test_normalize_to_u8():
    out = normalize_to_u8(np.array([[2.0, 4.0], [3.0, 2.0]]))
    assert out.min() == 0.0 and out.max() == 255.0
    assert out[1, 0] == pytest.approx(127.5)
    assert np.all(normalize_to_u8(np.full((3, 3), 5.0)) == 0.0)


def test_canny_constant_plane_is_empty():
    assert not canny(np.full((16, 16), 0.4)).any()


def test_canny_step_gives_single_column():
    plane = np.zeros((24, 32))
    plane[:, 16:] = 1.0
    edges = canny(plane)
    columns = np.nonzero(edges.any(axis=0))[0]
    assert columns.tolist() == [15]
    assert edges[:, 15].all()


def test_canny_rejects_inverted_thresholds():
    with pytest.raises(InvalidParameterError):
        canny(np.eye(8), low=5.0, high=1.0)


def test_canny_disk_gives_one_closed_ring():
    plane = disk((48, 48), (24.0, 24.0), 12.0).astype(np.float64)
    edges = canny(plane)
    assert connected_components(edges, 8).max() == 1
    # Closed: the complement splits into the outside and the enclosed interior
    assert connected_components(~edges, 4).max() == 2


def test_canny_edges_clear_the_low_threshold():
    rng = np.random.default_rng(9)
    for _ in range(10):
        plane = gaussian_smooth(rng.random((32, 32)), 2.0)
        mag = gradient_magnitude(*sobel_gradients(gaussian_smooth(plane, 1.0)))
        low, high = np.quantile(mag, [0.5, 0.8])
        edges = canny(plane, low=low, high=high)
        assert edges.any()
        assert np.all(mag[edges] >= low)


def test_canny_hemisphere_ring_near_rim():
    shape = (96, 96)
    center = (48.0, 48.0)
    radius = 24.0
    edges = canny(normalize_to_u8(hemisphere(shape, center, radius).filled()))
    assert edges.sum() > 2 * math.pi * radius * 0.5
    assert np.all(np.abs(radii(shape, center)[edges] - radius) <= 2.5)


def test_connected_components_raster_order():
    mask = np.zeros((6, 8), dtype=bool)
    mask[4, 1] = True          # second in raster order
    mask[0, 6] = True          # first
    mask[3:5, 5:7] = True      # third (first pixel at row 3)
    labels = connected_components(mask)
    assert labels[0, 6] == 1
    assert labels[3, 5] == 2
    assert labels[4, 1] == 3
    assert labels.dtype == np.int32
    assert component_sizes(labels).tolist() == [mask.size - 6, 1, 4, 1]


def flood_fill_labels(mask):
    """Breadth-first labeling in raster order of first encounter, 8-connected."""
    labels = np.zeros(mask.shape, dtype=np.int32)
    height, width = mask.shape
    current = 0
    for r in range(height):
        for c in range(width):
            if not mask[r, c] or labels[r, c]:
                continue
            current += 1
            labels[r, c] = current
            queue = deque([(r, c)])
            while queue:
                y, x = queue.popleft()
                for dy in (-1, 0, 1):
                    for dx in (-1, 0, 1):
                        ny, nx = y + dy, x + dx
                        if 0 <= ny < height and 0 <= nx < width and mask[ny, nx] and not labels[ny, nx]:
                            labels[ny, nx] = current
                            queue.append((ny, nx))
    return labels


def test_connected_components_match_flood_fill():
    rng = np.random.default_rng(12)
    for density in (0.2, 0.4, 0.55):
        for _ in range(20):
            mask = rng.random((24, 31)) < density
            labels = connected_components(mask, 8)
            assert np.array_equal(labels, flood_fill_labels(mask))
            assert component_sizes(labels)[1:].sum() == mask.sum()


def test_connectivity_choice_matters_for_diagonals():
    mask = np.eye(4, dtype=bool)
    assert connected_components(mask, 8).max() == 1
    assert connected_components(mask, 4).max() == 4
    with pytest.raises(InvalidParameterError):
        connected_components(mask, 6)


def test_empty_mask_labels():
    labels = connected_components(np.zeros((4, 4), dtype=bool))
    assert not labels.any()


def test_disk_structure():
    assert disk_structure(1).all()
    assert disk_structure(1).shape == (3, 3)
    d2 = disk_structure(2)
    assert d2.shape == (5, 5)
    assert not d2[0, 0] and d2[0, 2] and d2[2, 2]


def test_closing_bridges_one_pixel_gap():
    mask = np.zeros((7, 11), dtype=bool)
    mask[3, 1:5] = True
    mask[3, 6:10] = True
    closed = morph_close(mask, 1)
    assert closed[3, 5]
    assert np.all(closed[mask])
    assert connected_components(closed).max() == 1


def test_closing_is_extensive_at_border():
    mask = np.zeros((5, 5), dtype=bool)
    mask[0, :] = True
    assert np.all(morph_close(mask, 2)[0, :])


def test_fill_holes_ring_to_disk():
    shape = (30, 30)
    solid = disk(shape, (15.0, 15.0), 9.0)
    filled = fill_holes(ring(shape, (15.0, 15.0), 9.0))
    assert np.array_equal(filled, solid)


def test_closing_keeps_solid_rectangle():
    mask = np.zeros((20, 20), dtype=bool)
    mask[5:15, 4:16] = True
    for radius in (1, 2, 3):
        assert np.array_equal(morph_close(mask, radius), mask)
    assert not morph_close(np.zeros((8, 8), dtype=bool), 2).any()


def test_fill_holes_leaves_open_shape():
    shape = np.zeros((12, 12), dtype=bool)
    shape[2, 2:10] = True
    shape[9, 2:10] = True
    shape[2:10, 2] = True
    assert np.array_equal(fill_holes(shape), shape)

    closed = shape.copy()
    closed[2:10, 9] = True
    filled = fill_holes(closed)
    assert filled[3:9, 3:9].all()
    assert filled.sum() == 64


def test_fill_holes_is_idempotent():
    rng = np.random.default_rng(13)
    for _ in range(30):
        mask = rng.random((20, 20)) < 0.45
        once = fill_holes(mask)
        assert np.array_equal(fill_holes(once), once)
        assert np.all(once[mask])
        # Nothing left enclosed: every background pixel reaches the border
        background = connected_components(~once, 4)
        border = np.unique(np.concatenate([background[0], background[-1], background[:, 0], background[:, -1]]))
        assert set(np.unique(background[background > 0])) <= set(border)
