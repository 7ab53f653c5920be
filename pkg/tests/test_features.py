"""
Tests for the per-frame criteria: Hu moments, edge score and FAST keypoints.
"""

import numpy as np
import pytest
from PIL import Image
from scipy import ndimage

from endo_keyframe_tool.engine.errors import DegenerateInputError, InvalidInputError, InvalidParameterError
from endo_keyframe_tool.engine.features import (
    FAST_ARC,
    FAST_RING,
    HuVector,
    build_pyramid,
    central_moments,
    edge_score,
    fast_keypoints,
    hu_moments,
    moment_distance,
    orb_count,
    orb_keypoints,
)
from endo_keyframe_tool.engine.imgproc import Frame, frame_channel, gaussian_smooth, gradient_magnitude, sobel_gradients
from tests.synthetic import baseline_rgb, peak_rgb


def gaussian_blob(shape, center, sigma_r, sigma_c, weight=1.0):
    rows, cols = np.indices(shape, dtype=np.float64)
    return weight * np.exp(-((rows - center[0]) ** 2 / (2 * sigma_r ** 2) + (cols - center[1]) ** 2 / (2 * sigma_c ** 2)))


def asymmetric_blob(size=160):
    """Three unequal Gaussians, no mirror symmetry."""
    shape = (size, size)
    c = size / 2.0
    return (
        gaussian_blob(shape, (c, c), 12.0, 9.0)
        + gaussian_blob(shape, (c - 14.0, c + 18.0), 7.0, 8.0, 0.8)
        + gaussian_blob(shape, (c + 16.0, c + 6.0), 8.0, 6.0, 0.6)
    )


def brute_force_fast(plane, t):
    """Segment test per pixel, written out directly."""
    height, width = plane.shape
    corners = set()
    for r in range(3, height - 3):
        for c in range(3, width - 3):
            center = plane[r, c]
            ring = [plane[r + dy, c + dx] for dx, dy in FAST_RING]
            for flags in ([v > center + t for v in ring], [v < center - t for v in ring]):
                doubled = flags + flags
                run = best = 0
                for flag in doubled:
                    run = run + 1 if flag else 0
                    best = max(best, run)
                if min(best, 16) >= FAST_ARC:
                    corners.add((c, r))
                    break
    return corners


def test_central_moments_first_order_zero():
    blob = asymmetric_blob(64)
    mu = central_moments(blob)
    assert mu[1, 0] == 0.0 and mu[0, 1] == 0.0
    assert mu[0, 0] == pytest.approx(blob.sum())


def brute_force_central_moments(plane):
    """mu[p][q] about the centroid by an explicit double sum, x along columns."""
    height, width = plane.shape
    m00 = sum(plane[y, x] for y in range(height) for x in range(width))
    xc = sum(x * plane[y, x] for y in range(height) for x in range(width)) / m00
    yc = sum(y * plane[y, x] for y in range(height) for x in range(width)) / m00
    mu = np.zeros((4, 4))
    for p in range(4):
        for q in range(4 - p):
            mu[p, q] = sum((x - xc) ** p * (y - yc) ** q * plane[y, x] for y in range(height) for x in range(width))
    return mu


def textbook_hu(mu):
    m00 = mu[0, 0]

    def eta(i, j):
        return mu[i, j] / m00 ** (1.0 + (i + j) / 2.0)

    n20, n02, n11 = eta(2, 0), eta(0, 2), eta(1, 1)
    n30, n03, n21, n12 = eta(3, 0), eta(0, 3), eta(2, 1), eta(1, 2)
    return np.array([
        n20 + n02,
        (n20 - n02) ** 2 + 4 * n11 ** 2,
        (n30 - 3 * n12) ** 2 + (3 * n21 - n03) ** 2,
        (n30 + n12) ** 2 + (n21 + n03) ** 2,
        (n30 - 3 * n12) * (n30 + n12) * ((n30 + n12) ** 2 - 3 * (n21 + n03) ** 2)
        + (3 * n21 - n03) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2),
        (n20 - n02) * ((n30 + n12) ** 2 - (n21 + n03) ** 2) + 4 * n11 * (n30 + n12) * (n21 + n03),
        (3 * n21 - n03) * (n30 + n12) * ((n30 + n12) ** 2 - 3 * (n21 + n03) ** 2)
        - (n30 - 3 * n12) * (n21 + n03) * (3 * (n30 + n12) ** 2 - (n21 + n03) ** 2),
    ])


def test_central_moments_worked_examples():
    point = np.zeros((7, 7))
    point[3, 3] = 0.5
    mu = central_moments(point)
    assert mu[0, 0] == 0.5
    assert np.all(mu.ravel()[1:] == 0.0)

    pair = np.zeros((3, 4))
    pair[0, 0] = 0.25
    pair[0, 2] = 0.25
    mu = central_moments(pair)
    assert mu[2, 0] == pytest.approx(2 * 0.25)
    assert mu[0, 2] == 0.0 and mu[1, 1] == 0.0


def test_central_moments_match_double_sum():
    rng = np.random.default_rng(14)
    for _ in range(20):
        plane = rng.random((3, 3))
        expected = brute_force_central_moments(plane)
        got = central_moments(plane)
        assert got[0, 0] == pytest.approx(expected[0, 0], rel=1e-12)
        for p in range(4):
            for q in range(4 - p):
                if p + q >= 2:
                    assert got[p, q] == pytest.approx(expected[p, q], rel=1e-9, abs=1e-12)


def test_hu_matches_textbook_formulas():
    rng = np.random.default_rng(15)
    for _ in range(20):
        plane = rng.random((8, 8))
        expected = textbook_hu(brute_force_central_moments(plane))
        assert np.all(np.abs(hu_moments(plane).phi - expected) <= 1e-12)


def test_hu_of_single_pixel_is_zero():
    plane = np.zeros((9, 9))
    plane[4, 6] = 0.8
    assert hu_moments(plane).phi.tolist() == [0.0] * 7


def test_zero_mass_is_degenerate():
    with pytest.raises(DegenerateInputError):
        hu_moments(np.zeros((8, 8)))


def test_hu_translation_invariance():
    blob = asymmetric_blob(120)
    shifted = np.zeros((160, 160))
    shifted[17:137, 29:149] = blob
    a = hu_moments(blob).phi
    b = hu_moments(shifted).phi
    assert np.all(np.abs(a - b) <= 1e-12)


def test_hu_rotation_by_90_invariance():
    blob = asymmetric_blob(120)
    a = hu_moments(blob).phi
    b = hu_moments(np.rot90(blob)).phi
    assert np.all(np.abs(a - b) <= 1e-12)


def test_hu_rotation_by_30_within_two_percent():
    blob = asymmetric_blob(160)
    rotated = ndimage.rotate(blob, 30.0, order=1, reshape=False, mode="constant", cval=0.0)
    a = hu_moments(blob).phi
    b = hu_moments(rotated).phi
    assert np.all(np.abs(b - a) <= 0.02 * np.abs(a))


def test_moment_distance():
    a = HuVector(np.arange(7, dtype=np.float64))
    b = HuVector(np.arange(7, dtype=np.float64) + 0.5)
    assert moment_distance(a, b) == pytest.approx(7 * 0.25)
    assert moment_distance(a, a) == 0.0
    unit_x = HuVector(np.array([1.0, 0, 0, 0, 0, 0, 0]))
    unit_y = HuVector(np.array([0, 1.0, 0, 0, 0, 0, 0]))
    assert moment_distance(unit_x, unit_y) == 2.0
    assert moment_distance(unit_y, unit_x) == 2.0


def test_hu_vector_validation_and_signed_log():
    with pytest.raises(InvalidInputError):
        HuVector(np.zeros(6))
    with pytest.raises(InvalidInputError):
        HuVector(np.array([np.nan] * 7))
    logged = HuVector(np.array([100.0, -0.01, 0.0, 1.0, 10.0, -1000.0, 1e-3])).signed_log()
    assert logged.phi.tolist() == pytest.approx([2.0, 2.0, 0.0, 0.0, 1.0, -3.0, -3.0])


def test_edge_score():
    assert edge_score(np.full((10, 10), 0.5)) == 0.0
    flat = Frame(0, baseline_rgb()).rgb[..., 0]
    busy = Frame(0, peak_rgb()).rgb[..., 0]
    assert edge_score(busy) > edge_score(flat) > 0.0
    with pytest.raises(InvalidParameterError):
        edge_score(flat, sigma=-1.0)


def test_edge_score_ramp():
    ramp = np.tile(np.arange(32, dtype=np.float64), (32, 1))
    mag = gradient_magnitude(*sobel_gradients(gaussian_smooth(ramp, 1.0)))
    assert np.all(np.abs(mag[:, 4:-4] - 8.0) <= 1e-9)
    score = edge_score(ramp, 1.0)
    assert score == pytest.approx(mag.mean(), rel=1e-12)
    # Reflect padding flattens the ramp at the left and right borders
    assert 0.0 < score < 8.0


def test_edge_score_mirror_invariance_and_homogeneity():
    rng = np.random.default_rng(16)
    for _ in range(10):
        plane = rng.random((24, 30))
        score = edge_score(plane)
        assert abs(edge_score(plane[:, ::-1]) - score) <= 1e-9
        assert abs(edge_score(plane[::-1, :]) - score) <= 1e-9
        assert edge_score(2.0 * plane) == pytest.approx(2.0 * score, rel=1e-12)
        assert edge_score(0.25 * plane) == pytest.approx(0.25 * score, rel=1e-12)


def test_fast_matches_brute_force_oracle():
    rng = np.random.default_rng(20)
    for _ in range(50):
        plane = rng.random((64, 64))
        detected = {(int(kp.x), int(kp.y)) for kp in fast_keypoints(plane, 0.2, nms=False)}
        assert detected == brute_force_fast(plane, 0.2)


def test_fast_constant_plane_has_no_corners():
    assert fast_keypoints(np.full((20, 20), 0.3), 0.05) == []


def test_fast_bright_square_corners():
    plane = np.zeros((32, 32))
    plane[10:20, 10:20] = 1.0
    keypoints = fast_keypoints(plane, 0.2)
    found = {(int(kp.x), int(kp.y)) for kp in keypoints}
    for corner in ((10, 10), (19, 10), (10, 19), (19, 19)):
        assert corner in found
    assert all(kp.score > 0 for kp in keypoints)


def test_fast_input_checks():
    with pytest.raises(InvalidInputError):
        fast_keypoints(np.zeros((6, 10)), 0.1)
    with pytest.raises(InvalidParameterError):
        fast_keypoints(np.zeros((10, 10)), -0.1)


def test_pyramid_sizes():
    pyramid = build_pyramid(np.zeros((60, 100)), levels=8, scale_factor=1.2)
    assert pyramid[0].shape == (60, 100)
    assert pyramid[1].shape == (50, 83)
    assert sorted(pyramid) == list(range(8))
    small = build_pyramid(np.zeros((10, 10)), levels=8, scale_factor=1.2)
    assert sorted(small) == [0, 1, 2]
    with pytest.raises(InvalidParameterError):
        build_pyramid(np.zeros((10, 10)), levels=0, scale_factor=1.2)


def test_orb_keypoints_mapped_to_level_zero():
    frame = Frame(0, peak_rgb())
    keypoints = orb_keypoints(frame)
    assert keypoints
    assert all(0.0 <= kp.x < frame.width + 8 and 0.0 <= kp.y < frame.height + 8 for kp in keypoints)
    assert {kp.level for kp in keypoints} >= {0}
    assert orb_count(frame) == len(keypoints)
    assert orb_count(Frame(1, baseline_rgb())) == 0


def brute_force_fast_nms_count(plane, t):
    """Segment-test corners kept by 3x3 non-maximum suppression on the brute-force score."""
    height, width = plane.shape
    score = np.zeros_like(plane)
    for c, r in brute_force_fast(plane, t):
        center = plane[r, c]
        ring = [plane[r + dy, c + dx] for dx, dy in FAST_RING]
        brighter = 0
        darker = 0
        for v in ring:
            if v > center + t:
                brighter += abs(v - center) - t
            elif v < center - t:
                darker += abs(v - center) - t
        score[r, c] = max(brighter, darker)

    count = 0
    for r in range(height):
        for c in range(width):
            if score[r, c] <= 0.0:
                continue
            window = score[max(r - 1, 0):r + 2, max(c - 1, 0):c + 2]
            if score[r, c] >= window.max():
                count += 1
    return count


def test_fast_single_bright_pixel():
    plane = np.zeros((15, 15))
    plane[7, 9] = 1.0
    keypoints = fast_keypoints(plane, 0.2)
    assert [(kp.x, kp.y) for kp in keypoints] == [(9.0, 7.0)]
    assert keypoints[0].score == pytest.approx(16 * 0.8)


def test_orb_count_checkerboard_matches_oracle():
    cells = (np.indices((16, 16)) // 4).sum(axis=0) % 2
    rgb = np.repeat(cells[..., None].astype(np.float64), 3, axis=2)
    for frame in (Frame(0, rgb), Frame(1, peak_rgb())):
        plane = frame_channel(frame, "luminance")
        expected = brute_force_fast_nms_count(plane, 0.2)
        assert orb_count(frame, levels=1, t=0.2, channel="luminance") == expected
        assert len(fast_keypoints(plane, 0.2)) == expected


def test_orb_count_invariant_under_quarter_turn():
    rng = np.random.default_rng(17)
    for _ in range(5):
        rgb = rng.random((40, 40, 3))
        expected = orb_count(Frame(0, rgb), levels=1, t=0.1)
        for turns in (1, 2, 3):
            rotated = np.ascontiguousarray(np.rot90(rgb, turns))
            assert orb_count(Frame(1, rotated), levels=1, t=0.1) == expected


def test_pyramid_levels_are_chained():
    rng = np.random.default_rng(18)
    pyramid = build_pyramid(rng.random((60, 100)), levels=4, scale_factor=1.2)
    for level in (1, 2, 3):
        above = Image.fromarray(pyramid[level - 1].astype(np.float32))
        height, width = pyramid[level].shape
        expected = np.asarray(above.resize((width, height), resample=Image.Resampling.BOX), dtype=np.float64)
        assert np.array_equal(pyramid[level], expected)
    assert [pyramid[level].shape for level in range(4)] == [(60, 100), (50, 83), (42, 69), (35, 58)]
