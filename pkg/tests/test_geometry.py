import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import Delaunay

from _builders import random_rotation
from lmaemotion.geometry import (DegenerateAngleError, InsufficientPointsError, convex_hull_volume,
                                 curvature, distance, joint_angle, joint_angles)

CUBE = np.array([[x, y, z] for x in (0, 1) for y in (0, 1) for z in (0, 1)], dtype=float)
TETRA = np.array([[1, 1, 1], [1, -1, -1], [-1, 1, -1], [-1, -1, 1]], dtype=float) / (2 * math.sqrt(2))


def circle(radius, n, turns=1.0):
    t = np.arange(int(n * turns)) * 2 * np.pi / n
    return np.stack([radius * np.cos(t), radius * np.sin(t), np.zeros_like(t)], axis=1)


@pytest.mark.parametrize("a, b, expected", [
    ((0, 0, 0), (0, 0, 0), 0.0),
    ((1, 0, 0), (0, 0, 0), 1.0),
    ((1, 2, 2), (0, 0, 0), 3.0),
])
def test_distance(a, b, expected):
    assert distance(a, b) == expected


def test_joint_angle_right_and_straight():
    assert joint_angle((1, 0, 0), (0, 0, 0), (0, 1, 0)) == pytest.approx(np.pi / 2, abs=1e-15)
    assert joint_angle((1, 0, 0), (0, 0, 0), (2, 0, 0)) == 0.0


def test_joint_angle_clamps_near_pi():
    assert abs(joint_angle((1, 0, 0), (0, 0, 0), (-1, 1e-12, 0)) - np.pi) < 1e-6


def test_joint_angle_degenerate():
    with pytest.raises(DegenerateAngleError):
        joint_angle((0, 0, 0), (0, 0, 0), (1, 0, 0))


def test_joint_angles_vectorised_matches_scalar():
    rng = np.random.default_rng(3)
    a, v, c = rng.normal(size=(3, 50, 3))
    v[7] = a[7]
    angles, bad = joint_angles(a, v, c)
    assert bad.tolist() == [i == 7 for i in range(50)]
    assert angles[7] == 0.0
    for i in range(50):
        if i != 7:
            assert angles[i] == pytest.approx(joint_angle(a[i], v[i], c[i]), abs=1e-12)


def test_unit_cube_volume_exact():
    assert convex_hull_volume(CUBE) == 1.0


def test_regular_tetrahedron_volume():
    assert np.allclose(np.linalg.norm(TETRA[0] - TETRA[1]), 1.0)
    assert abs(convex_hull_volume(TETRA) - 1 / (6 * math.sqrt(2))) < 1e-12


def test_ball_volume_matches_monte_carlo_containment():
    rng = np.random.default_rng(12)
    d = rng.normal(size=(200, 3))
    pts = d / np.linalg.norm(d, axis=1, keepdims=True) * rng.uniform(size=(200, 1)) ** (1 / 3)
    lo, hi = pts.min(axis=0), pts.max(axis=0)
    probe = rng.uniform(lo, hi, size=(400_000, 3))
    inside = Delaunay(pts).find_simplex(probe) >= 0
    estimate = inside.mean() * np.prod(hi - lo)
    assert abs(convex_hull_volume(pts) - estimate) / estimate < 0.01


def test_too_few_points():
    with pytest.raises(InsufficientPointsError):
        convex_hull_volume(CUBE[:3])


@pytest.mark.parametrize("pts", [
    np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.5, 0.2, 0]], dtype=float),
    np.array([[t, 2 * t, -t] for t in range(6)], dtype=float),
    np.zeros((5, 3)),
])
def test_flat_clouds_have_zero_volume(pts):
    assert convex_hull_volume(pts) == 0.0


clouds = st.integers(0, 2**32 - 1).map(lambda s: np.random.default_rng(s).normal(size=(12, 3)))


@settings(max_examples=50, deadline=None)
@given(clouds, st.integers(0, 2**32 - 1))
def test_hull_rigid_invariance(pts, seed):
    rng = np.random.default_rng(seed)
    moved = pts @ random_rotation(rng).T + rng.uniform(-50, 50, size=3)
    v0 = convex_hull_volume(pts)
    assert abs(convex_hull_volume(moved) - v0) <= 1e-9 * v0


@settings(max_examples=50, deadline=None)
@given(clouds, st.floats(0.1, 10.0))
def test_hull_cubic_scaling(pts, s):
    assert convex_hull_volume(s * pts) == pytest.approx(s**3 * convex_hull_volume(pts), rel=1e-9)


@settings(max_examples=50, deadline=None)
@given(clouds, st.integers(0, 2**32 - 1))
def test_hull_monotone_under_added_points(pts, seed):
    extra = np.random.default_rng(seed).normal(size=(3, 3)) * 2
    assert convex_hull_volume(np.vstack([pts, extra])) >= convex_hull_volume(pts) * (1 - 1e-12)


def test_circle_curvature():
    kappa = curvature(circle(2.0, 100), dt=0.01)
    assert kappa.shape == (98,)
    assert np.max(np.abs(kappa - 0.5)) < 1e-3


def test_line_and_stationary_curvature():
    line = np.outer(np.arange(20), [0.3, -0.1, 0.2])
    assert np.max(curvature(line, 0.04)) < 1e-12
    assert np.all(curvature(np.ones((10, 3)), 0.04) == 0.0)


def test_curvature_needs_three_samples():
    with pytest.raises(ValueError):
        curvature(np.zeros((2, 3)), 0.1)


def smooth_curves(seed):
    rng = np.random.default_rng(seed)
    t = np.linspace(0, 1, 40)[:, None]
    return rng.normal(size=3) * t + rng.normal(size=3) * t**2 + 0.3 * rng.normal(size=3) * np.sin(3 * t)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 2**32 - 1))
def test_curvature_rigid_invariance(curve_seed, seed):
    x = smooth_curves(curve_seed)
    rng = np.random.default_rng(seed)
    moved = x @ random_rotation(rng).T + rng.uniform(-5, 5, size=3)
    np.testing.assert_allclose(curvature(moved, 0.02), curvature(x, 0.02), rtol=1e-6, atol=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.2, 5.0))
def test_curvature_scales_inversely(curve_seed, s):
    x = smooth_curves(curve_seed)
    np.testing.assert_allclose(curvature(s * x, 0.02), curvature(x, 0.02) / s, rtol=1e-9, atol=1e-12)
