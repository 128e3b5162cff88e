"""Distances, joint angles, convex hull volume and discrete trajectory curvature."""

from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError

HULL_TOLERANCE = 1e-9
ANGLE_TOLERANCE = 1e-9
SPEED_GUARD = 1e-6


class DegenerateAngleError(ValueError):
    """One of the two limb vectors is too short for the angle to be defined."""


class InsufficientPointsError(ValueError):
    pass


def distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def joint_angle(a, vertex, c, tol: float = ANGLE_TOLERANCE) -> float:
    """Angle at ``vertex`` between the segments to ``a`` and ``c``, in radians."""
    u = np.asarray(a, dtype=float) - np.asarray(vertex, dtype=float)
    v = np.asarray(c, dtype=float) - np.asarray(vertex, dtype=float)
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu < tol or nv < tol:
        raise DegenerateAngleError("angle undefined for a zero-length limb")
    cos = np.dot(u, v) / (nu * nv)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def joint_angles(a: np.ndarray, vertex: np.ndarray, c: np.ndarray,
                 tol: float = ANGLE_TOLERANCE) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`joint_angle` over frames.

    Returns the angles and a boolean mask of degenerate frames; degenerate
    frames get angle 0.
    """
    u = np.asarray(a, dtype=float) - vertex
    v = np.asarray(c, dtype=float) - vertex
    nu = np.linalg.norm(u, axis=-1)
    nv = np.linalg.norm(v, axis=-1)
    bad = (nu < tol) | (nv < tol)
    denom = np.where(bad, 1.0, nu * nv)
    cos = np.clip(np.einsum("...i,...i->...", u, v) / denom, -1.0, 1.0)
    return np.where(bad, 0.0, np.arccos(cos)), bad


def _is_degenerate(points: np.ndarray, tol: float) -> bool:
    centered = points - points.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    return s.size < 3 or s[2] <= tol


def convex_hull_volume(points, tol: float = HULL_TOLERANCE) -> float:
    """Volume of the convex hull of a 3D point cloud (m^3).

    Coplanar or collinear clouds have volume 0.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) array, got shape {pts.shape}")
    if pts.shape[0] < 4:
        raise InsufficientPointsError(f"need at least 4 points, got {pts.shape[0]}")
    if not np.isfinite(pts).all():
        raise ValueError("point cloud contains non-finite coordinates")
    if _is_degenerate(pts, tol):
        return 0.0
    try:
        hull = ConvexHull(pts)
    except QhullError:
        return 0.0
    # signed tetrahedra from one hull vertex to every oriented facet
    origin = pts[hull.vertices[0]]
    tri = pts[hull.simplices] - origin
    p, q, r = tri[:, 0], tri[:, 1], tri[:, 2]
    signed = np.einsum("ij,ij->i", p, np.cross(q, r))
    # align each facet's orientation with its outward normal
    facing = np.einsum("ij,ij->i", np.cross(q - p, r - p), hull.equations[:, :3])
    vol = np.sum(np.where(facing < 0, -signed, signed))
    return float(abs(vol) / 6.0)


def hull_volume_series(frames: np.ndarray, tol: float = HULL_TOLERANCE) -> np.ndarray:
    return np.array([convex_hull_volume(f, tol) for f in frames])


def finite_difference(samples: np.ndarray, dt: float) -> np.ndarray:
    """First derivative along axis 0: central inside, one-sided at the ends."""
    x = np.asarray(samples, dtype=float)
    out = np.empty_like(x)
    out[1:-1] = (x[2:] - x[:-2]) / (2.0 * dt)
    out[0] = (x[1] - x[0]) / dt
    out[-1] = (x[-1] - x[-2]) / dt
    return out


def curvature(samples, dt: float, speed_guard: float = SPEED_GUARD) -> np.ndarray:
    """Discrete curvature |v x a| / |v|^3 at every interior sample (1/m)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 2 or x.shape[1] != 3:
        raise ValueError(f"expected an (n, 3) trajectory, got shape {x.shape}")
    if x.shape[0] < 3:
        raise ValueError("curvature needs at least 3 samples")
    if not dt > 0:
        raise ValueError("dt must be positive")
    v = (x[2:] - x[:-2]) / (2.0 * dt)
    a = (x[2:] - 2.0 * x[1:-1] + x[:-2]) / (dt * dt)
    speed = np.linalg.norm(v, axis=1)
    cross = np.linalg.norm(np.cross(v, a), axis=1)
    slow = speed < speed_guard
    kappa = cross / np.where(slow, 1.0, speed) ** 3
    return np.where(slow, 0.0, kappa)
