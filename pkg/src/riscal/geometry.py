"""Coordinates, rotations, angles and propagation delays.

Global frame: BS array centre at the origin, BS boresight along +x. Angles are
(azimuth, elevation) with ``t = [cos az cos el, sin az cos el, sin el]``.
Rotation convention: ``R = Rz(o3) @ Ry(o2) @ Rx(o1)``, so the yaw ``o3`` is
the rotation about the global z-axis.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

SPEED_OF_LIGHT = 299792458.0  # m/s


class DegenerateGeometryError(ValueError):
    """Raised when two points coincide and a direction is undefined."""


class AnglePair(NamedTuple):
    azimuth: float
    elevation: float
    gimbal: bool = False


class IntermediateDirection(NamedTuple):
    """Sum of the RIS-local directions to the BS and to the user.

    Only ``v2`` and ``v3`` are observable through a planar array whose element
    positions have a zero first coordinate; ``v1`` is kept for diagnostics.
    """

    v1: float
    v2: float
    v3: float


def direction_and_distance(src, dst) -> tuple[np.ndarray, float]:
    """Unit vector from ``src`` to ``dst`` and the distance between them."""
    delta = np.asarray(dst, dtype=float) - np.asarray(src, dtype=float)
    dist = float(np.linalg.norm(delta))
    if dist == 0.0 or not np.isfinite(dist):
        raise DegenerateGeometryError(f"coincident or non-finite points: {src}, {dst}")
    return delta / dist, dist


def rot_x(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def euler_to_rotation(orientation) -> np.ndarray:
    """Rotation matrix for Euler angles ``[o1, o2, o3]`` (pitch, roll, yaw)."""
    o1, o2, o3 = (float(v) for v in orientation)
    return rot_z(o3) @ rot_y(o2) @ rot_x(o1)


def rotation_yaw_derivative(orientation) -> np.ndarray:
    """Elementwise derivative of :func:`euler_to_rotation` with respect to yaw."""
    o1, o2, o3 = (float(v) for v in orientation)
    c, s = np.cos(o3), np.sin(o3)
    drz = np.array([[-s, -c, 0.0], [c, -s, 0.0], [0.0, 0.0, 0.0]])
    return drz @ rot_y(o2) @ rot_x(o1)


def global_to_local_direction(rotation: np.ndarray, t) -> np.ndarray:
    return rotation.T @ np.asarray(t, dtype=float)


def local_direction_from_angles(angles) -> np.ndarray:
    az, el = float(angles[0]), float(angles[1])
    return np.array([np.cos(az) * np.cos(el), np.sin(az) * np.cos(el), np.sin(el)])


def angles_from_local_direction(t, atol: float = 1e-15) -> AnglePair:
    """Azimuth/elevation of a unit vector.

    At the poles the azimuth is undefined; it is returned as 0 with the
    ``gimbal`` flag set.
    """
    t = np.asarray(t, dtype=float)
    tz = float(np.clip(t[2], -1.0, 1.0))
    rho = float(np.hypot(t[0], t[1]))
    el = float(np.arctan2(tz, rho))
    if rho <= atol:
        return AnglePair(0.0, el, True)
    return AnglePair(float(np.arctan2(t[1], t[0])), el, False)


def wrap_angle(a):
    """Reduce angles to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return w if np.ndim(w) else float(w)


def path_delays(p_b, p_r, p_u, clock_offset: float) -> tuple[float, float]:
    """Direct (BS-user) and RIS-relayed path delays, clock offset included."""
    _, d_bu = direction_and_distance(p_b, p_u)
    _, d_br = direction_and_distance(p_b, p_r)
    _, d_ru = direction_and_distance(p_r, p_u)
    return d_bu / SPEED_OF_LIGHT + clock_offset, (d_br + d_ru) / SPEED_OF_LIGHT + clock_offset


def intermediate_angles(p_b, p_r, p_u, rotation: np.ndarray) -> IntermediateDirection:
    """RIS-local direction sum ``R^T (t_RB + t_RU)``.

    Componentwise this is ``v2 = sin az_RU cos el_RU + sin az_RB cos el_RB`` and
    ``v3 = sin el_RU + sin el_RB``.
    """
    t_rb, _ = direction_and_distance(p_r, p_b)
    t_ru, _ = direction_and_distance(p_r, p_u)
    v = rotation.T @ (t_rb + t_ru)
    return IntermediateDirection(float(v[0]), float(v[1]), float(v[2]))


def _azel_gradient(v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradients of azimuth and elevation of the vector ``v`` w.r.t. ``v``."""
    x, y, z = v
    rho2 = x * x + y * y
    d2 = rho2 + z * z
    rho = np.sqrt(rho2)
    if rho2 == 0.0:
        raise DegenerateGeometryError("direction along the array normal's pole; azimuth undefined")
    d_az = np.array([-y, x, 0.0]) / rho2
    d_el = np.array([-x * z, -y * z, rho2]) / (d2 * rho)
    return d_az, d_el


def unit_vector_jacobian(t: np.ndarray, dist: float) -> np.ndarray:
    """d(v/|v|)/dv for ``t = v/|v|``."""
    return (np.eye(3) - np.outer(t, t)) / dist
