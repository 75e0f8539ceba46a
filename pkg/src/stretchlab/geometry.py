"""Small 3D vector/matrix kernel and cylindrical coordinate helpers.

Everything here is vectorised over leading axes: a ``Vec3`` is any array whose
last axis has length 3, a ``Mat3`` any array ending in ``(3, 3)``.

Jacobians are stored row-major, ``J[..., i, j] = d(out_i) / d(in_j)``; every
other module relies on this layout.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .errors import AxisPointError

TWO_PI = 2.0 * np.pi


class CylPoint(NamedTuple):
    """Point in cylindrical coordinates. ``theta`` is kept unreduced."""

    r: np.ndarray | float
    theta: np.ndarray | float
    z: np.ndarray | float


class CylVec(NamedTuple):
    """Vector components along (e_r, e_theta, e_z) at an implicit base point."""

    r_comp: np.ndarray | float
    theta_comp: np.ndarray | float
    z_comp: np.ndarray | float

    def norm(self):
        return np.sqrt(self.r_comp**2 + self.theta_comp**2 + self.z_comp**2)


def as_vec3(p) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape[-1:] != (3,):
        raise ValueError(f"expected trailing axis of length 3, got shape {p.shape}")
    return p


def radius(p) -> np.ndarray:
    p = as_vec3(p)
    return np.hypot(p[..., 0], p[..., 1])


def to_cylindrical(p) -> CylPoint:
    p = as_vec3(p)
    return CylPoint(np.hypot(p[..., 0], p[..., 1]), np.arctan2(p[..., 1], p[..., 0]), p[..., 2].copy())


def from_cylindrical(q: CylPoint) -> np.ndarray:
    r, th, z = np.broadcast_arrays(*(np.asarray(c, dtype=float) for c in q))
    return np.stack([r * np.cos(th), r * np.sin(th), z], axis=-1)


def _unit_basis(p):
    p = as_vec3(p)
    r = np.hypot(p[..., 0], p[..., 1])
    if np.any(r == 0.0):
        raise AxisPointError("cylindrical basis is undefined on the axis r = 0")
    return p[..., 0] / r, p[..., 1] / r


def vector_to_cylindrical(p, v) -> CylVec:
    """Components of the Cartesian vector ``v`` in the cylindrical frame at ``p``."""
    c, s = _unit_basis(p)
    v = as_vec3(v)
    return CylVec(c * v[..., 0] + s * v[..., 1], -s * v[..., 0] + c * v[..., 1], v[..., 2] * np.ones_like(c))


def vector_from_cylindrical(p, w: CylVec) -> np.ndarray:
    c, s = _unit_basis(p)
    br, bt, bz = (np.asarray(x, dtype=float) for x in w)
    return np.stack(np.broadcast_arrays(c * br - s * bt, s * br + c * bt, bz * np.ones_like(c)), axis=-1)


def cylindrical_basis(theta):
    """(e_r, e_theta) as Cartesian arrays for the given angle(s)."""
    theta = np.asarray(theta, dtype=float)
    c, s = np.cos(theta), np.sin(theta)
    zero = np.zeros_like(c)
    return np.stack([c, s, zero], -1), np.stack([-s, c, zero], -1)


def angle_diff(a, b):
    """Signed difference a - b reduced to [-pi, pi)."""
    return (np.asarray(a) - np.asarray(b) + np.pi) % TWO_PI - np.pi


def det3(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return (
        a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
        - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
        + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0])
    )


def adjugate(a) -> np.ndarray:
    """Transpose of the cofactor matrix, so that ``a @ adjugate(a) == det3(a) * I``.

    Built from the nine 2x2 minors directly; no division, so singular input is fine.
    """
    a = np.asarray(a, dtype=float)
    m = a
    out = np.empty_like(m)
    out[..., 0, 0] = m[..., 1, 1] * m[..., 2, 2] - m[..., 1, 2] * m[..., 2, 1]
    out[..., 0, 1] = m[..., 0, 2] * m[..., 2, 1] - m[..., 0, 1] * m[..., 2, 2]
    out[..., 0, 2] = m[..., 0, 1] * m[..., 1, 2] - m[..., 0, 2] * m[..., 1, 1]
    out[..., 1, 0] = m[..., 1, 2] * m[..., 2, 0] - m[..., 1, 0] * m[..., 2, 2]
    out[..., 1, 1] = m[..., 0, 0] * m[..., 2, 2] - m[..., 0, 2] * m[..., 2, 0]
    out[..., 1, 2] = m[..., 0, 2] * m[..., 1, 0] - m[..., 0, 0] * m[..., 1, 2]
    out[..., 2, 0] = m[..., 1, 0] * m[..., 2, 1] - m[..., 1, 1] * m[..., 2, 0]
    out[..., 2, 1] = m[..., 0, 1] * m[..., 2, 0] - m[..., 0, 0] * m[..., 2, 1]
    out[..., 2, 2] = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
    return out


def matvec(a, v) -> np.ndarray:
    return np.einsum("...ij,...j->...i", a, v)


def matmul(a, b) -> np.ndarray:
    return np.einsum("...ij,...jk->...ik", a, b)


def rotation_z(angle) -> np.ndarray:
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    out = np.zeros(angle.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = -s
    out[..., 1, 0] = s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def identity_like(shape) -> np.ndarray:
    return np.broadcast_to(np.eye(3), tuple(shape) + (3, 3)).copy()
