"""Closed-form deterministic solution inside the unit cylinder.

With v_theta = r**alpha the angular speed is r**(alpha-1); B_r and B_z are
transported along circles and B_theta picks up a term growing linearly in t:

    B_theta(t) = B_theta0(shifted) - (1 - alpha) r**(alpha-1) t B_r0(shifted)

where "shifted" means evaluation at angle theta - r**(alpha-1) t.
"""
from __future__ import annotations

import numpy as np

from .errors import OutOfDomainError
from .fields import InitialField
from .geometry import (
    CylPoint,
    CylVec,
    from_cylindrical,
    to_cylindrical,
    vector_from_cylindrical,
    vector_to_cylindrical,
)


def cylindrical_components(B0):
    """Return ``f(r, theta, z) -> CylVec`` for an InitialField or pass a callable through."""
    if isinstance(B0, InitialField):
        def f(r, theta, z):
            p = from_cylindrical(CylPoint(r, theta, z))
            return vector_to_cylindrical(p, B0.evaluate(p))
        return f
    return B0


def _check_domain(q: CylPoint, t):
    r = np.asarray(q.r, dtype=float)
    if np.any((r <= 0.0) | (r >= 1.0)):
        raise OutOfDomainError("closed-form solution needs 0 < r < 1")
    if np.any(np.asarray(t) < 0.0):
        raise OutOfDomainError("closed-form solution needs t >= 0")


def _exact(alpha, comps, t, r, theta, z):
    rate = np.power(r, alpha - 1.0)
    shifted = theta - rate * t
    b = comps(r, shifted, z)
    bt = b.theta_comp - (1.0 - alpha) * rate * t * b.r_comp
    return CylVec(*np.broadcast_arrays(b.r_comp, bt, b.z_comp))


def exact_B(alpha, B0, t, q: CylPoint) -> CylVec:
    """Cylindrical components of B(t) at ``q`` for the pure r**alpha rotation."""
    _check_domain(q, t)
    r, theta, z = (np.asarray(c, dtype=float) for c in q)
    return _exact(alpha, cylindrical_components(B0), t, r, theta, z)


def exact_B_cartesian(alpha, B0, t, p) -> np.ndarray:
    """Same as :func:`exact_B` but taking and returning Cartesian arrays."""
    p = np.asarray(p, dtype=float)
    return vector_from_cylindrical(p, exact_B(alpha, B0, t, to_cylindrical(p)))


def exact_flow_cartesian(alpha, t, p) -> np.ndarray:
    """Position after time t under the r**alpha rotation (valid while r < 1)."""
    p = np.asarray(p, dtype=float)
    r = np.hypot(p[..., 0], p[..., 1])
    ang = np.power(r, alpha - 1.0) * t
    c, s = np.cos(ang), np.sin(ang)
    return np.stack([c * p[..., 0] - s * p[..., 1], s * p[..., 0] + c * p[..., 1], p[..., 2]], -1)


def blowup_envelope(alpha, t, r, br0_inf) -> np.ndarray | float:
    """Magnitude (1 - alpha) r**(alpha-1) t sup|B_r0| of the growing B_theta term."""
    return (1.0 - alpha) * np.power(r, alpha - 1.0) * t * br0_inf


def transport_residual(alpha, B0, t, q: CylPoint, h_t=1e-4, h_theta=1e-4, include_source=True) -> CylVec:
    """Central-difference residual of the three cylindrical transport equations.

    ``include_source=False`` drops the (1 - alpha) B_r r**(alpha-1) term from the
    B_theta equation; used as a negative control.
    """
    _check_domain(q, t)
    comps = cylindrical_components(B0)
    r, theta, z = (np.asarray(c, dtype=float) for c in q)

    def ev(tt, th):
        return _exact(alpha, comps, tt, r, th, z)

    tp, tm = ev(t + h_t, theta), ev(t - h_t, theta)
    ap, am = ev(t, theta + h_theta), ev(t, theta - h_theta)
    here = ev(t, theta)
    rate = np.power(r, alpha - 1.0)
    res = []
    for i in range(3):
        dt_ = (tp[i] - tm[i]) / (2.0 * h_t)
        dth = (ap[i] - am[i]) / (2.0 * h_theta)
        res.append(dt_ + rate * dth)
    if include_source:
        res[1] = res[1] + (1.0 - alpha) * here.r_comp * rate
    return CylVec(*res)
