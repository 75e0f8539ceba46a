"""Velocity fields and initial passive fields.

The velocity fields are time independent but keep the ``(t, p)`` call
signature so the flow engine can treat them uniformly.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import NearAxisError, UnknownPresetError
from .geometry import as_vec3


@dataclass(frozen=True)
class HolderRotationField:
    """Azimuthal flow v = v_theta(r) e_theta around the z axis.

    v_theta(r) = r**alpha on [0, 1] and r**alpha * exp(-gamma (r-1)**3) beyond,
    which is C^2 across r = 1, positive, and decays super-exponentially.
    """

    alpha: float
    gamma: float = 4.0
    r_floor: float | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if not self.gamma > 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if self.r_floor is None:
            object.__setattr__(self, "r_floor", 1e-12 if self.alpha == 1.0 else 1e-6)

    @property
    def holder_exponent(self) -> float:
        return self.alpha

    @property
    def bound(self) -> float:
        # interior max of r^a exp(-g (r-1)^3) solves 3 g r (r-1)^2 = a
        roots = np.roots([3 * self.gamma, -6 * self.gamma, 3 * self.gamma, -self.alpha])
        rs = [1.0] + [z.real for z in roots if abs(z.imag) < 1e-12 and z.real > 1.0]
        return float(max(self.v_theta(np.array(rs))))

    def v_theta(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r > 0.0, r * self._omega(np.where(r > 0.0, r, 1.0)), 0.0)

    def _omega(self, r):
        """Angular speed v_theta / r."""
        if self.alpha == 1.0:
            g = np.ones_like(r)
        else:
            with np.errstate(divide="ignore"):
                g = np.asarray(np.exp((self.alpha - 1.0) * np.log(r)))
        far = r > 1.0
        if np.any(far):
            d = r[far] - 1.0
            g[far] *= np.exp(-self.gamma * d * d * d)
        return g

    def _omega_prime(self, r, g):
        if self.alpha == 1.0:
            gp = np.zeros_like(r)
        else:
            gp = np.asarray((self.alpha - 1.0) * g / r)
        far = r > 1.0
        if np.any(far):
            d = r[far] - 1.0
            gp[far] -= 3.0 * self.gamma * d * d * g[far]
        return gp

    def __call__(self, t, p):
        p = as_vec3(p)
        x, y = p[..., 0], p[..., 1]
        r = np.hypot(x, y)
        g = self._omega(r)
        if self.alpha != 1.0:
            g = np.where(r > 0.0, g, 0.0)
        out = np.empty(np.broadcast_shapes(p.shape, g.shape + (3,)))
        out[..., 0] = -y * g
        out[..., 1] = x * g
        out[..., 2] = 0.0
        return out

    def jacobian(self, t, p):
        p = as_vec3(p)
        x, y = p[..., 0], p[..., 1]
        r = np.hypot(x, y)
        if np.any(r < self.r_floor):
            raise NearAxisError(f"velocity gradient requested at r={float(np.min(r)):.3e} < r_floor={self.r_floor:.1e}")
        g = self._omega(r)
        q = self._omega_prime(r, g) / r
        out = np.zeros(p.shape + (3,))
        out[..., 0, 0] = -x * y * q
        out[..., 0, 1] = -g - y * y * q
        out[..., 1, 0] = g + x * x * q
        out[..., 1, 1] = x * y * q
        return out


@dataclass(frozen=True)
class ZeroField:
    holder_exponent: float = 1.0
    bound: float = 0.0
    r_floor: float = 0.0

    def __call__(self, t, p):
        return np.zeros_like(as_vec3(p))

    def jacobian(self, t, p):
        p = as_vec3(p)
        return np.zeros(p.shape + (3,))


def holder_velocity(alpha, gamma=4.0):
    return HolderRotationField(alpha, gamma)


def holder_velocity_jacobian(alpha, gamma=4.0, r_floor=1e-12):
    return HolderRotationField(alpha, gamma, r_floor).jacobian


def velocity_field(name, alpha=1.0, gamma=4.0):
    if name == "holder":
        return HolderRotationField(alpha, gamma)
    if name == "zero":
        return ZeroField()
    raise UnknownPresetError(f"unknown velocity field {name!r}")


@dataclass(frozen=True)
class InitialField:
    """A bounded, divergence-free initial field B0 evaluated in Cartesian components."""

    name: str
    func: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    sup_norm: float = np.inf

    def evaluate(self, p):
        p = as_vec3(p)
        return np.broadcast_to(self.func(p), p.shape).astype(float, copy=True)

    __call__ = evaluate


def _constant(vec):
    vec = np.asarray(vec, dtype=float)
    return lambda p: np.broadcast_to(vec, p.shape)


def _solid_rotor(p):
    out = p.copy()
    out[..., 2] = -2.0 * p[..., 2]
    return out


_PRESETS = {
    "constant_ex": lambda: InitialField("constant_ex", _constant([1.0, 0.0, 0.0]), 1.0),
    "constant_ez": lambda: InitialField("constant_ez", _constant([0.0, 0.0, 1.0]), 1.0),
    "solid_rotor": lambda: InitialField("solid_rotor", _solid_rotor),
}

PRESET_NAMES = tuple(_PRESETS)


def preset_initial_field(name) -> InitialField:
    try:
        return _PRESETS[name]()
    except KeyError:
        raise UnknownPresetError(f"unknown initial field {name!r}; choose from {', '.join(PRESET_NAMES)}") from None


def linear_combination(coeffs, fields) -> InitialField:
    coeffs = [float(c) for c in coeffs]
    fields = list(fields)

    def func(p):
        return sum(c * f.evaluate(p) for c, f in zip(coeffs, fields))

    name = " + ".join(f"{c:g}*{f.name}" for c, f in zip(coeffs, fields))
    return InitialField(name, func, sum(abs(c) * f.sup_norm for c, f in zip(coeffs, fields)))
