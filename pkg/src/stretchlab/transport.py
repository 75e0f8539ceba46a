"""Reconstruction of the passive field B from the flow.

Two routes are provided and kept independent:

* pushforward: B(t, Phi_t(x0)) = DPhi_t(x0) B0(x0), using the Jacobian carried
  by a forward :class:`~stretchlab.flow.FlowSample`;
* pullback: B(t, x) = adj(D(Phi_t^-1)(x)) B0(Phi_t^-1(x)), with the inverse map
  found by time reversal and its Jacobian by centred differences over reversed
  integrations that replay the same increments.

The adjugate is used in place of the inverse; for a measure-preserving flow the
two coincide, and the adjugate form keeps the result exactly divergence free
for any smooth map.
"""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InverseVerificationFailed, NearAxisError, NonFiniteError
from .exact import exact_B_cartesian
from .flow import BrownianPath, FlowSample, inverse_flow_with_jacobian, integrate_flow
from .geometry import adjugate, as_vec3, det3, from_cylindrical, matvec, radius, CylPoint


@dataclass
class FieldSample:
    t: float
    x: np.ndarray
    B: np.ndarray
    provenance: str
    det_residual: np.ndarray | None = None


def pushforward(B0, flow: FlowSample, t) -> FieldSample:
    """Field value carried to the advected point Phi_t(x0)."""
    i = flow.index_of(t)
    J = flow.jacobian(t)
    x0 = flow.trajectory[0]
    return FieldSample(t, flow.trajectory[i], matvec(J, B0(x0)), "pushforward", np.abs(det3(J) - 1.0))


def _batch_shape(path: BrownianPath):
    return path.increments.shape[1:-2] if path.increments.ndim > 2 else ()


def pullback_sample(B0, field, path, sigma, t, x, *, reverse="adjoint", verify=False, inverse_tol=1e-6,
                    fd_step=1e-5, fd_rel=1e-3) -> FieldSample:
    x = as_vec3(x)
    bs = _batch_shape(path)
    if bs and x.shape[: len(bs)] != bs:
        x = np.broadcast_to(x, bs + x.shape)
    n = path.steps_for(t)
    if n == 0:
        return FieldSample(t, x, B0(x), "pullback", np.zeros(x.shape[:-1]))
    y, Jinv = inverse_flow_with_jacobian(field, x, path, sigma, t, reverse=reverse, fd_step=fd_step, fd_rel=fd_rel)
    if verify:
        back = integrate_flow(field, y, path, sigma, n_steps=n, save="end").trajectory[-1]
        res = float(np.abs(back - x).max())
        if res > inverse_tol:
            raise InverseVerificationFailed(res, inverse_tol)
    B = matvec(adjugate(Jinv), B0(y))
    return FieldSample(t, x, B, "pullback", np.abs(det3(Jinv) - 1.0))


def pullback_at(B0, field, path, sigma, t, x, **kw) -> np.ndarray:
    """B(t, x) from the adjugate pullback formula (vectorised over ``x``)."""
    return pullback_sample(B0, field, path, sigma, t, x, **kw).B


@dataclass
class GridReconstruction:
    t: float
    points: np.ndarray
    B: np.ndarray
    skipped: np.ndarray
    det_residual: np.ndarray
    errors: list = dc_field(default_factory=list)

    @property
    def n_skipped(self) -> int:
        return int(self.skipped.sum())

    def valid(self):
        return ~self.skipped


def annulus_grid(r_min, r_max, n_r, n_theta, z=0.0, log=True):
    """Points on an annulus at height z, log-spaced (default) or uniform in r."""
    if log:
        rs = np.geomspace(r_min, r_max, n_r)
    else:
        rs = np.linspace(r_min, r_max, n_r)
    th = np.arange(n_theta) * (2.0 * np.pi / n_theta)
    R, TH = np.meshgrid(rs, th, indexing="ij")
    return from_cylindrical(CylPoint(R, TH, np.full_like(R, z))).reshape(-1, 3)


def box_grid(center, half_width, n):
    """Regular n x n x n grid; returns (points with shape (n, n, n, 3), spacing)."""
    c = np.asarray(center, dtype=float)
    ax = np.linspace(-half_width, half_width, n)
    X, Y, Z = np.meshgrid(ax + c[0], ax + c[1], ax + c[2], indexing="ij")
    return np.stack([X, Y, Z], -1), ax[1] - ax[0]


def reconstruct_grid(B0, field, path, sigma, t, grid, **kw) -> GridReconstruction:
    """Pullback at every grid point; near-axis or failing points are flagged, not fatal.

    ``grid`` is an array of points with trailing axis 3.  With a batched path
    the result gains the path's batch axes in front.
    """
    pts = as_vec3(grid)
    if pts.size == 0:
        raise ValueError("grid is empty")
    bs = _batch_shape(path)
    full = np.broadcast_to(pts, bs + pts.shape)
    floor = getattr(field, "r_floor", 0.0) if getattr(field, "holder_exponent", 1.0) < 1.0 else 0.0
    skipped = np.broadcast_to(radius(pts) < floor, full.shape[:-1]).copy()
    errors = []
    if skipped.any():
        errors.append(("near_axis", int(skipped.sum())))
    B = np.full(full.shape, np.nan)
    detr = np.full(full.shape[:-1], np.nan)
    keep = ~skipped[(0,) * len(bs)] if bs else ~skipped
    sub = pts[keep]
    try:
        s = pullback_sample(B0, field, path, sigma, t, sub, **kw)
        B[..., keep, :] = s.B
        detr[..., keep] = s.det_residual
    except (NearAxisError, NonFiniteError, InverseVerificationFailed):
        # isolate the offending points one by one
        for i in np.flatnonzero(keep.reshape(-1)):
            idx = np.unravel_index(i, keep.shape)
            try:
                s = pullback_sample(B0, field, path, sigma, t, pts[idx], **kw)
                B[(...,) + idx + (slice(None),)] = s.B
                detr[(...,) + idx] = s.det_residual
            except (NearAxisError, NonFiniteError, InverseVerificationFailed) as exc:
                skipped[(...,) + idx] = True
                errors.append((type(exc).__name__, tuple(pts[idx])))
    return GridReconstruction(t, full, B, skipped, detr, errors)


class PullbackReconstructor:
    """Callable ``(t, points) -> GridReconstruction`` for one noise realisation."""

    def __init__(self, B0, field, path, sigma, **kw):
        self.B0, self.field, self.path, self.sigma, self.kw = B0, field, path, float(sigma), kw

    def __call__(self, t, points):
        return reconstruct_grid(self.B0, self.field, self.path, self.sigma, t, points, **self.kw)


class ExactReconstructor:
    """Closed-form reconstruction for the deterministic r**alpha rotation (0 < r < 1)."""

    def __init__(self, alpha, B0):
        self.alpha, self.B0 = alpha, B0

    def __call__(self, t, points):
        pts = as_vec3(points)
        if t == 0:
            B = self.B0(pts)
        else:
            B = exact_B_cartesian(self.alpha, self.B0, t, pts)
        return GridReconstruction(t, pts, B, np.zeros(pts.shape[:-1], bool), np.zeros(pts.shape[:-1]))
