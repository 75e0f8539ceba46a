"""Lagrangian flow X_t = Phi_t(x) of dX = v(t, X) dt + sigma dW, with Jacobians.

Schemes
-------
* sigma == 0: classical RK4 on the characteristics ODE.
* sigma != 0: Euler-Maruyama.  The noise is additive, so EM is already strong
  order 1 and there is no Milstein correction.

Jacobians are computed either by carrying the variational equation
dJ = Dv(X) J dt through the *same* discrete scheme (so the result is the exact
derivative of the discrete map), or by centred finite differences over
trajectories that share one Brownian path.

All routines are vectorised: ``x0`` may have any leading shape.  A batched
path (see :func:`stack_paths`) has increments of shape ``(n_steps, R, 1, 3)``
and drives points of shape ``(R, N, 3)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InverseVerificationFailed, MissingJacobianError, NonFiniteError
from .geometry import adjugate, as_vec3, det3, identity_like, matmul, matvec, radius

FD_OFFSETS = np.concatenate([np.zeros((1, 3)), np.eye(3), -np.eye(3)])


@dataclass(frozen=True)
class BrownianPath:
    seed: object
    dt: float
    n_steps: int
    increments: np.ndarray

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.dt

    def W(self) -> np.ndarray:
        """Path values W(t_n), n = 0..n_steps."""
        zero = np.zeros((1,) + self.increments.shape[1:])
        return np.concatenate([zero, np.cumsum(self.increments, axis=0)])

    def steps_for(self, t) -> int:
        n = int(round(t / self.dt))
        if n < 0 or n > self.n_steps or abs(n * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"t={t} is not on the path grid (dt={self.dt}, n_steps={self.n_steps})")
        return n


def sample_brownian(seed, dt, n_steps) -> BrownianPath:
    """I.i.d. N(0, dt) increments in 3D, reproducible from ``seed``."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    rng = np.random.default_rng(seed)
    inc = rng.standard_normal((int(n_steps), 3)) * np.sqrt(dt)
    return BrownianPath(seed, float(dt), int(n_steps), inc)


def stack_paths(paths) -> BrownianPath:
    """Combine single paths into one batched path driving ``(R, N, 3)`` point arrays."""
    paths = list(paths)
    dt, n = paths[0].dt, paths[0].n_steps
    if any(p.dt != dt or p.n_steps != n for p in paths):
        raise ValueError("stacked paths must share dt and n_steps")
    inc = np.stack([p.increments for p in paths], axis=1)[:, :, None, :]
    return BrownianPath(tuple(p.seed for p in paths), dt, n, inc)


def zero_path(dt, n_steps) -> BrownianPath:
    return BrownianPath(None, float(dt), int(n_steps), np.zeros((int(n_steps), 3)))


@dataclass
class FlowSample:
    """Saved states of one (possibly vectorised) flow integration."""

    steps: np.ndarray
    times: np.ndarray
    trajectory: np.ndarray
    jacobians: np.ndarray | None
    sigma: float
    scheme: str
    dt: float
    seed: object = None

    @property
    def x0(self):
        return self.trajectory[0]

    def index_of(self, t) -> int:
        n = int(round(t / self.dt))
        hits = np.nonzero(self.steps == n)[0]
        if len(hits) == 0:
            raise ValueError(f"time {t} was not saved")
        return int(hits[0])

    def position(self, t):
        return self.trajectory[self.index_of(t)]

    def jacobian(self, t):
        if self.jacobians is None:
            raise MissingJacobianError("flow was integrated without a Jacobian")
        return self.jacobians[self.index_of(t)]


def scheme_for(sigma) -> str:
    return "rk4" if sigma == 0 else "euler_maruyama"


def _check_finite(X, step):
    if not np.isfinite(X).all():
        raise NonFiniteError(f"non-finite state at step {step}; dt too large or field produced NaN/Inf")


def _save_plan(save, n_steps):
    if save is None or save == "all":
        return np.arange(n_steps + 1)
    if save == "end":
        return np.array([0, n_steps])
    steps = np.unique(np.asarray(list(save), dtype=int))
    if steps.size and (steps[0] < 0 or steps[-1] > n_steps):
        raise ValueError("save steps outside the integration range")
    return steps


def _rk4_step(field, t, X, dt):
    k1 = field(t, X)
    k2 = field(t + 0.5 * dt, X + 0.5 * dt * k1)
    k3 = field(t + 0.5 * dt, X + 0.5 * dt * k2)
    k4 = field(t + dt, X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_step_var(field, t, X, J, dt):
    """RK4 on the augmented system (X, J); J' = Dv(X) J."""
    h = 0.5 * dt
    X2 = X + h * (k1 := field(t, X))
    A1 = field.jacobian(t, X)
    K1 = matmul(A1, J)
    X3 = X + h * (k2 := field(t + h, X2))
    K2 = matmul(field.jacobian(t + h, X2), J + h * K1)
    X4 = X + dt * (k3 := field(t + h, X3))
    K3 = matmul(field.jacobian(t + h, X3), J + h * K2)
    k4 = field(t + dt, X4)
    K4 = matmul(field.jacobian(t + dt, X4), J + dt * K3)
    Xn = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    Jn = J + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
    return Xn, Jn


def _forward(field, X, path, sigma, n_steps, save_steps, J=None, noise_axis=False):
    dt = path.dt
    scheme = scheme_for(sigma)
    traj = np.empty((len(save_steps),) + X.shape)
    jacs = None if J is None else np.empty((len(save_steps),) + J.shape)
    slot = 0
    if save_steps[0] == 0:
        traj[0] = X
        if J is not None:
            jacs[0] = J
        slot = 1
    for n in range(n_steps):
        t = n * dt
        if scheme == "rk4":
            if J is None:
                X = _rk4_step(field, t, X, dt)
            else:
                X, J = _rk4_step_var(field, t, X, J, dt)
        else:
            dW = path.increments[n]
            if noise_axis:
                dW = dW[..., None, :]
            v = field(t, X)
            if J is not None:
                J = J + dt * matmul(field.jacobian(t, X), J)
            X = X + v * dt + sigma * dW
        _check_finite(X, n + 1)
        if slot < len(save_steps) and save_steps[slot] == n + 1:
            traj[slot] = X
            if J is not None:
                jacs[slot] = J
            slot += 1
    return traj, jacs


def fd_steps(field, t_span, x, fd_step=1e-5, fd_rel=1e-3):
    """Per-point centred-difference step.

    Fields that are only Hoelder at the axis (exponent < 1) get a step shrunk to
    a fraction of the local radius divided by the accumulated shear, since the
    flow map winds on the scale r / (t |Dv|) there.
    """
    x = as_vec3(x)
    h = np.full(x.shape[:-1], float(fd_step))
    if getattr(field, "holder_exponent", 1.0) < 1.0:
        r = radius(x)
        shear = np.abs(field.jacobian(0.0, x)).max(axis=(-2, -1))
        h = np.minimum(h, fd_rel * r / (1.0 + abs(t_span) * shear))
    return h


def _stencil(x, h):
    return x[..., None, :] + h[..., None, None] * FD_OFFSETS


def _fd_jacobian_from_stencil(S, h):
    # S: (..., 7, 3) images of x, x+h e_j, x-h e_j; returns J[..., i, j]
    d = (S[..., 1:4, :] - S[..., 4:7, :]) / (2.0 * h[..., None, None])
    return np.swapaxes(d, -1, -2)


def integrate_flow(field, x0, path: BrownianPath, sigma, *, n_steps=None, jacobian=None,
                   save=None, fd_step=1e-5, fd_rel=1e-3) -> FlowSample:
    """Integrate the flow from ``x0`` over the first ``n_steps`` of ``path``.

    ``jacobian`` is ``None``, ``"variational"`` or ``"finite_difference"``.
    ``save`` is ``None``/``"all"`` (every step), ``"end"``, or a list of step indices.
    """
    x0 = as_vec3(x0)
    if not np.isfinite(x0).all():
        raise NonFiniteError("x0 is not finite")
    n_steps = path.n_steps if n_steps is None else int(n_steps)
    if n_steps > path.n_steps:
        raise ValueError("path too short for requested n_steps")
    save_steps = _save_plan(save, n_steps)
    sigma = float(sigma)
    if jacobian is None:
        traj, jacs = _forward(field, x0.copy(), path, sigma, n_steps, save_steps)
    elif jacobian == "variational":
        J0 = identity_like(x0.shape[:-1])
        traj, jacs = _forward(field, x0.copy(), path, sigma, n_steps, save_steps, J=J0)
    elif jacobian == "finite_difference":
        h = fd_steps(field, n_steps * path.dt, x0, fd_step, fd_rel)
        S, _ = _forward(field, _stencil(x0, h), path, sigma, n_steps, save_steps, noise_axis=True)
        traj = S[..., 0, :]
        jacs = _fd_jacobian_from_stencil(S, h)
    else:
        raise ValueError(f"unknown jacobian method {jacobian!r}")
    return FlowSample(save_steps, save_steps * path.dt, traj, jacs, sigma, scheme_for(sigma), path.dt, path.seed)


def flow_jacobian(field, x0, path, sigma, method="variational", *, n_steps=None, save=None,
                  fd_step=1e-5, fd_rel=1e-3) -> np.ndarray:
    """History of DPhi_t(x0) at the saved steps (row-major)."""
    return integrate_flow(field, x0, path, sigma, n_steps=n_steps, jacobian=method, save=save,
                          fd_step=fd_step, fd_rel=fd_rel).jacobians


def inverse_jacobian_evolve(field, flow: FlowSample) -> np.ndarray:
    """Integrate d/dt (DPhi)^-1 = -(DPhi)^-1 Dv(Phi) along a stored trajectory.

    For RK4 flows the stage points are rebuilt from the stored nodes and the
    matrix ODE is advanced with the same RK4 tableau.  For Euler-Maruyama flows
    each step uses the exact inverse of the forward step matrix (I + Dv dt), an
    implicit discretisation that keeps the product with the variational
    Jacobian at the identity to round-off.
    """
    n_total = int(flow.steps[-1])
    if len(flow.steps) != n_total + 1:
        raise ValueError("inverse_jacobian_evolve needs a flow saved at every step")
    dt = flow.dt
    X = flow.trajectory
    Y = identity_like(X.shape[1:-1])
    out = np.empty(X.shape + (3,))
    out[0] = Y
    for n in range(n_total):
        t = n * dt
        if flow.scheme == "rk4":
            h = 0.5 * dt
            x = X[n]
            k1 = field(t, x)
            x2 = x + h * k1
            k2 = field(t + h, x2)
            x3 = x + h * k2
            k3 = field(t + h, x3)
            x4 = x + dt * k3
            K1 = -matmul(Y, field.jacobian(t, x))
            K2 = -matmul(Y + h * K1, field.jacobian(t + h, x2))
            K3 = -matmul(Y + h * K2, field.jacobian(t + h, x3))
            K4 = -matmul(Y + dt * K3, field.jacobian(t + dt, x4))
            Y = Y + (dt / 6.0) * (K1 + 2.0 * K2 + 2.0 * K3 + K4)
        else:
            M = identity_like(X.shape[1:-1]) + dt * field.jacobian(t, X[n])
            Y = matmul(Y, adjugate(M) / det3(M)[..., None, None])
        _check_finite(Y, n + 1)
        out[n + 1] = Y
    return out


def _reverse(field, X, path, sigma, n_steps, noise_axis=False, reverse="adjoint", tol=1e-15, max_iter=60):
    dt = path.dt
    tol2 = tol * tol
    if sigma == 0:
        for n in range(n_steps - 1, -1, -1):
            X = _rk4_back(field, (n + 1) * dt, X, dt)
            _check_finite(X, n)
        return X
    for n in range(n_steps - 1, -1, -1):
        dW = path.increments[n]
        if noise_axis:
            dW = dW[..., None, :]
        rhs = X - sigma * dW
        t = n * dt
        if reverse == "explicit":
            X = rhs - dt * field((n + 1) * dt, X)
        else:
            # solve Xn + v(t_n, Xn) dt = X_{n+1} - sigma dW by fixed point;
            # converged points are frozen so results do not depend on batch makeup
            shape = rhs.shape
            r_flat = rhs.reshape(-1, 3)
            Xk = r_flat - dt * field(t, r_flat)
            idx = None
            for _ in range(max_iter):
                Xi = Xk if idx is None else Xk[idx]
                Xnew = (r_flat if idx is None else r_flat[idx]) - dt * field(t, Xi)
                d = Xnew - Xi
                still = np.einsum("ij,ij->i", d, d) > tol2 * (1.0 + np.einsum("ij,ij->i", Xnew, Xnew))
                if idx is None:
                    Xk = Xnew
                    idx = np.flatnonzero(still)
                else:
                    Xk[idx] = Xnew
                    idx = idx[still]
                if idx.size == 0:
                    break
            X = Xk.reshape(shape)
        _check_finite(X, n)
    return X


def _rk4_back(field, t, X, dt):
    """One RK4 step of dX/ds = -v(t - s, X) from time t to t - dt."""
    k1 = -field(t, X)
    k2 = -field(t - 0.5 * dt, X + 0.5 * dt * k1)
    k3 = -field(t - 0.5 * dt, X + 0.5 * dt * k2)
    k4 = -field(t - dt, X + dt * k3)
    return X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_inverse_flow(field, y, path: BrownianPath, sigma, t=None, *, reverse="adjoint",
                           verify=False, inverse_tol=1e-8, refine=0, fd_step=1e-5):
    """Phi_t^{-1}(y) by time reversal over the stored increments.

    The increments are replayed in reverse order with negated drift and noise.
    For sigma != 0, ``reverse="adjoint"`` (default) solves each reversed
    Euler-Maruyama step implicitly so the result inverts the discrete forward
    map; ``reverse="explicit"`` takes the plain O(dt) explicit reversed step.
    ``refine`` > 0 runs that many Newton polishing iterations using a
    finite-difference forward Jacobian.  ``verify`` re-integrates forward and
    raises :class:`InverseVerificationFailed` if the round trip misses ``y`` by
    more than ``inverse_tol``.
    """
    y = as_vec3(y)
    n = path.n_steps if t is None else path.steps_for(t)
    sigma = float(sigma)
    x = _reverse(field, y.copy(), path, sigma, n, reverse=reverse)
    for _ in range(int(refine)):
        fs = integrate_flow(field, x, path, sigma, n_steps=n, save="end", jacobian="finite_difference", fd_step=fd_step)
        resid = fs.trajectory[-1] - y
        x = x - np.linalg.solve(fs.jacobians[-1], resid[..., None])[..., 0]
    if verify:
        check = integrate_flow(field, x, path, sigma, n_steps=n, save="end").trajectory[-1]
        res = float(np.abs(check - y).max()) if check.size else 0.0
        if res > inverse_tol:
            raise InverseVerificationFailed(res, inverse_tol)
    return x


def inverse_flow_with_jacobian(field, y, path, sigma, t=None, *, reverse="adjoint", fd_step=1e-5, fd_rel=1e-3):
    """Phi_t^{-1}(y) together with its Jacobian D(Phi_t^{-1})(y), by centred differences.

    All stencil points replay the same reversed increments.
    """
    y = as_vec3(y)
    n = path.n_steps if t is None else path.steps_for(t)
    h = fd_steps(field, n * path.dt, y, fd_step, fd_rel)
    S = _reverse(field, _stencil(y, h), path, float(sigma), n, noise_axis=True, reverse=reverse)
    return S[..., 0, :], _fd_jacobian_from_stencil(S, h)


def det_residual(jacobians) -> np.ndarray:
    return np.abs(det3(jacobians) - 1.0)


def pushforward_value(jac, b0):
    return matvec(jac, b0)
