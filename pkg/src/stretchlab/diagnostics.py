"""Stretching metrics, ideal-line evolution and consistency residuals."""
from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np

from .errors import InsufficientSpanError, QuadratureUnderResolved, VertexBudgetExceeded
from .flow import BrownianPath, _rk4_step_var, integrate_flow, sample_brownian, zero_path
from .geometry import as_vec3, vector_to_cylindrical
from .transport import annulus_grid


# ---------------------------------------------------------------- sup |B|

@dataclass
class StretchReport:
    t: float
    r_min: float
    r_max: float
    sup_B: float
    argmax: np.ndarray
    sup_B_theta: float
    n_samples: int
    n_skipped: int
    radii: np.ndarray
    profile_B: np.ndarray
    profile_B_theta: np.ndarray
    skipped_per_r: np.ndarray


def _report(t, r_min, r_max, radii, pts, B, skipped):
    mag = np.linalg.norm(B, axis=-1)
    bt = np.abs(vector_to_cylindrical(pts, np.nan_to_num(B)).theta_comp)
    mag = np.where(skipped, -np.inf, mag)
    bt = np.where(skipped, -np.inf, bt)
    n_r = len(radii)
    prof = mag.reshape(n_r, -1).max(axis=1)
    prof_t = bt.reshape(n_r, -1).max(axis=1)
    k = int(np.argmax(mag))
    return StretchReport(t, r_min, r_max, float(mag[k]), pts[k].copy(), float(bt.max()),
                         int((~skipped).sum()), int(skipped.sum()), radii, prof, prof_t,
                         skipped.reshape(n_r, -1).sum(axis=1))


def stretch_supremum(reconstructor, t, annulus, n_r, n_theta, z=0.0):
    """Grid maximum of |B(t)| over a log-r x uniform-theta annulus at height z.

    The grid value is a lower bound for the true supremum.  If the
    reconstructor returns batched fields (one per noise realisation), a list
    of reports is returned, one per realisation.
    """
    r_min, r_max = map(float, annulus)
    if not r_min > 0 or not r_max > r_min:
        raise ValueError("annulus needs 0 < r_min < r_max")
    if n_r < 2 or n_theta < 2:
        raise ValueError("grid resolution must be at least 2 x 2")
    radii = np.geomspace(r_min, r_max, n_r)
    pts = annulus_grid(r_min, r_max, n_r, n_theta, z=z)
    rec = reconstructor(t, pts)
    B, skipped = rec.B, rec.skipped
    if B.ndim == 2:
        return _report(t, r_min, r_max, radii, pts, B, skipped)
    Bf = B.reshape((-1,) + B.shape[-2:])
    Sf = skipped.reshape((-1,) + skipped.shape[-1:])
    return [_report(t, r_min, r_max, radii, pts, b, s) for b, s in zip(Bf, Sf)]


def fit_blowup_exponent(r, values):
    """Least-squares slope of log(values) against log(r); returns (slope, r_squared)."""
    r = np.asarray(r, dtype=float)
    y = np.asarray(values, dtype=float)
    if r.size < 5:
        raise InsufficientSpanError(f"need at least 5 samples, got {r.size}")
    if np.any(r <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive radii and values")
    if np.log10(r.max() / r.min()) < 2.0 - 1e-9:
        raise InsufficientSpanError("samples must span at least two decades of r")
    lx, ly = np.log(r), np.log(y)
    slope, icpt = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + icpt)
    ss_tot = ((ly - ly.mean()) ** 2).sum()
    r2 = 1.0 - (resid**2).sum() / ss_tot if ss_tot > 0 else 1.0
    return float(slope), float(r2)


# ---------------------------------------------------------------- ideal lines

@dataclass
class Polyline:
    vertices: np.ndarray
    t: float
    complete: bool = True

    @property
    def arc_length(self) -> float:
        return float(np.linalg.norm(np.diff(self.vertices, axis=0), axis=-1).sum())


def _needs_split(P, refine_len, max_turn, min_seg):
    d = np.diff(P, axis=1)
    seg = np.linalg.norm(d, axis=-1)
    bad = (seg > refine_len).any(axis=0)
    if max_turn is not None:
        u = d / np.maximum(seg[..., None], 1e-300)
        cos = (u[:, 1:] * u[:, :-1]).sum(-1)
        turn = np.arccos(np.clip(cos, -1.0, 1.0))
        # a sharp turn at an interior vertex refines both neighbouring segments,
        # unless they are already below the resolution floor
        big = seg.max(axis=0) > min_seg
        tb = (turn > max_turn).any(axis=0)
        bad[1:] |= tb & big[1:]
        bad[:-1] |= tb & big[:-1]
    return bad


def evolve_line(field, sigma, seed, t_snapshots, segment=((-1.0, 0.0, 0.0), (1.0, 0.0, 0.0)),
                refine_len=0.02, *, max_turn=0.3, vertex_budget=4000, dt=1e-3, n_initial=65,
                min_seg=1e-7, path: BrownianPath | None = None, on_budget="raise"):
    """Advect a material segment and refine it Lagrangian-style.

    Vertices are parametrised by s in [0, 1] at t = 0.  Whenever an image
    segment at any snapshot is longer than ``refine_len`` (or the polyline turns
    by more than ``max_turn`` radians at one of its ends) the parameter interval
    is bisected and the new point advected from t = 0 under the same path.
    Returns one :class:`Polyline` per snapshot.

    When refinement would exceed ``vertex_budget`` the default is to raise
    :class:`VertexBudgetExceeded`; with ``on_budget="stop"`` the partially
    refined lines are returned with ``complete=False`` instead.
    """
    a, b = as_vec3(segment[0]), as_vec3(segment[1])
    if np.linalg.norm(b - a) == 0:
        raise ValueError("segment is degenerate")
    if not refine_len > 0:
        raise ValueError("refine_len must be positive")
    snaps = [int(round(t / dt)) for t in t_snapshots]
    n_steps = max(snaps)
    if path is None:
        path = sample_brownian(seed, dt, n_steps) if sigma != 0 else zero_path(dt, n_steps)

    def advect(s):
        x0 = a + s[:, None] * (b - a)
        fs = integrate_flow(field, x0, path, sigma, n_steps=n_steps, save=sorted(set(snaps)))
        return np.stack([fs.trajectory[list(fs.steps).index(k)] for k in snaps])

    s = np.linspace(0.0, 1.0, n_initial)
    P = advect(s)
    while True:
        bad = _needs_split(P, refine_len, max_turn, min_seg)
        if not bad.any():
            break
        idx = np.flatnonzero(bad)
        if len(s) + len(idx) > vertex_budget:
            if on_budget == "stop":
                return [Polyline(P[i], float(t), False) for i, t in enumerate(t_snapshots)]
            seg = np.linalg.norm(np.diff(P, axis=1)[:, idx], axis=-1)
            worst = int(np.argmax(seg.max(axis=1)))
            raise VertexBudgetExceeded(vertex_budget, len(s) + len(idx), snapshot_t=t_snapshots[worst])
        s_new = 0.5 * (s[idx] + s[idx + 1])
        s = np.concatenate([s, s_new])
        order = np.argsort(s, kind="stable")
        s = s[order]
        P = np.concatenate([P, advect(s_new)], axis=1)[:, order]
    return [Polyline(P[i], float(t)) for i, t in enumerate(t_snapshots)]


# ---------------------------------------------------------------- weak form

@dataclass(frozen=True)
class GaussianBump:
    """Test field phi(x) = direction * exp(-|x - center|^2 / (2 width^2)).

    Treated as compactly supported on the ball of radius ``cutoff * width``,
    outside of which it is below exp(-cutoff^2 / 2).
    """

    center: tuple
    width: float
    direction: tuple = (0.0, 1.0, 0.0)
    cutoff: float = 4.5

    @property
    def scale(self):
        """L1 mass of phi, used to make residuals dimensionless."""
        return (2.0 * np.pi) ** 1.5 * self.width**3 * float(np.linalg.norm(self.direction))

    @property
    def support_radius(self):
        return self.cutoff * self.width

    def parts(self, x):
        """(G, grad G, Laplacian G) of the scalar profile at x."""
        d = x - np.asarray(self.center, dtype=float)
        q = (d * d).sum(-1)
        w2 = self.width**2
        G = np.exp(-q / (2.0 * w2))
        return G, -d / w2 * G[..., None], G * (q / w2**2 - 3.0 / w2)

    def __call__(self, x):
        G = self.parts(as_vec3(x))[0]
        return G[..., None] * np.asarray(self.direction, dtype=float)


@dataclass
class WeakFormResult:
    residual: float
    scaled: float
    terms: dict
    n_points: int
    spacing: float


@dataclass
class MartingaleCheck:
    residuals: np.ndarray
    mean: float
    std_error: float
    n: int

    def within(self, k=2.0) -> bool:
        return abs(self.mean) <= k * self.std_error


def _pairings(phi, X, Z, vX):
    """Integrands of <B, phi>, <(Dphi)^A v, B>, <(Dphi) e_k, B> and <Lap phi, B>, summed over nodes."""
    G, gG, lap = phi.parts(X)
    a = np.asarray(phi.direction, dtype=float)
    aZ = Z @ a
    value = (G * aZ).sum()
    drift = ((gG * vX).sum(-1) * aZ - (gG * Z).sum(-1) * (vX @ a)).sum()
    noise = (gG * aZ[:, None]).sum(0)
    lapl = (lap * aZ).sum()
    return value, drift, noise, lapl


def _lagrangian_nodes(phi, field, path, sigma, n_steps, spacing):
    """Start points whose trajectories come near supp(phi) before the final time."""
    c = np.asarray(phi.center, dtype=float)
    R = phi.support_radius
    hc = max(spacing, 0.04)
    W = np.cumsum(path.increments[:n_steps], axis=0)
    reach = getattr(field, "bound", 1.0) * n_steps * path.dt + abs(sigma) * (np.abs(W).max() if n_steps else 0.0) + 0.05
    nb = np.ceil((R + reach) / hc)
    ax = (np.arange(-nb, nb) + 0.5) * hc
    Y = np.stack(np.meshgrid(ax + c[0], ax + c[1], ax + c[2], indexing="ij"), -1).reshape(-1, 3)
    X = Y.copy()
    margin = R + hc * np.sqrt(3.0)
    keep = np.linalg.norm(X - c, axis=1) < margin
    m = 20
    for k in range(0, n_steps, m):
        kk = min(m, n_steps - k)
        X = X + field(k * path.dt, X) * path.dt * kk + sigma * path.increments[k:k + kk].sum(0)
        keep |= np.linalg.norm(X - c, axis=1) < margin + 0.05
    sub = int(round(hc / spacing))
    h = hc / sub
    offs = (np.arange(sub) - (sub - 1) / 2.0) * h
    O = np.stack(np.meshgrid(offs, offs, offs, indexing="ij"), -1).reshape(-1, 3)
    return (Y[keep][:, None, :] + O[None]).reshape(-1, 3), h


def weak_form_residual(B0, field, path: BrownianPath, sigma, t, phi: GaussianBump, *, spacing=0.04,
                       check_refinement=False, refine_tol=0.2, abs_floor=1e-4) -> WeakFormResult:
    """Residual of the distributional identity for the transported field.

    The pairings <B_r, psi> are evaluated after the measure-preserving change
    of variables x = Phi_r(y): sum_y w psi(Phi_r(y)) . DPhi_r(y) B0(y) on a
    lattice of start points y, so the field enters through its pushforward
    reconstruction.  Time integrals use the trapezoid rule over every step;
    stochastic integrals use left-endpoint (Ito) sums against the stored
    increments.  The identity checked is

        <B_t,phi> - <B_0,phi> - int <(Dphi)^A v, B> dr
            - sigma sum_k int <(Dphi) e_k, B> dW^k - sigma^2/2 int <Lap phi, B> dr = 0.

    With ``check_refinement`` the computation is repeated at half the lattice
    spacing and :class:`QuadratureUnderResolved` is raised if the scaled
    residual moves by more than ``refine_tol`` relative (with an absolute
    floor ``abs_floor``).
    """
    res = _weak_form(B0, field, path, float(sigma), t, phi, spacing)
    if check_refinement:
        fine = _weak_form(B0, field, path, float(sigma), t, phi, spacing / 2.0)
        if abs(fine.scaled - res.scaled) > refine_tol * max(abs(fine.scaled), abs(res.scaled), abs_floor):
            raise QuadratureUnderResolved(res.scaled, fine.scaled)
        return fine
    return res


def _weak_form(B0, field, path, sigma, t, phi, spacing):
    n = path.steps_for(t)
    dt = path.dt
    Y, h = _lagrangian_nodes(phi, field, path, sigma, n, spacing)
    wq = h**3
    X = Y.copy()
    Z = B0(Y)
    value = np.empty(n + 1)
    drift = np.empty(n + 1)
    lapl = np.empty(n + 1)
    ito = 0.0
    vX = field(0.0, X)
    for k in range(n + 1):
        value[k], drift[k], noise, lapl[k] = _pairings(phi, X, Z, vX)
        if k == n:
            break
        tk = k * dt
        if sigma == 0:
            X, Zm = _rk4_step_var(field, tk, X, Z[..., None], dt)
            Z = Zm[..., 0]
            vX = field(tk + dt, X)
        else:
            ito += (noise * wq) @ path.increments[k]
            J = field.jacobian(tk, X)
            X = X + vX * dt + sigma * path.increments[k]
            Z = Z + dt * np.einsum("nij,nj->ni", J, Z)
            vX = field(tk + dt, X)
    value *= wq
    drift *= wq
    lapl *= wq

    def trap(f):
        return dt * (f.sum() - 0.5 * (f[0] + f[-1]))

    terms = {
        "change": value[-1] - value[0],
        "drift": trap(drift),
        "noise": sigma * ito,
        "ito_correction": 0.5 * sigma**2 * trap(lapl),
    }
    r = terms["change"] - terms["drift"] - terms["noise"] - terms["ito_correction"]
    return WeakFormResult(float(abs(r)) if sigma == 0 else float(r), float(r / phi.scale), terms, len(Y), h)


def martingale_check(residuals) -> MartingaleCheck:
    """Mean and standard error of signed per-seed residuals (expected mean 0)."""
    r = np.asarray(residuals, dtype=float)
    se = r.std(ddof=1) / np.sqrt(len(r)) if len(r) > 1 else np.inf
    return MartingaleCheck(r, float(r.mean()), float(se), len(r))


# ---------------------------------------------------------------- divergence

def divergence_residual(B, spacing) -> float:
    """Max |central-difference divergence| over interior nodes of a regular grid.

    ``B`` has shape (nx, ny, nz, 3) with axes ordered x, y, z.  The grid should
    stay at least ten spacings away from the axis when the field is singular there.
    """
    B = np.asarray(B, dtype=float)
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    h2 = 2.0 * spacing
    dx = (B[2:, 1:-1, 1:-1, 0] - B[:-2, 1:-1, 1:-1, 0]) / h2
    dy = (B[1:-1, 2:, 1:-1, 1] - B[1:-1, :-2, 1:-1, 1]) / h2
    dz = (B[1:-1, 1:-1, 2:, 2] - B[1:-1, 1:-1, :-2, 2]) / h2
    return float(np.abs(dx + dy + dz).max())
