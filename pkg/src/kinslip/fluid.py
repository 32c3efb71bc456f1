"""Incompressible Navier-Stokes with Navier slip walls and incompressible Euler on a MAC grid.

Layout (periodic in x, walls at y = 0 and y = 1):

* ``u[i, j]`` x-velocity on the face x = i dx, y = (j + 1/2) dy, shape (nx, ny)
* ``v[i, j]`` y-velocity on the face x = (i + 1/2) dx, y = j dy, shape (nx, ny + 1);
  rows 0 and ny are the walls and stay exactly zero
* ``p[i, j]`` pressure at cell centres

Time stepping is SSP-RK3 with an exact FFT/DCT pressure projection after
every stage.  Euler is the same code path with zero viscosity and slip.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import fft as sfft

from .fields import ChannelGeometry, cell_gradient, wall_extrapolate

TOL_DIV = 1e-10


class FluidSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class SlipParams:
    nu: float = 0.0
    lam: float = 0.0

    def __post_init__(self):
        if not (self.nu >= 0 and self.lam >= 0):
            raise ValueError(f"viscosity and slip coefficient must be >= 0, got {self.nu}, {self.lam}")

    def ghost_ratio(self, dy: float) -> float:
        """u_ghost / u_interior for the discrete condition nu du/dn + lam u = 0."""
        if self.nu == 0.0:
            return 1.0
        a = self.nu / dy
        return (a - self.lam / 2) / (a + self.lam / 2)


@dataclass(frozen=True, eq=False)
class FluidState:
    u: np.ndarray
    v: np.ndarray
    p: np.ndarray
    t: float = 0.0

    def copy(self) -> "FluidState":
        return FluidState(self.u.copy(), self.v.copy(), self.p.copy(), self.t)


# ---------------------------------------------------------------------------
# construction and discrete operators
# ---------------------------------------------------------------------------

def state_from_streamfunction(psi, geom: ChannelGeometry, t: float = 0.0) -> FluidState:
    """Discretely solenoidal state from corner values of a stream function psi(x, y)."""
    x = np.arange(geom.nx + 1) * geom.dx
    y = np.arange(geom.ny + 1) * geom.dy
    X, Y = np.meshgrid(x, y, indexing="ij")
    P = psi(X, Y)
    u = (P[:-1, 1:] - P[:-1, :-1]) / geom.dy
    v = -(P[1:, :] - P[:-1, :]) / geom.dx
    v[:, 0] = 0.0
    v[:, -1] = 0.0
    st = FluidState(u, v, np.zeros((geom.nx, geom.ny)), t)
    u2, v2, _ = project(st.u, st.v, geom)
    return FluidState(u2, v2, st.p, t)


def zero_state(geom: ChannelGeometry) -> FluidState:
    return FluidState(np.zeros((geom.nx, geom.ny)), np.zeros((geom.nx, geom.ny + 1)),
                      np.zeros((geom.nx, geom.ny)))


def divergence(u, v, geom: ChannelGeometry) -> np.ndarray:
    return (np.roll(u, -1, axis=0) - u) / geom.dx + (v[:, 1:] - v[:, :-1]) / geom.dy


def _laplacian_symbol(geom: ChannelGeometry):
    kx = 2 * np.pi * np.arange(geom.nx) / geom.nx
    lx = (2 * np.cos(kx) - 2) / geom.dx ** 2
    ky = np.pi * np.arange(geom.ny) / geom.ny
    ly = (2 * np.cos(ky) - 2) / geom.dy ** 2
    return lx[:, None] + ly[None, :]


def project(u, v, geom: ChannelGeometry):
    """Remove the discrete gradient part: returns (u, v, phi) with div = 0 to roundoff."""
    d = divergence(u, v, geom)
    dh = sfft.dct(sfft.fft(d, axis=0), type=2, axis=1, norm="ortho")
    sym = _laplacian_symbol(geom)
    sym[0, 0] = 1.0
    ph = dh / sym
    ph[0, 0] = 0.0
    phi = np.real(sfft.idct(sfft.ifft(ph, axis=0), type=2, axis=1, norm="ortho"))
    u = u - (phi - np.roll(phi, 1, axis=0)) / geom.dx
    v = v.copy()
    v[:, 1:-1] -= (phi[:, 1:] - phi[:, :-1]) / geom.dy
    return u, v, phi


def _ghost_rows(u, params: SlipParams, geom: ChannelGeometry):
    r = params.ghost_ratio(geom.dy)
    return r * u[:, 0], r * u[:, -1]


def _rhs(u, v, params: SlipParams, geom: ChannelGeometry):
    dx, dy = geom.dx, geom.dy
    # u-momentum: d(uu)/dx at cell centres, d(uv)/dy at corners
    uc = 0.5 * (u + np.roll(u, -1, axis=0))
    fxx = uc * uc
    du = -(fxx - np.roll(fxx, 1, axis=0)) / dx
    gb, gt = _ghost_rows(u, params, geom)
    ue = np.concatenate([gb[:, None], u, gt[:, None]], axis=1)       # (nx, ny+2)
    u_corner = 0.5 * (ue[:, 1:] + ue[:, :-1])                         # (nx, ny+1) at (x_i, y_j)
    v_corner = 0.5 * (v + np.roll(v, 1, axis=0))                      # (nx, ny+1)
    fxy = u_corner * v_corner
    du -= (fxy[:, 1:] - fxy[:, :-1]) / dy
    # v-momentum on interior v faces
    vc = 0.5 * (v[:, 1:] + v[:, :-1])
    fyy = vc * vc
    dv = np.zeros_like(v)
    dv[:, 1:-1] = -(np.roll(fxy, -1, axis=0)[:, 1:-1] - fxy[:, 1:-1]) / dx \
        - (fyy[:, 1:] - fyy[:, :-1]) / dy
    if params.nu > 0:
        lap_u = (np.roll(u, -1, 0) - 2 * u + np.roll(u, 1, 0)) / dx ** 2 \
            + (ue[:, 2:] - 2 * u + ue[:, :-2]) / dy ** 2
        du += params.nu * lap_u
        lap_v = (np.roll(v, -1, 0) - 2 * v + np.roll(v, 1, 0))[:, 1:-1] / dx ** 2 \
            + (v[:, 2:] - 2 * v[:, 1:-1] + v[:, :-2]) / dy ** 2
        dv[:, 1:-1] += params.nu * lap_v
    return du, dv


def max_stable_dt(state: FluidState, params: SlipParams, geom: ChannelGeometry, cfl: float = 0.5):
    umax = max(np.abs(state.u).max(), np.abs(state.v).max(), 1e-12)
    dt = cfl * min(geom.dx, geom.dy) / umax
    if params.nu > 0:
        dt = min(dt, min(geom.dx, geom.dy) ** 2 / (4 * params.nu))
    return dt


def ns_slip_step(state: FluidState, params: SlipParams, dt: float, geom: ChannelGeometry,
                 check: bool = True) -> FluidState:
    """One SSP-RK3 projection step of the slip Navier-Stokes system."""
    if check and dt > max_stable_dt(state, params, geom, cfl=1.0) * (1 + 1e-12):
        raise FluidSolverError(f"time step {dt:.3e} violates the advective/diffusive limit")
    u0, v0 = state.u, state.v

    def stage(u, v):
        du, dv = _rhs(u, v, params, geom)
        return du, dv

    du, dv = stage(u0, v0)
    u1, v1, _ = project(u0 + dt * du, v0 + dt * dv, geom)
    du, dv = stage(u1, v1)
    u2, v2, _ = project(0.75 * u0 + 0.25 * (u1 + dt * du), 0.75 * v0 + 0.25 * (v1 + dt * dv), geom)
    du, dv = stage(u2, v2)
    us = u0 / 3 + 2 / 3 * (u2 + dt * du)
    vs = v0 / 3 + 2 / 3 * (v2 + dt * dv)
    u3, v3, phi = project(us, vs, geom)
    if not (np.all(np.isfinite(u3)) and np.all(np.isfinite(v3))):
        raise FluidSolverError("non-finite velocity")
    div = np.abs(divergence(u3, v3, geom)).max()
    scale = max(1.0, np.abs(u3).max() / min(geom.dx, geom.dy))
    if div > TOL_DIV * scale:
        raise FluidSolverError(f"projection left divergence {div:.2e}")
    return FluidState(u3, v3, phi * 1.5 / dt, state.t + dt)


def euler_step(state: FluidState, dt: float, geom: ChannelGeometry, check: bool = True) -> FluidState:
    return ns_slip_step(state, SlipParams(0.0, 0.0), dt, geom, check=check)


# ---------------------------------------------------------------------------
# derived fields
# ---------------------------------------------------------------------------

def cell_velocity(state: FluidState) -> np.ndarray:
    uc = 0.5 * (state.u + np.roll(state.u, -1, axis=0))
    vc = 0.5 * (state.v[:, 1:] + state.v[:, :-1])
    return np.stack([uc, vc], axis=-1)


def restrict(state: FluidState, factor: int = 2) -> FluidState:
    """Face-average a refined state onto a coarser grid (keeps zero divergence)."""
    f = factor
    u = state.u[::f].reshape(state.u.shape[0] // f, -1, f).mean(axis=2)
    vv = state.v[:, ::f]
    v = vv.reshape(-1, f, vv.shape[1]).mean(axis=1)
    p = state.p.reshape(state.p.shape[0] // f, f, -1, f).mean(axis=(1, 3))
    return FluidState(u, v, p, state.t)


def wall_slip_velocity(state: FluidState, params: SlipParams, geom: ChannelGeometry):
    """Tangential velocity on the walls: mean of interior and ghost rows, shape (nx,) each."""
    r = params.ghost_ratio(geom.dy)
    return 0.5 * (1 + r) * state.u[:, 0], 0.5 * (1 + r) * state.u[:, -1]


def energy(state: FluidState, geom: ChannelGeometry) -> float:
    return 0.5 * (np.sum(state.u ** 2) + np.sum(state.v ** 2)) * geom.cell_area


def grad_energy(state: FluidState, geom: ChannelGeometry) -> float:
    """Discrete integral of |grad u|^2 matching the scheme's interior stencil.

    On flat walls with u.n = 0 this equals the integral of |Sigma(u)|^2 / 2.
    """
    dx, dy = geom.dx, geom.dy
    u, v = state.u, state.v
    s = np.sum((np.roll(u, -1, 0) - u) ** 2) / dx ** 2 + np.sum((u[:, 1:] - u[:, :-1]) ** 2) / dy ** 2
    s += np.sum((np.roll(v, -1, 0) - v)[:, 1:-1] ** 2) / dx ** 2 + np.sum((v[:, 1:] - v[:, :-1]) ** 2) / dy ** 2
    return float(s * dx * dy)


def wall_energy_flux(state: FluidState, params: SlipParams, geom: ChannelGeometry) -> float:
    """Integral over both walls of |u_wall|^2."""
    b, t = wall_slip_velocity(state, params, geom)
    return float((np.sum(b ** 2) + np.sum(t ** 2)) * geom.dx)


def strain(U, geom: ChannelGeometry) -> np.ndarray:
    """Sigma(u) = grad u + grad u^T at cell centres, shape (nx, ny, 2, 2).

    ``U`` is a :class:`FluidState` or a cell-centred array (nx, ny, 2).
    """
    if isinstance(U, FluidState):
        G = cell_gradient(cell_velocity(U), geom)
        G[..., 0, 0] = (np.roll(U.u, -1, axis=0) - U.u) / geom.dx
        G[..., 1, 1] = (U.v[:, 1:] - U.v[:, :-1]) / geom.dy
    else:
        G = cell_gradient(np.asarray(U, dtype=float), geom)
    return G + np.swapaxes(G, -1, -2)


def sigma_minus(S: np.ndarray) -> np.ndarray:
    """sup over unit xi of -S : xi xi, i.e. minus the smallest eigenvalue of symmetric 2x2 S."""
    a, b, c = S[..., 0, 0], 0.5 * (S[..., 0, 1] + S[..., 1, 0]), S[..., 1, 1]
    lam_min = 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)
    return -lam_min


def acceleration(times, W, geom: ChannelGeometry) -> np.ndarray:
    """E(w) = dw/dt + w . grad w for cell-centred snapshots W (K, nx, ny, 2)."""
    W = np.asarray(W, dtype=float)
    if len(W) > 1:
        dt = np.gradient(W, np.asarray(times, dtype=float), axis=0)
    else:
        dt = np.zeros_like(W)
    out = np.empty_like(W)
    for k in range(len(W)):
        G = cell_gradient(W[k], geom)
        out[k] = dt[k] + np.einsum("...b,...ab->...a", W[k], G)
    return out


# ---------------------------------------------------------------------------
# runs and energy audits
# ---------------------------------------------------------------------------

@dataclass
class FluidHistory:
    """Record of a fluid run at output times.

    ``visc_int`` and ``wall_int`` are the running time integrals of
    nu * grad_energy and lam * wall_energy_flux (trapezoid over every step).
    ``U`` holds cell-centred velocities, ``walls`` wall tangential velocities
    (K, 2, nx).
    """

    params: SlipParams
    geom: ChannelGeometry
    times: list = field(default_factory=list)
    U: list = field(default_factory=list)
    walls: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    visc_int: list = field(default_factory=list)
    wall_int: list = field(default_factory=list)
    states: list = field(default_factory=list)
    max_div: float = 0.0

    def as_arrays(self):
        return np.asarray(self.times), np.asarray(self.U)


def run_fluid(state: FluidState, params: SlipParams, geom: ChannelGeometry, t_end: float,
              dt: float, record_every: int = 1, keep_states: bool = False) -> FluidHistory:
    """Fixed-step run recording energy budget terms at every ``record_every`` steps."""
    nsteps = int(round(t_end / dt))
    if nsteps < 1 or abs(nsteps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a positive multiple of dt")
    hist = FluidHistory(params=params, geom=geom)
    vi = wi = 0.0

    def rates(s):
        return params.nu * grad_energy(s, geom), params.lam * wall_energy_flux(s, params, geom)

    def record(s):
        hist.times.append(s.t)
        hist.U.append(cell_velocity(s))
        hist.walls.append(np.stack(wall_slip_velocity(s, params, geom)))
        hist.energy.append(energy(s, geom))
        hist.visc_int.append(vi)
        hist.wall_int.append(wi)
        if keep_states:
            hist.states.append(s)

    record(state)
    r0 = rates(state)
    for k in range(1, nsteps + 1):
        new = ns_slip_step(state, params, dt, geom)
        new = replace(new, t=k * dt)
        r1 = rates(new)
        vi += 0.5 * dt * (r0[0] + r1[0])
        wi += 0.5 * dt * (r0[1] + r1[1])
        hist.max_div = max(hist.max_div, float(np.abs(divergence(new.u, new.v, geom)).max()))
        state, r0 = new, r1
        if k % record_every == 0 or k == nsteps:
            record(state)
    hist.final = state
    return hist


def leray_energy_check(history: FluidHistory, tol: float = 0.0) -> dict:
    """Energy inequality audit.

    ``slack`` uses the dissipation nu * int |grad u|^2 (= nu * int |Sigma|^2 / 2 on
    flat walls), which is what the slip Navier-Stokes system actually
    dissipates.  ``slack_displayed`` uses nu * int |Sigma|^2, twice that.
    """
    E = np.asarray(history.energy)
    vi = np.asarray(history.visc_int)
    wi = np.asarray(history.wall_int)
    slack = E[0] - (E + vi + wi)
    slack_disp = E[0] - (E + 2 * vi + wi)
    return {"times": np.asarray(history.times), "energy": E, "viscous": vi, "wall": wi,
            "slack": slack, "slack_displayed": slack_disp,
            "min_slack": float(slack.min()), "violated": bool(slack.min() < -tol)}


def _l2(a, geom):
    return float(np.sqrt(np.sum(a * a) * geom.cell_area))


def _trapz_cum(f, t):
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    if len(f) > 1:
        out[1:] = np.cumsum(0.5 * np.diff(t) * (f[1:] + f[:-1]))
    return out


def dissipative_solution_check(times, U, W, geom: ChannelGeometry, E=None,
                               Q=None, tol: float = 0.0) -> dict:
    """Gronwall-weighted relative energy inequality against the test field history W.

    Returns per output time the LHS int |u-w|^2/2, the RHS, and the residual
    RHS - LHS.  If ``Q`` (a time series) is given, its Gronwall-weighted
    integral is added to the RHS as in the vanishing-viscosity estimate and
    reported separately as ``Q_term``.  The exponent uses right-endpoint
    quadrature of ||sigma(w)^-||_inf.
    """
    t = np.asarray(times, dtype=float)
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    if W.shape != U.shape:
        raise ValueError("test field history must match the velocity history")
    if E is None:
        E = acceleration(t, W, geom)
    dA = geom.cell_area
    lhs = 0.5 * np.sum((U - W) ** 2, axis=(1, 2, 3)) * dA
    sig = np.array([max(sigma_minus(strain(W[k], geom)).max(), 0.0) for k in range(len(t))])
    coupling = np.sum(E * (U - W), axis=(1, 2, 3)) * dA
    S = np.zeros_like(t)
    S[1:] = np.cumsum(2 * sig[1:] * np.diff(t))
    Qs = np.zeros_like(t) if Q is None else np.asarray(Q, dtype=float)
    rhs = np.empty_like(t)
    qterm = np.empty_like(t)
    for k in range(len(t)):
        g = np.exp(S[k] - S[: k + 1])
        rhs[k] = math.exp(S[k]) * lhs[0]
        qterm[k] = 0.0
        if k:
            rhs[k] += np.sum(0.5 * np.diff(t[: k + 1]) * (g[1:] * coupling[1:k + 1] + g[:-1] * coupling[:k]))
            qterm[k] = np.sum(0.5 * np.diff(t[: k + 1]) * (g[1:] * Qs[1:k + 1] + g[:-1] * Qs[:k]))
    resid = rhs + qterm - lhs
    return {"times": t, "lhs": lhs, "rhs": rhs, "Q_term": qterm, "residual": resid,
            "sigma_minus_sup": sig, "min_residual": float(resid.min()),
            "violated": bool(resid.min() < -tol)}


def relative_energy_terms(times, U, W, walls_u, walls_w, params: SlipParams,
                          geom: ChannelGeometry, E=None) -> dict:
    """Every term of the relative energy inequality for slip Navier-Stokes.

    ``walls_u`` and ``walls_w`` are (K, 2, nx) tangential wall velocities.
    Time integrals are cumulative trapezoid sums over the output times.
    """
    t = np.asarray(times, dtype=float)
    U = np.asarray(U, dtype=float)
    W = np.asarray(W, dtype=float)
    if E is None:
        E = acceleration(t, W, geom)
    dA = geom.cell_area
    D = U - W
    rel = 0.5 * np.sum(D * D, axis=(1, 2, 3)) * dA
    conv, visc, cross_v, coup, nSu, nSw, wall, cross_w, nub, nwb = ([] for _ in range(10))
    for k in range(len(t)):
        Gw = cell_gradient(W[k], geom)
        Su = strain(U[k], geom)
        Sw = strain(W[k], geom)
        conv.append(np.sum(D[k][..., :, None] * D[k][..., None, :] * Gw) * dA)
        visc.append(params.nu * 0.5 * np.sum(Su * Su) * dA)
        cross_v.append(params.nu * 0.5 * np.sum(Su * Sw) * dA)
        coup.append(np.sum(E[k] * D[k]) * dA)
        nSu.append(_l2(Su, geom))
        nSw.append(_l2(Sw, geom))
        wu, ww = np.asarray(walls_u[k]), np.asarray(walls_w[k])
        wall.append(params.lam * np.sum(wu * wu) * geom.dx)
        cross_w.append(params.lam * np.sum(wu * ww) * geom.dx)
        nub.append(math.sqrt(np.sum(wu * wu) * geom.dx))
        nwb.append(math.sqrt(np.sum(ww * ww) * geom.dx))
    out = {"times": t, "relative_energy": rel}
    for name, series in (("convective", conv), ("viscous", visc), ("cross_viscous", cross_v),
                         ("coupling", coup), ("wall", wall), ("cross_wall", cross_w)):
        out[name] = np.asarray(series)
        out[name + "_int"] = _trapz_cum(series, t)
    out["norm_Sigma_u"] = np.asarray(nSu)
    out["norm_Sigma_w"] = np.asarray(nSw)
    out["norm_u_wall"] = np.asarray(nub)
    out["norm_w_wall"] = np.asarray(nwb)
    out["Q_nu"] = params.nu * out["norm_Sigma_u"] * out["norm_Sigma_w"] + params.lam * out["norm_u_wall"] * out["norm_w_wall"]
    lhs = rel + out["convective_int"] + out["viscous_int"] + out["wall_int"]
    rhs = rel[0] + out["coupling_int"] + out["cross_viscous_int"] + out["cross_wall_int"]
    out["residual"] = rhs - lhs
    return out


def wall_velocities_cc(U: np.ndarray) -> np.ndarray:
    """Tangential wall velocity extrapolated from a cell-centred field, shape (2, nx)."""
    b, t = wall_extrapolate(U)
    return np.stack([b[..., 0], t[..., 0]])
