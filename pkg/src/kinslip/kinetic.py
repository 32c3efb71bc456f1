"""Scaled kinetic equation on the periodic channel with accommodation walls.

    dF/dt + (1/eps) v . grad_x F = eps^-(2+q) C(F)

One step is the symmetric composition
    X(dt/2) Y(dt/2) C(dt) Y(dt/2) X(dt/2)
of finite-volume transport sweeps X, Y and an exact (BGK) or implicit
(quadrature kernel) collision substep.  The field array has shape
(nx, ny, n_nodes).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .collision import BGKModel, CollisionKernel, bgk_relax, quadrature_relax
from .fields import ChannelGeometry
from .lattice import VelocityLattice, second_moment
from . import _kernels as _k
from .wall import WallSpec, apply_accommodation

SCHEMES = ("upwind", "minmod", "linear")
TOL_BC = 1e-10
TOL_NEG = 1e-12


class KineticSolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class AlphaLaw:
    """alpha(eps) = c * eps^p."""

    c: float = 1.0
    p: float = 1.0

    def __call__(self, eps: float) -> float:
        a = self.c * eps ** self.p
        if not 0.0 <= a <= 1.0:
            raise ValueError(f"accommodation law gives alpha = {a} outside [0, 1] at eps = {eps}")
        return a


@dataclass(frozen=True)
class ScalingRegime:
    epsilon: float
    q: float = 1.0
    alpha_law: AlphaLaw = field(default_factory=AlphaLaw)

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not self.q > 0:
            raise ValueError("q must be positive")
        self.alpha_law(self.epsilon)

    @property
    def alpha(self) -> float:
        return self.alpha_law(self.epsilon)

    def walls(self):
        """Bottom (normal -e2) and top (normal +e2) wall specs."""
        a = self.alpha
        return WallSpec((0.0, -1.0), a), WallSpec((0.0, 1.0), a)


@dataclass
class KineticField:
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if np.any(self.values < -TOL_NEG):
            raise KineticSolverError("negative distribution values")


# ---------------------------------------------------------------------------
# initial data and moments
# ---------------------------------------------------------------------------

def _sample_velocity(u_in, geom: ChannelGeometry):
    """Cell-centre velocity and wall normal components for the accepted inputs."""
    from .fluid import FluidState, cell_velocity
    if isinstance(u_in, FluidState):
        U = cell_velocity(u_in)
        walls = np.concatenate([u_in.v[:, 0], u_in.v[:, -1]])
    elif callable(u_in):
        X, Y = geom.centers()
        U = np.asarray(u_in(X, Y), dtype=float)
        x = geom.xc
        walls = np.concatenate([np.asarray(u_in(x, np.zeros_like(x)))[..., 1],
                                np.asarray(u_in(x, np.ones_like(x)))[..., 1]])
    else:
        U = np.asarray(u_in, dtype=float)
        walls = np.zeros(1)
    if U.shape != (geom.nx, geom.ny, 2):
        raise ValueError(f"velocity field must have shape {(geom.nx, geom.ny, 2)}, got {U.shape}")
    return U, walls


def init_well_prepared(u_in, epsilon: float, lattice: VelocityLattice,
                       geom: ChannelGeometry) -> KineticField:
    """F = M_{1, eps u_in(x), 1} in every cell.

    ``u_in`` is a callable (x, y) -> (..., 2), a :class:`FluidState`, or a
    cell-centred array (nx, ny, 2).
    """
    U, walls = _sample_velocity(u_in, geom)
    if np.abs(walls).max() > TOL_BC:
        raise ValueError(f"initial velocity is not tangential at the walls "
                         f"(normal component {np.abs(walls).max():.2e})")
    return KineticField(local_maxwellian(1.0, epsilon * U, 1.0, lattice), 0.0)


def local_maxwellian(rho, u, theta, lattice: VelocityLattice) -> np.ndarray:
    """Analytic Maxwellian values for fields rho (...), u (..., N), theta (...)."""
    rho = np.asarray(rho, dtype=float)
    theta = np.asarray(theta, dtype=float)
    u = np.asarray(u, dtype=float)
    d = lattice.nodes - u[..., None, :]
    return (rho[..., None] * np.exp(-np.sum(d * d, axis=-1) / (2 * theta[..., None]))
            / (2 * np.pi * theta[..., None]) ** (lattice.dim / 2))


def moments_velocity(F, epsilon: float, lattice: VelocityLattice) -> np.ndarray:
    """(1/eps) times the plain-measure first moment of F in every cell."""
    F = F.values if isinstance(F, KineticField) else np.asarray(F)
    return (F * lattice.plain) @ lattice.nodes / epsilon


def hydro_fields(F, lattice: VelocityLattice):
    """Density, bulk velocity and temperature in every cell."""
    from .collision import moments
    F = F.values if isinstance(F, KineticField) else np.asarray(F)
    return moments(F, lattice)


def total_mass(F, lattice: VelocityLattice, geom: ChannelGeometry) -> float:
    F = F.values if isinstance(F, KineticField) else np.asarray(F)
    return float(np.sum(F @ lattice.plain) * geom.cell_area)


# ---------------------------------------------------------------------------
# transport
# ---------------------------------------------------------------------------

_SCHEME_CODE = {"upwind": _k.UPWIND, "minmod": _k.MINMOD, "linear": _k.LINEAR}


def _sweep_x(F, tau, eps, geom, lattice, scheme):
    return _k.sweep_x(F, lattice.nodes[:, 0].copy(), tau / (eps * geom.dx), _SCHEME_CODE[scheme])


def _edge_slopes(F, scheme):
    """One-sided slopes of the first and last cell rows (clipped for positivity under minmod)."""
    if scheme == "upwind":
        z = np.zeros_like(F[:, 0])
        return z, z
    s0 = F[:, 1] - F[:, 0]
    s1 = F[:, -1] - F[:, -2]
    if scheme == "minmod":
        s0 = np.clip(s0, -2 * F[:, 0], 2 * F[:, 0])
        s1 = np.clip(s1, -2 * F[:, -1], 2 * F[:, -1])
    return s0, s1


def _sweep_y(F, tau, eps, geom, lattice, scheme, walls):
    vy = lattice.nodes[:, 1]
    lam = tau / (eps * geom.dy)
    c = np.abs(vy) * lam
    s0, s1 = _edge_slopes(F, scheme)
    bottom, top = walls
    b = apply_accommodation(F[:, 0] - 0.5 * (1 - c) * s0, bottom, lattice)   # outgoing: vy < 0
    t = apply_accommodation(F[:, -1] + 0.5 * (1 - c) * s1, top, lattice)     # outgoing: vy > 0
    Fn = _k.sweep_y(F, vy.copy(), lam, _SCHEME_CODE[scheme], b, t,
                    np.ascontiguousarray(s0), np.ascontiguousarray(s1))
    return Fn, b, t


# ---------------------------------------------------------------------------
# stepping
# ---------------------------------------------------------------------------

def max_dt(regime: ScalingRegime, geom: ChannelGeometry, lattice: VelocityLattice,
           cfl: float = 0.9) -> float:
    """Advective limit cfl * eps * min(dx, dy) / V_max with V_max the lattice cutoff."""
    return cfl * regime.epsilon * min(geom.dx, geom.dy) / lattice.cutoff


def step(F, dt: float, regime: ScalingRegime, model, walls, geom: ChannelGeometry,
         lattice: VelocityLattice, scheme: str = "upwind", cfl: float = 0.9,
         record: dict | None = None, table=None):
    """Advance F by one Strang step; returns the new array (or KineticField).

    If ``record`` is a dict it receives the wall face states of each y sweep
    as ``traces`` = [(duration, bottom (nx, n), top (nx, n)), ...] and the
    collision substep states ``relax`` = (F_before, F_after).
    """
    wrap = isinstance(F, KineticField)
    arr = F.values if wrap else np.asarray(F, dtype=float)
    if scheme not in SCHEMES:
        raise ValueError(f"unknown transport scheme {scheme!r}")
    if dt > max_dt(regime, geom, lattice, cfl) * (1 + 1e-12):
        raise KineticSolverError(f"time step {dt:.3e} violates the CFL limit "
                                 f"{max_dt(regime, geom, lattice, cfl):.3e}")
    eps = regime.epsilon
    h = 0.5 * dt
    traces = []
    G = _sweep_x(arr, h, eps, geom, lattice, scheme)
    G, b1, t1 = _sweep_y(G, h, eps, geom, lattice, scheme, walls)
    traces.append((h, b1, t1))
    stiff = dt / eps ** (2 + regime.q)
    pre = G
    if isinstance(model, BGKModel):
        G, _ = bgk_relax(G, stiff / model.tau, lattice)
    elif isinstance(model, CollisionKernel) and model.kind == "quadrature-boltzmann":
        if table is None:
            raise ValueError("quadrature kernel needs a reaction table")
        G = quadrature_relax(G, stiff, table, lattice)
    else:
        raise ValueError(f"unsupported collision model {model!r}")
    post = G
    G, b2, t2 = _sweep_y(G, h, eps, geom, lattice, scheme, walls)
    traces.append((h, b2, t2))
    G = _sweep_x(G, h, eps, geom, lattice, scheme)
    if not np.all(np.isfinite(G)):
        raise KineticSolverError("non-finite distribution values")
    mn = G.min()
    if mn < -TOL_NEG * max(1.0, arr.max()):
        raise KineticSolverError(f"negative distribution value {mn:.3e}; reduce dt or use upwind")
    if record is not None:
        record["traces"] = traces
        record["relax"] = (pre, post)
    if wrap:
        return KineticField(G, F.t + dt)
    return G


@dataclass
class StepRecord:
    t0: float
    dt: float
    F0: np.ndarray
    F1: np.ndarray
    traces: list
    relax: tuple


@dataclass
class KineticRun:
    """Result of :func:`run_kinetic`: final field, mass series and optional records."""

    final: KineticField
    times: list
    mass: list
    snapshots: list = field(default_factory=list)
    records: list = field(default_factory=list)
    nsteps: int = 0

    @property
    def mass_drift(self) -> float:
        m = np.asarray(self.mass)
        return float(np.max(np.abs(m - m[0])) / abs(m[0]))


def choose_dt(regime: ScalingRegime, geom: ChannelGeometry, lattice: VelocityLattice,
              t_end: float, tau: float = 1.0, cfl: float = 0.9, s_max: float | None = None) -> float:
    """Largest dt dividing t_end under the CFL limit and, optionally, a cap on
    the collision stiffness s = dt / (eps^(2+q) tau)."""
    dt = max_dt(regime, geom, lattice, cfl)
    if s_max is not None:
        dt = min(dt, s_max * tau * regime.epsilon ** (2 + regime.q))
    n = max(1, math.ceil(t_end / dt - 1e-9))
    return t_end / n


def run_kinetic(F0, regime: ScalingRegime, model, geom: ChannelGeometry, lattice: VelocityLattice,
                t_end: float, dt: float, scheme: str = "upwind", cfl: float = 0.9,
                monitors: tuple = (), snapshot_every: int = 0, keep_records: bool = False,
                table=None, snapshot_hook: Callable | None = None) -> KineticRun:
    """Fixed-step run.  Each monitor is called as ``monitor(StepRecord)`` after every step."""
    field_ = F0 if isinstance(F0, KineticField) else KineticField(np.asarray(F0, float))
    nsteps = int(round(t_end / dt))
    if nsteps < 1 or abs(nsteps * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError("t_end must be a positive multiple of dt")
    walls = regime.walls()
    F = field_.values
    t = field_.t
    run = KineticRun(final=field_, times=[t], mass=[total_mass(F, lattice, geom)])
    if snapshot_every:
        run.snapshots.append((t, hydro_fields(F, lattice)))
        if snapshot_hook:
            snapshot_hook(t, F)
    want = bool(monitors) or keep_records
    for k in range(1, nsteps + 1):
        rec = {} if want else None
        Fn = step(F, dt, regime, model, walls, geom, lattice, scheme, cfl, rec, table)
        t1 = field_.t + k * dt
        if want:
            sr = StepRecord(t1 - dt, dt, F, Fn, rec["traces"], rec["relax"])
            for m in monitors:
                m(sr)
            if keep_records:
                run.records.append(sr)
        F = Fn
        run.times.append(t1)
        run.mass.append(total_mass(F, lattice, geom))
        if snapshot_every and (k % snapshot_every == 0 or k == nsteps):
            run.snapshots.append((t1, hydro_fields(F, lattice)))
            if snapshot_hook:
                snapshot_hook(t1, F)
    run.final = KineticField(F, field_.t + nsteps * dt)
    run.nsteps = nsteps
    return run


# ---------------------------------------------------------------------------
# momentum budget
# ---------------------------------------------------------------------------

class MomentumBudget:
    """Monitor evaluating both sides of the weak momentum identity against a test field.

    ``residual`` is interior - boundary - (eps int w.v F (t) - eps int w(0).v F(0)),
    interior = int_0^t int (eps v . dw/dt + v v : grad w) F (trapezoid in time),
    boundary = alpha int_0^t int_walls (w.v)(v.n)_+ F over the recorded wall states.
    """

    def __init__(self, w_field, regime: ScalingRegime, geom: ChannelGeometry,
                 lattice: VelocityLattice):
        self.w, self.reg, self.geom, self.lat = w_field, regime, geom, lattice
        self.interior = 0.0
        self.boundary = 0.0
        self.start = None
        self.times, self.residual = [], []
        self._last = None

    def _integrand(self, t, F):
        lat, eps = self.lat, self.reg.epsilon
        s = self.w.sample(t, self.geom)
        Fp = F * lat.plain
        m1 = Fp @ lat.nodes                                  # (nx, ny, 2)
        P2 = second_moment(Fp, lat)
        dtw = s.E - np.einsum("...b,...ab->...a", s.w, s.grad)
        val = eps * np.sum(m1 * dtw) + np.einsum("xyab,xyab->", P2, s.grad)
        return val * self.geom.cell_area, eps * np.sum(s.w * m1) * self.geom.cell_area

    def _wall(self, t, bottom, top):
        lat = self.lat
        s = self.w.sample(t, self.geom)
        tot = 0.0
        for trace, wv, normal in ((bottom, s.w_bottom, -1.0), (top, s.w_top, 1.0)):
            vn = normal * lat.nodes[:, 1]
            k = np.where(vn > 0, vn, 0.0) * lat.plain
            wdotv = wv @ lat.nodes.T                         # (nx, n)
            tot += np.sum(wdotv * trace * k) * self.geom.dx
        return self.reg.alpha * tot

    def __call__(self, rec: StepRecord):
        if self.start is None:
            i0, e0 = self._integrand(rec.t0, rec.F0)
            self.start = e0
            self._last = i0
            self.times.append(rec.t0)
            self.residual.append(0.0)
        i1, e1 = self._integrand(rec.t0 + rec.dt, rec.F1)
        self.interior += 0.5 * rec.dt * (self._last + i1)
        self._last = i1
        tsub = rec.t0
        for dur, b, t in rec.traces:
            self.boundary += dur * self._wall(tsub + 0.5 * dur, b, t)
            tsub += dur
        self.times.append(rec.t0 + rec.dt)
        self.residual.append(self.interior - self.boundary - (e1 - self.start))

    def report(self) -> dict:
        r = np.asarray(self.residual)
        return {"times": np.asarray(self.times), "residual": r,
                "max_abs_residual": float(np.abs(r).max()) if len(r) else 0.0}


def momentum_budget_residual(history, w_field, regime: ScalingRegime, geom: ChannelGeometry,
                             lattice: VelocityLattice) -> dict:
    """Replay stored step records (``KineticRun.records`` or a list) through :class:`MomentumBudget`."""
    recs = history.records if isinstance(history, KineticRun) else history
    mon = MomentumBudget(w_field, regime, geom, lattice)
    for r in recs:
        mon(r)
    return mon.report()
