"""Entropy functionals, wall information and the relative entropy audit.

Wall quantities use the lattice outgoing normalization c_out (the lattice
value of the integral of (v.n)_+ M) wherever the continuum formula has
1/sqrt(2 pi), so that Jensen's inequality and the boundary lemma hold exactly
on the lattice.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import xlogy

from .collision import BGKModel, ReactionTable, equilibrium, quadrature_entropy_production
from .fields import ChannelGeometry
from .lattice import VelocityLattice, normal_velocity, second_moment
from .wall import diffuse_flux, diffuse_flux_average, outgoing_normalization

TOL_SIGN = 1e-10
TOL_SIGN_QUAD = 1e-6


class DomainError(ValueError):
    pass


# ---------------------------------------------------------------------------
# scalar functions
# ---------------------------------------------------------------------------

def h(z):
    """(1+z) ln(1+z) - z for z >= -1."""
    z = np.asarray(z, dtype=float)
    if np.any(z < -1):
        raise DomainError("h is defined for z >= -1")
    return xlogy(1 + z, 1 + z) - z


def r(z):
    """z ln(1+z) for z > -1."""
    z = np.asarray(z, dtype=float)
    if np.any(z <= -1):
        raise DomainError("r is defined for z > -1")
    return z * np.log1p(z)


def h_star(p):
    """Legendre dual of h: e^p - p - 1."""
    p = np.asarray(p, dtype=float)
    return np.expm1(p) - p


def _h_ratio(F, G):
    """Pointwise G h(F/G - 1), using log1p so that F close to G keeps full precision."""
    z = F / G - 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        zl = np.where(F > 0, (1 + z) * np.log1p(z), 0.0)
    return G * (zl - z)


def relative_entropy(F, G, lattice: VelocityLattice, geom: ChannelGeometry | None = None) -> float:
    """Sum over cells and nodes of h(F/G - 1) G times plain measure (and cell area)."""
    F = np.asarray(F, dtype=float)
    G = np.asarray(G, dtype=float)
    if np.any(G <= 0):
        raise DomainError("reference distribution must be positive")
    if np.any(F < 0):
        raise DomainError("distribution must be nonnegative")
    val = float(np.sum(_h_ratio(F, G) @ lattice.plain))
    return val * (geom.cell_area if geom is not None else 1.0)


def bgk_dissipation(F, lattice: VelocityLattice):
    """Per-cell plain-measure sum of (F - M_F) ln(F / M_F) (BGK stand-in for P)."""
    F = np.asarray(F, dtype=float)
    if np.any(F <= 0):
        raise DomainError("entropy production needs strictly positive F")
    MF = equilibrium(F, lattice)
    return ((F - MF) * np.log(F / MF)) @ lattice.plain


def entropy_production(F, model, lattice: VelocityLattice, table: ReactionTable | None = None):
    """Per-cell production: ``bgk_dissipation`` for BGK, the reaction sum of r for the kernel."""
    if isinstance(model, BGKModel):
        return bgk_dissipation(F, lattice)
    if table is None:
        raise ValueError("quadrature production needs a reaction table")
    return quadrature_entropy_production(F, table, lattice)


# ---------------------------------------------------------------------------
# wall functionals
# ---------------------------------------------------------------------------

def darrozes_guiraud(F_trace, n, lattice: VelocityLattice):
    """c_out (Lambda(h(F/M - 1)) - h(Lambda(F/M) - 1)) per wall cell, >= 0 by Jensen."""
    F = np.asarray(F_trace, dtype=float)
    if np.any(F[..., normal_velocity(n, lattice) > 0] < 0):
        raise DomainError("outgoing wall data must be nonnegative")
    G = F / lattice.maxwell
    lam = diffuse_flux_average(G, n, lattice)
    return outgoing_normalization(n, lattice) * (diffuse_flux_average(h(np.maximum(G, 0) - 1), n, lattice)
                                                 - h(lam - 1))


def C_of_w(w_sup: float, lattice: VelocityLattice, n=None) -> float:
    """Half-space lattice quadrature of h*(2 w_sup |v|) (v.n)_+ M / 2."""
    if w_sup < 0:
        raise DomainError("w_sup must be nonnegative")
    if w_sup == 0:
        return 0.0
    if 2 * w_sup > lattice.cutoff - 3:
        warnings.warn(f"C(w) with |w| = {w_sup}: the integrand peaks near the lattice cutoff; "
                      "tail truncation dominates", RuntimeWarning, stacklevel=2)
    n = np.eye(lattice.dim)[0] if n is None else n
    vn = normal_velocity(n, lattice)
    speed = np.linalg.norm(lattice.nodes, axis=1)
    k = np.where(vn > 0, vn, 0.0) * lattice.weights
    return float(0.5 * h_star(2 * w_sup * speed) @ k)


def outgoing_J(n, lattice: VelocityLattice) -> float:
    """Lattice value of the integral of min((v.n)_+^2, 1) M."""
    vn = normal_velocity(n, lattice)
    return float(np.minimum(np.maximum(vn, 0.0) ** 2, 1.0) @ lattice.weights)


def boundary_control_check(F_trace, w_at_wall, alpha: float, epsilon: float, n,
                           lattice: VelocityLattice, tol: float = TOL_SIGN,
                           w_sup: float | None = None) -> dict:
    """Evaluate both sides of the boundary lemma per wall cell.

    LHS = (alpha/eps^2) int (w.v)(v.n)_+ F,
    RHS = alpha/(2 eps^3) DG + (alpha/eps) C(w_sup) Lambda(F/M) on cells where w != 0.
    ``w_sup`` defaults to the largest |w| among the supplied wall values.
    """
    if not 0 < epsilon <= 1:
        raise DomainError("the boundary lemma needs 0 < eps <= 1")
    F = np.asarray(F_trace, dtype=float)
    w = np.asarray(w_at_wall, dtype=float)
    vn = normal_velocity(n, lattice)
    nn = np.asarray(n, dtype=float)
    if np.any(np.abs(w @ nn) > 1e-12):
        raise DomainError("test field must be tangential at the wall")
    k = np.where(vn > 0, vn, 0.0) * lattice.plain
    wv = w @ lattice.nodes.T
    lhs = alpha / epsilon ** 2 * np.sum(wv * F * k, axis=-1)
    dg = darrozes_guiraud(F, n, lattice)
    wn = np.linalg.norm(w, axis=-1)
    Cw = C_of_w(float(wn.max()) if w_sup is None else float(w_sup), lattice, n)
    rhs = alpha / (2 * epsilon ** 3) * dg + alpha / epsilon * Cw * diffuse_flux(F, n, lattice) * (wn > 0)
    slack = rhs - lhs
    return {"lhs": lhs, "rhs": rhs, "slack": slack, "violations": int(np.sum(slack < -tol * np.maximum(1, np.abs(rhs))))}


def outgoing_flux_bound_check(F_trace, eta: float, n, lattice: VelocityLattice,
                              tol: float = TOL_SIGN) -> dict:
    """Outgoing mass flux against the DG / second-moment bound.

    ``slack`` is the lattice form proved with the constant J kept,
    (c_out/J)(DG/h(eta) + int F (v.n)^2 / (1-eta)) - int F (v.n)_+;
    ``slack_displayed`` uses DG/h(eta) + int F (v.n)^2 / (sqrt(2 pi)(1-eta)).
    """
    if not 0 < eta < 1:
        raise DomainError("eta must lie in (0, 1)")
    F = np.asarray(F_trace, dtype=float)
    vn = normal_velocity(n, lattice)
    lhs = np.sum(F * np.where(vn > 0, vn, 0.0) * lattice.plain, axis=-1)
    dg = darrozes_guiraud(F, n, lattice)
    m2 = np.sum(F * vn ** 2 * lattice.plain, axis=-1)
    J = outgoing_J(n, lattice)
    c_out = outgoing_normalization(n, lattice)
    hn = float(h(eta))
    rhs = c_out / J * (dg / hn + m2 / (1 - eta))
    rhs_disp = dg / hn + m2 / (math.sqrt(2 * math.pi) * (1 - eta))
    slack = rhs - lhs
    return {"lhs": lhs, "rhs": rhs, "slack": slack, "J": J, "dg_term": dg / hn,
            "slack_displayed": rhs_disp - lhs,
            "violations": int(np.sum(slack < -tol * np.maximum(1, np.abs(rhs)))),
            "violations_displayed": int(np.sum(rhs_disp - lhs < -tol * np.maximum(1, np.abs(rhs_disp))))}


# ---------------------------------------------------------------------------
# relative entropy audit along a kinetic run
# ---------------------------------------------------------------------------

@dataclass
class EntropyReport:
    """Time series of every term of the final relative entropy inequality.

    All integrated terms are cumulative from the start of the run and carry
    their inequality prefactors.  ``residual`` = RHS - LHS of the displayed
    final inequality; ``residual_lattice`` uses the lattice constants
    (c_out, J) of the outgoing-flux bound; ``residual_basic`` is the
    inequality before the boundary lemma.  The production column is the
    exact entropy drop of the BGK relaxation substeps (``bgk_dissipation``
    flag) or the quadrature-kernel production.
    """

    times: list = field(default_factory=list)
    H_rel: list = field(default_factory=list)
    P_total: list = field(default_factory=list)
    DG_total: list = field(default_factory=list)
    wall_flux_second_moment: list = field(default_factory=list)
    grad_term: list = field(default_factory=list)
    E_term: list = field(default_factory=list)
    DG_term: list = field(default_factory=list)
    wall_term: list = field(default_factory=list)
    boundary_term: list = field(default_factory=list)
    residual: list = field(default_factory=list)
    residual_lattice: list = field(default_factory=list)
    residual_basic: list = field(default_factory=list)
    boundary_control_min_slack: list = field(default_factory=list)
    outflux_min_slack: list = field(default_factory=list)
    outflux_min_slack_displayed: list = field(default_factory=list)
    production_kind: str = "bgk_dissipation"
    C_w: float = 0.0
    J: float = 0.0
    w_sup: float = 0.0

    COLUMNS = ("times", "H_rel", "P_total", "DG_total", "wall_flux_second_moment", "grad_term",
               "E_term", "DG_term", "wall_term", "boundary_term", "residual", "residual_lattice",
               "residual_basic", "boundary_control_min_slack", "outflux_min_slack",
               "outflux_min_slack_displayed")

    def rows(self):
        return [dict(zip(self.COLUMNS, vals)) for vals in zip(*(getattr(self, c) for c in self.COLUMNS))]

    def summary(self, tol: float = TOL_SIGN_QUAD) -> dict:
        res = np.asarray(self.residual)
        bc = np.asarray(self.boundary_control_min_slack)
        of = np.asarray(self.outflux_min_slack)
        return {
            "min_residual": float(res.min()),
            "min_residual_lattice": float(np.min(self.residual_lattice)),
            "min_residual_basic": float(np.min(self.residual_basic)),
            "min_boundary_control_slack": float(bc.min()) if len(bc) else 0.0,
            "min_outflux_slack": float(of.min()) if len(of) else 0.0,
            "min_outflux_slack_displayed": float(np.min(self.outflux_min_slack_displayed)) if len(of) else 0.0,
            "min_P_total": float(np.min(self.P_total)),
            "min_DG_total": float(np.min(self.DG_total)),
            "final_wall_term": float(self.wall_term[-1]),
            "production_kind": self.production_kind,
            "C_w": self.C_w, "J": self.J, "w_sup": self.w_sup,
            "violated": bool(res.min() < -tol or (len(bc) and bc.min() < -tol) or (len(of) and of.min() < -tol)),
        }


class RelativeEntropyAudit:
    """Monitor accumulating the relative entropy inequality terms step by step.

    Parameters
    ----------
    w_field : object with ``sample(t, geom)`` and ``sup_norm()``
    regime : ScalingRegime
    eta : float
        parameter of the outgoing-flux bound (the final inequality uses 1/2)
    every : int
        record a report row every ``every`` steps (the last step always)
    table : ReactionTable, optional
        when given, the production column is the quadrature-kernel production
    """

    def __init__(self, w_field, regime, geom: ChannelGeometry, lattice: VelocityLattice,
                 eta: float = 0.5, every: int = 1, w_sup: float | None = None, table=None):
        self.w, self.reg, self.geom, self.lat = w_field, regime, geom, lattice
        self.eta, self.every = eta, every
        self.report = EntropyReport()
        self.w_sup = float(w_field.sup_norm() if w_sup is None else w_sup)
        nb, nt = np.array([0.0, -1.0]), np.array([0.0, 1.0])
        self.normals = (nb, nt)
        self.C = C_of_w(self.w_sup, lattice, nt)
        self.J = outgoing_J(nt, lattice)
        self.c_out = outgoing_normalization(nt, lattice)
        self.report.C_w, self.report.J, self.report.w_sup = self.C, self.J, self.w_sup
        if table is not None:
            self.report.production_kind = "quadrature_P"
        self.nstep = 0
        self.acc = dict(P=0.0, DG=0.0, W2=0.0, grad=0.0, E=0.0, bnd=0.0)
        self.H0 = None
        self._last = None
        self.bc_min = math.inf
        self.of_min = math.inf
        self.of_min_disp = math.inf

    # -- pieces -----------------------------------------------------------
    def _H(self, t, F, s=None):
        eps = self.reg.epsilon
        s = self.w.sample(t, self.geom) if s is None else s
        from .kinetic import local_maxwellian
        G = local_maxwellian(1.0, eps * s.w, 1.0, self.lat)
        return relative_entropy(F, G, self.lat, self.geom) / eps ** 2

    def _bulk(self, t, F):
        """(1/eps^2) int (v - eps w)^2 : grad w F and (1/eps) int (v - eps w) . E F at time t.

        The trace of the discrete gradient is removed first: it vanishes for a
        solenoidal field, but a discretization residue would be amplified by
        1/eps^2 through the pressure part of the second moment.
        """
        eps, lat = self.reg.epsilon, self.lat
        s = self.w.sample(t, self.geom)
        Fp = F * lat.plain
        rho = Fp.sum(axis=-1)
        m1 = Fp @ lat.nodes
        P2 = second_moment(Fp, lat)
        w = s.w
        G = s.grad - np.einsum("...aa->...", s.grad)[..., None, None] * np.eye(2) / 2
        T = P2 - eps * (w[..., :, None] * m1[..., None, :] + m1[..., :, None] * w[..., None, :]) \
            + eps ** 2 * rho[..., None, None] * w[..., :, None] * w[..., None, :]
        grad = np.sum(T * G) / eps ** 2
        Et = np.sum(s.E * (m1 - eps * rho[..., None] * w)) / eps
        dA = self.geom.cell_area
        return grad * dA, Et * dA, s

    def _walls(self, t, dur, bottom, top):
        lat, eps, alpha = self.lat, self.reg.epsilon, self.reg.alpha
        s = self.w.sample(t, self.geom)
        dx = self.geom.dx
        for trace, wv, n in ((bottom, s.w_bottom, self.normals[0]), (top, s.w_top, self.normals[1])):
            vn = normal_velocity(n, lat)
            dg = darrozes_guiraud(trace, n, lat)
            supp = np.linalg.norm(wv, axis=-1) > 0
            self.acc["DG"] += dur * dx * float(np.sum(dg))
            self.acc["W2"] += dur * dx * float(np.sum((trace @ (lat.plain * vn ** 2)) * supp))
            k = np.where(vn > 0, vn, 0.0) * lat.plain
            wt = wv.copy()
            wt[:, 1] = 0.0
            self.acc["bnd"] += dur * dx * alpha / eps ** 2 * float(np.sum((wt @ lat.nodes.T) * trace * k))
            if alpha > 0:
                bc = boundary_control_check(trace, wt, alpha, eps, n, lat, w_sup=self.w_sup)
                self.bc_min = min(self.bc_min, float(bc["slack"].min()))
            of = outgoing_flux_bound_check(trace, self.eta, n, lat)
            self.of_min = min(self.of_min, float(of["slack"].min()))
            self.of_min_disp = min(self.of_min_disp, float(of["slack_displayed"].min()))

    # -- monitor protocol ---------------------------------------------------
    def __call__(self, rec):
        eps = self.reg.epsilon
        if self.H0 is None:
            self.H0 = self._H(rec.t0, rec.F0)
            g0, e0, _ = self._bulk(rec.t0, rec.F0)
            self._last = (g0, e0)
            self._row(rec.t0, self.H0)
        pre, post = rec.relax
        # The relaxation conserves mass, momentum and energy exactly and ln M_{eps w}
        # lies in their span, so its drop of (1/eps^2) H(F|M_{eps w}) is the drop of
        # the plain entropy sum F ln F.
        drop = float(np.sum((xlogy(pre, pre) - xlogy(post, post)) @ self.lat.plain))
        self.acc["P"] += drop * self.geom.cell_area / eps ** 2
        tsub = rec.t0
        for dur, b, t in rec.traces:
            self._walls(tsub + 0.5 * dur, dur, b, t)
            tsub += dur
        g1, e1, _ = self._bulk(rec.t0 + rec.dt, rec.F1)
        self.acc["grad"] += 0.5 * rec.dt * (self._last[0] + g1)
        self.acc["E"] += 0.5 * rec.dt * (self._last[1] + e1)
        self._last = (g1, e1)
        self.nstep += 1
        if self.nstep % self.every == 0:
            self._row(rec.t0 + rec.dt, self._H(rec.t0 + rec.dt, rec.F1))
        else:
            self._pending = (rec.t0 + rec.dt, rec.F1)

    def finalize(self):
        p = getattr(self, "_pending", None)
        if p is not None and (not self.report.times or self.report.times[-1] < p[0]):
            self._row(p[0], self._H(*p))
        self._pending = None
        return self.report

    def _row(self, t, H):
        eps, alpha, C = self.reg.epsilon, self.reg.alpha, self.C
        a = self.acc
        lhs = H - self.H0
        pref = 1 - 2 * math.sqrt(2 * math.pi) / float(h(0.5)) * C * eps
        dg_term = alpha / (2 * eps ** 3) * pref * a["DG"]
        wall_term = 2 * alpha / eps * C * a["W2"]
        rhs = -a["P"] - dg_term - a["grad"] - a["E"] + wall_term
        pref_l = 1 - 2 * C * eps ** 2 / (self.J * float(h(0.5)))
        rhs_l = -a["P"] - alpha / (2 * eps ** 3) * pref_l * a["DG"] - a["grad"] - a["E"] \
            + 2 * alpha / (eps * self.J) * C * a["W2"]
        rhs_b = -a["P"] - alpha / eps ** 3 * a["DG"] - a["grad"] - a["E"] + a["bnd"]
        R = self.report
        R.times.append(t)
        R.H_rel.append(H)
        R.P_total.append(a["P"])
        R.DG_total.append(a["DG"])
        R.wall_flux_second_moment.append(a["W2"])
        R.grad_term.append(a["grad"])
        R.E_term.append(a["E"])
        R.DG_term.append(dg_term)
        R.wall_term.append(wall_term)
        R.boundary_term.append(a["bnd"])
        R.residual.append(rhs - lhs)
        R.residual_lattice.append(rhs_l - lhs)
        R.residual_basic.append(rhs_b - lhs)
        R.boundary_control_min_slack.append(self.bc_min if self.bc_min < math.inf else 0.0)
        R.outflux_min_slack.append(self.of_min if self.of_min < math.inf else 0.0)
        R.outflux_min_slack_displayed.append(self.of_min_disp if self.of_min_disp < math.inf else 0.0)


def relative_entropy_inequality_audit(history, w_field, regime, geom: ChannelGeometry,
                                      lattice: VelocityLattice, eta: float = 0.5,
                                      every: int = 1) -> EntropyReport:
    """Replay stored step records through :class:`RelativeEntropyAudit`."""
    recs = history.records if hasattr(history, "records") else history
    mon = RelativeEntropyAudit(w_field, regime, geom, lattice, eta=eta, every=every)
    for rec in recs:
        mon(rec)
    return mon.finalize()


def entropic_convergence_gap(F, epsilon: float, g_target, lattice: VelocityLattice,
                             geom: ChannelGeometry) -> float:
    """|(1/eps^2) H(F|M) - (1/2) sum g^2 M| with plain-measure cell sums."""
    F = np.asarray(F, dtype=float)
    M = np.broadcast_to(lattice.maxwell, F.shape)
    H = relative_entropy(F, M, lattice, geom) / epsilon ** 2
    g = np.asarray(g_target, dtype=float)
    q = 0.5 * float(np.sum((g * g) @ lattice.weights)) * geom.cell_area
    return abs(H - q)


def velocity_target(U, lattice: VelocityLattice) -> np.ndarray:
    """g(x, v) = u(x) . v on the phase-space grid for a cell-centred field U (nx, ny, N)."""
    return np.asarray(U) @ lattice.nodes.T
