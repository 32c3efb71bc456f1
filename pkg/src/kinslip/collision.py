"""Collision operators: BGK relaxation and a conservative discrete-velocity Boltzmann kernel.

Distribution values ``F`` are point values on the lattice nodes (trailing axis);
their moments are taken with the plain-measure weights ``lattice.plain``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import MaxwellianParams, VelocityLattice, maxwellian
from . import _kernels as _k

TOL_MOMENT = 1e-10
TOL_SOLVE = 1e-8
TOLERANCES = {"bgk": 1e-10, "quadrature-boltzmann": 1e-6}


class CollisionError(ArithmeticError):
    pass


@dataclass(frozen=True)
class BGKModel:
    tau: float = 1.0

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"relaxation time must be positive, got {self.tau}")

    @property
    def kind(self) -> str:
        return "bgk"


@dataclass(frozen=True)
class CollisionKernel:
    """Collision kernel options.

    The quadrature kernel is b(z, omega) = min(C_b (1+|z|), 1+|z|), constant in
    angle, evaluated on ``angles`` equispaced scattering directions.
    """

    kind: str = "bgk"
    C_b: float = 1.0
    angles: int = 32
    tau: float = 1.0

    def __post_init__(self):
        if self.kind not in ("bgk", "quadrature-boltzmann"):
            raise ValueError(f"unknown collision kind {self.kind!r}")
        if not self.C_b >= 1.0:
            raise ValueError("C_b must be >= 1 so that b >= 1/C_b holds")
        if self.angles < 4:
            raise ValueError("need at least 4 scattering angles")

    def b(self, z):
        z = np.asarray(z, dtype=float)
        return np.minimum(self.C_b * (1.0 + z), 1.0 + z)


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    """Dense linearized collision operator acting on node-indexed functions phi."""

    matrix: np.ndarray
    kernel_basis: np.ndarray
    tol_null: float
    tol_sym: float

    def __call__(self, phi):
        return np.asarray(phi) @ self.matrix.T


# ---------------------------------------------------------------------------
# moments and equilibria
# ---------------------------------------------------------------------------

def invariant_basis(lattice: VelocityLattice) -> np.ndarray:
    """Columns 1, v_1..v_N, |v|^2 evaluated at the nodes, shape (n, N+2)."""
    v = lattice.nodes
    return np.column_stack([np.ones(lattice.size), v, np.sum(v * v, axis=1)])


def moments(F, lattice: VelocityLattice):
    """Return ``(rho, u, theta)`` arrays for F of shape (..., n)."""
    F = np.asarray(F, dtype=float)
    pw = lattice.plain
    rho = F @ pw
    mom = (F * pw) @ lattice.nodes
    with np.errstate(divide="ignore", invalid="ignore"):
        u = mom / rho[..., None]
        e = (F * pw) @ np.sum(lattice.nodes ** 2, axis=1)
        theta = (e / rho - np.sum(u * u, axis=-1)) / lattice.dim
    return rho, u, theta


def local_params(F, lattice: VelocityLattice) -> MaxwellianParams:
    """Density, bulk velocity and temperature of a single-cell distribution."""
    rho, u, theta = moments(np.asarray(F, dtype=float), lattice)
    if not rho > 0:
        raise CollisionError(f"non-physical state: density {rho} <= 0")
    if not theta > 0:
        raise CollisionError(f"non-physical state: temperature {theta} <= 0")
    return MaxwellianParams(float(rho), u, float(theta))


def discrete_equilibrium(F, lattice: VelocityLattice, tol: float = 1e-14, max_iter: int = 30):
    """Lattice Maxwellian exp(a + b.v + c|v|^2) with exactly the moments of F.

    Solved per cell by Newton's method started from the analytic Maxwellian.
    The result shares the plain-measure moments (1, v, |v|^2) of F to roundoff,
    which makes BGK relaxation exactly conservative on the lattice.
    """
    F = np.asarray(F, dtype=float)
    shape = F.shape
    F2 = F.reshape(-1, lattice.size)
    if lattice.dim == 2:
        return _equilibrium_tensor2(F2, lattice, tol, max_iter).reshape(shape)
    B = invariant_basis(lattice)
    nb = B.shape[1]
    BB = (B[:, :, None] * B[:, None, :]).reshape(lattice.size, nb * nb)
    pw = lattice.plain
    target = (F2 * pw) @ B
    rho, u, theta = moments(F2, lattice)
    if np.any(~(rho > 0)) or np.any(~(theta > 0)):
        raise CollisionError("non-physical state in equilibrium solve (rho or theta <= 0)")
    n = lattice.dim
    # analytic guess in the exponential family coordinates
    c = -0.5 / theta
    b = u / theta[:, None]
    a = np.log(rho) - 0.5 * n * np.log(2 * np.pi * theta) - 0.5 * np.sum(u * u, axis=1) / theta
    coef = np.column_stack([a, b, c])
    scale = np.abs(target).max(axis=1) + 1e-300
    converged = False
    for _ in range(max_iter):
        E = np.exp(coef @ B.T)
        Ew = E * pw
        resid = Ew @ B - target
        if converged:
            break
        # one polishing update after the tolerance is met leaves a residual at
        # roundoff level, so no bias accumulates over long runs
        converged = bool(np.all(np.abs(resid).max(axis=1) <= tol * scale))
        jac = (Ew @ BB).reshape(-1, nb, nb)
        coef = coef - np.linalg.solve(jac, resid[..., None])[..., 0]
    else:
        raise CollisionError("lattice equilibrium Newton iteration did not converge")
    return E.reshape(shape)


def _equilibrium_tensor2(F2, lattice: VelocityLattice, tol: float, max_iter: int):
    """Two-dimensional fast path of :func:`discrete_equilibrium`.

    On the tensor lattice exp(a + b.v + c|v|^2) factorizes into one-dimensional
    exponentials, so every moment and Jacobian entry is a product of
    one-dimensional sums of orders 0..4 (compiled kernel, one cell at a time).
    """
    E, status = _k.equilibrium_tensor2(np.ascontiguousarray(F2), lattice.axis_nodes,
                                       lattice.axis_plain, tol, max_iter)
    if status == 1:
        raise CollisionError("non-physical state in equilibrium solve (rho or theta <= 0)")
    if status == 2:
        raise CollisionError("lattice equilibrium Newton iteration did not converge")
    return E


def equilibrium(F, lattice: VelocityLattice, kind: str = "discrete"):
    """Local equilibrium of F: ``discrete`` (moment-exact) or ``analytic`` Maxwellian."""
    if kind == "discrete":
        return discrete_equilibrium(F, lattice)
    if kind == "analytic":
        F = np.asarray(F, dtype=float)
        rho, u, theta = moments(F, lattice)
        d = lattice.nodes - u[..., None, :]
        return rho[..., None] * np.exp(-np.sum(d * d, axis=-1) / (2 * theta[..., None])) \
            / (2 * np.pi * theta[..., None]) ** (lattice.dim / 2)
    raise ValueError(f"unknown equilibrium kind {kind!r}")


def bgk_collision(F, model: BGKModel, lattice: VelocityLattice, eq_kind: str = "discrete"):
    """Q = (M_F - F) / tau."""
    F = np.asarray(F, dtype=float)
    return (equilibrium(F, lattice, eq_kind) - F) / model.tau


def bgk_relax(F, s: float, lattice: VelocityLattice, eq_kind: str = "discrete"):
    """Exact solution of dF/dt = (M_F - F)/tau after scaled time s = t/tau.

    Returns ``(F_new, M_F)``.
    """
    F = np.asarray(F, dtype=float)
    MF = equilibrium(F, lattice, eq_kind)
    return MF + (F - MF) * math.exp(-s), MF


# ---------------------------------------------------------------------------
# discrete-velocity Boltzmann kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ReactionTable:
    """Symmetrized binary reactions (i, j) <-> (k, l) with weights.

    Attributes
    ----------
    idx : ndarray, shape (r, 4)
    weight : ndarray, shape (r,)
    rejected : int
        snapped angle samples dropped because they violated exact energy or
        landed outside the lattice
    accepted : int
    """

    idx: np.ndarray
    weight: np.ndarray
    rejected: int
    accepted: int
    kernel: CollisionKernel = field(repr=False)


def build_reactions(kernel: CollisionKernel, lattice: VelocityLattice) -> ReactionTable:
    """Snap post-collision velocities to the lattice and keep exactly conservative reactions.

    Nodes of a uniform lattice with an even node count sit at half-integer
    multiples of the spacing, so exact momentum and energy conservation can be
    tested in integer arithmetic.
    """
    if lattice.dim != 2:
        raise ValueError("the quadrature Boltzmann kernel needs a 2-D velocity lattice")
    if lattice.rule != "uniform":
        raise ValueError("the quadrature Boltzmann kernel needs the uniform rule")
    hv = lattice.axis_plain[0]
    Aint = np.rint(2 * lattice.nodes / hv).astype(np.int64)  # odd integers
    lookup = {tuple(a): i for i, a in enumerate(Aint)}
    th = 2 * np.pi * (np.arange(kernel.angles) + 0.5) / kernel.angles
    omega = np.column_stack([np.cos(th), np.sin(th)])
    d_omega = 2 * np.pi / kernel.angles
    n = lattice.size
    acc = {}
    rejected = accepted = 0
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            S = Aint[i] + Aint[j]            # 4c/h, even
            Z = Aint[i] - Aint[j]
            e0 = Aint[i] @ Aint[i] + Aint[j] @ Aint[j]
            zlen = math.sqrt(Z @ Z)
            bval = float(kernel.b(zlen * hv / 2)) * hv * hv * d_omega
            for om in omega:
                ideal = (S + zlen * om) / 2.0
                Ak = (2 * np.round((ideal - 1) / 2) + 1).astype(np.int64)  # nearest odd
                Al = S - Ak
                k = lookup.get(tuple(Ak))
                l = lookup.get(tuple(Al))
                if k is None or l is None or Ak @ Ak + Al @ Al != e0:
                    rejected += 1
                    continue
                accepted += 1
                if {k, l} == {i, j}:
                    continue
                pre = tuple(sorted((i, j)))
                post = tuple(sorted((k, l)))
                key = (pre, post) if pre < post else (post, pre)
                acc[key] = acc.get(key, 0.0) + 0.25 * bval
    keys = sorted(acc)
    idx = np.array([[a[0], a[1], b[0], b[1]] for a, b in keys], dtype=np.int64).reshape(-1, 4)
    weight = np.array([acc[k] for k in keys])
    return ReactionTable(idx=idx, weight=weight, rejected=rejected, accepted=accepted,
                         kernel=kernel)


def _project_conservation(Q, lattice: VelocityLattice):
    """Remove any (roundoff) component of Q along the collision invariants."""
    B = invariant_basis(lattice)
    pw = lattice.plain
    G = B.T @ (B * pw[:, None])
    m = ((Q * pw) @ B).reshape(-1, B.shape[1])
    coef = np.linalg.solve(G, m.T).T.reshape(Q.shape[:-1] + (B.shape[1],))
    return Q - coef @ B.T


def _incidence(table: ReactionTable, n: int) -> np.ndarray:
    """Matrix D with D[r] = e_i + e_j - e_k - e_l for reaction r = (i, j, k, l)."""
    D = table.__dict__.get("_incidence")
    if D is None or D.shape[1] != n:
        i, j, k, l = table.idx.T
        r = np.arange(len(table.weight))
        D = np.zeros((len(r), n))
        for cols, sgn in ((i, 1.0), (j, 1.0), (k, -1.0), (l, -1.0)):
            np.add.at(D, (r, cols), sgn)
        object.__setattr__(table, "_incidence", D)
    return D


def boltzmann_collision_quadrature(F, table: ReactionTable, lattice: VelocityLattice):
    """Discrete Boltzmann collision term for F of shape (..., n)."""
    F = np.asarray(F, dtype=float)
    i, j, k, l = table.idx.T
    rate = table.weight * (F[..., k] * F[..., l] - F[..., i] * F[..., j])
    Q = (rate @ _incidence(table, lattice.size)) / lattice.plain  # rate per unit plain measure
    return _project_conservation(Q, lattice)


def quadrature_entropy_production(F, table: ReactionTable, lattice: VelocityLattice):
    """Sum over reactions of r(F_k F_l/(F_i F_j) - 1) F_i F_j weight; >= 0 termwise.

    Equals minus the entropy pairing sum plain*Q*ln F when the reaction weights
    are symmetric, since each reaction contributes (x - y) ln(x/y) >= 0.
    """
    F = np.asarray(F, dtype=float)
    if np.any(F <= 0):
        raise CollisionError("entropy production needs strictly positive F")
    i, j, k, l = table.idx.T
    pre = F[..., i] * F[..., j]
    post = F[..., k] * F[..., l]
    z = post / pre - 1.0
    return np.sum(table.weight * z * np.log1p(z) * pre, axis=-1)


def quadrature_relax(F, dt: float, table: ReactionTable, lattice: VelocityLattice,
                     iters: int = 50, tol: float = 1e-12):
    """Implicit-in-collision step F_new = F + dt Q(F_new) by fixed-point/Picard iteration."""
    F = np.asarray(F, dtype=float)
    G = F.copy()
    for _ in range(iters):
        Gn = F + dt * boltzmann_collision_quadrature(G, table, lattice)
        if np.max(np.abs(Gn - G)) <= tol * max(np.max(np.abs(G)), 1e-300):
            return Gn
        G = Gn
    raise CollisionError("implicit collision fixed point did not converge; reduce dt")


# ---------------------------------------------------------------------------
# linearization, Fredholm solve and viscosity
# ---------------------------------------------------------------------------

def projection_matrix(lattice: VelocityLattice) -> np.ndarray:
    """Weighted orthogonal projection onto span{1, v, |v|^2} in <f g>."""
    B = invariant_basis(lattice)
    w = lattice.weights
    G = B.T @ (B * w[:, None])
    return B @ np.linalg.solve(G, (B * w[:, None]).T)


def _check_operator(L, lattice, tol_null, tol_sym, rng_seed=0):
    B = invariant_basis(lattice)
    null = np.abs(L @ B).max()
    if null > tol_null * max(1.0, np.abs(L).max()):
        raise CollisionError(f"linearized operator does not annihilate invariants ({null:.2e})")
    rng = np.random.default_rng(rng_seed)
    w = lattice.weights
    for _ in range(5):
        f, g = rng.standard_normal((2, lattice.size))
        d = abs((L @ f) @ (w * g) - f @ (w * (L @ g)))
        if d > tol_sym * max(1.0, np.abs(L).max()):
            raise CollisionError(f"linearized operator lost symmetry ({d:.2e})")


def linearize(model, lattice: VelocityLattice, table: ReactionTable | None = None) -> LinearizedOperator:
    """Linearized collision operator around M.

    BGK gives (I - P)/tau.  The quadrature kernel gives
    L phi = -(1/M) dQ[M(1+phi)] assembled from the four-term combination
    phi_i + phi_j - phi_k - phi_l of every reaction.
    """
    B = invariant_basis(lattice)
    if isinstance(model, BGKModel) or getattr(model, "kind", None) == "bgk":
        tau = model.tau
        L = (np.eye(lattice.size) - projection_matrix(lattice)) / tau
        tol = TOLERANCES["bgk"]
    else:
        if table is None:
            table = build_reactions(model, lattice)
        M = lattice.maxwell
        i, j, k, l = table.idx.T
        D = np.zeros((len(table.weight), lattice.size))
        r = np.arange(len(table.weight))
        np.add.at(D, (r, i), 1.0)
        np.add.at(D, (r, j), 1.0)
        np.add.at(D, (r, k), -1.0)
        np.add.at(D, (r, l), -1.0)
        a = table.weight * M[i] * M[j]
        K = D.T @ (D * a[:, None])           # symmetric, positive semidefinite
        # <(L phi) psi> = sum w psi L phi must equal phi^T K psi
        L = K / lattice.weights[:, None]
        tol = TOLERANCES["quadrature-boltzmann"]
    _check_operator(L, lattice, tol, tol)
    return LinearizedOperator(matrix=L, kernel_basis=B, tol_null=tol, tol_sym=tol)


def solve_A_hat(L: LinearizedOperator, lattice: VelocityLattice, A: np.ndarray | None = None):
    """Solve L A_hat = A componentwise with A_hat orthogonal to the invariants.

    Uses (L + P) x = (I - P) A, whose solution lies in the complement of the
    invariants whenever Ker L is exactly span{1, v, |v|^2}.
    """
    from .lattice import tensor_A
    if A is None:
        A = tensor_A(lattice)
    n, N = lattice.size, lattice.dim
    P = projection_matrix(lattice)
    rhs = (np.eye(n) - P) @ A.reshape(n, N * N)
    Lp = L.matrix + P
    cond = np.linalg.cond(Lp)
    if not np.isfinite(cond) or cond > 1e12:
        raise CollisionError(f"constrained solve is singular (condition {cond:.2e}); "
                             "the operator has invariants beyond 1, v, |v|^2")
    X = np.linalg.solve(Lp, rhs)
    X = X - P @ X
    resid = np.abs(L.matrix @ X - rhs).max()
    if resid > TOL_SOLVE * max(1.0, np.abs(rhs).max()):
        raise CollisionError(f"Fredholm solve residual {resid:.2e} exceeds {TOL_SOLVE:.0e}")
    return X.reshape(n, N, N)


def viscosity(A_hat, lattice: VelocityLattice, A: np.ndarray | None = None) -> float:
    """<A_hat : A> / ((N-1)(N+2))."""
    from .lattice import tensor_A
    if A is None:
        A = tensor_A(lattice)
    N = lattice.dim
    if N < 2:
        raise ValueError("viscosity needs N >= 2")
    nu = float(np.einsum("ijk,ijk,i->", A_hat, A, lattice.weights)) / ((N - 1) * (N + 2))
    if not nu > 0:
        raise CollisionError(f"non-positive viscosity {nu}")
    return nu


def entropy_pairing(Q, F, lattice: VelocityLattice) -> float:
    """Plain-measure sum of Q ln F (the discrete dissipation pairing, <= 0)."""
    return float(np.sum(lattice.plain * Q * np.log(F)))


__all__ = [
    "BGKModel", "CollisionKernel", "CollisionError", "LinearizedOperator", "ReactionTable",
    "invariant_basis", "moments", "local_params", "discrete_equilibrium", "equilibrium",
    "bgk_collision", "bgk_relax", "build_reactions", "boltzmann_collision_quadrature",
    "quadrature_entropy_production", "quadrature_relax", "projection_matrix", "linearize",
    "solve_A_hat", "viscosity", "entropy_pairing", "maxwellian",
]
