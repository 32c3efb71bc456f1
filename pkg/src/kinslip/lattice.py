"""Discrete velocity space with quadrature against the Gaussian measure M(v)dv.

Nodes are the tensor product of a symmetric 1-D rule, flattened in C order
(the first velocity component varies slowest).  Two rules are offered:

``uniform``
    equispaced nodes on [-cutoff, cutoff] at cell midpoints, weights
    M(v_i) * cell volume.  Default; specular reflection and half-space splits
    are exact on it.
``gauss-hermite``
    probabilists' Gauss-Hermite nodes.  Exact polynomial moments, meant for
    pure-moment work (viscosity chain, linearized operator).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import hermite_e

RULES = ("uniform", "gauss-hermite")
TOL_LATTICE = 1e-4
TOL_HALF = 5e-3


class LatticeError(ValueError):
    pass


@dataclass(frozen=True)
class MaxwellianParams:
    rho: float
    u: np.ndarray
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "u", np.atleast_1d(np.asarray(self.u, dtype=float)))
        if not self.rho >= 0:
            raise ValueError(f"density must be nonnegative, got {self.rho}")
        if not self.theta > 0:
            raise ValueError(f"temperature must be positive, got {self.theta}")


@dataclass(frozen=True, eq=False)
class VelocityLattice:
    """Tensor velocity lattice.

    Attributes
    ----------
    dim : int
        velocity dimension N
    nodes : ndarray, shape (n, dim)
    weights : ndarray, shape (n,)
        quadrature weights for integration against M(v)dv
    cutoff : float
        half-extent of the lattice (largest possible |v_j|)
    rule : str
    axis_nodes, axis_plain : ndarray, shape (m,)
        the 1-D rule; ``axis_plain`` integrates against plain dv
    tol : float
        moment tolerance the lattice was certified against
    """

    dim: int
    nodes: np.ndarray
    weights: np.ndarray
    cutoff: float
    rule: str
    axis_nodes: np.ndarray
    axis_plain: np.ndarray
    tol: float = TOL_LATTICE
    maxwell: np.ndarray = field(init=False)
    plain: np.ndarray = field(init=False)

    def __post_init__(self):
        m = gaussian(self.nodes)
        object.__setattr__(self, "maxwell", m)
        object.__setattr__(self, "plain", self.weights / m)
        for arr in (self.nodes, self.weights, self.axis_nodes, self.axis_plain,
                    self.maxwell, self.plain):
            arr.setflags(write=False)

    @property
    def size(self) -> int:
        return len(self.weights)

    @property
    def nodes_per_axis(self) -> int:
        return len(self.axis_nodes)

    @property
    def vmax(self) -> float:
        return float(np.abs(self.axis_nodes).max())

    def reflection(self, axis: int) -> np.ndarray:
        """Index permutation sending node v to v with component ``axis`` negated."""
        m = self.nodes_per_axis
        grid = np.arange(self.size).reshape((m,) * self.dim)
        return np.flip(grid, axis=axis).ravel()

    def as_grid(self, values: np.ndarray) -> np.ndarray:
        """View trailing node axis as ``(m,)*dim``."""
        return values.reshape(values.shape[:-1] + (self.nodes_per_axis,) * self.dim)


def gaussian(v: np.ndarray) -> np.ndarray:
    v = np.atleast_2d(v)
    n = v.shape[-1]
    return np.exp(-0.5 * np.sum(v * v, axis=-1)) / (2 * np.pi) ** (n / 2)


def _axis_rule(m: int, cutoff: float, rule: str):
    if rule == "uniform":
        h = 2.0 * cutoff / m
        x = (np.arange(m) - (m - 1) / 2.0) * h
        return x, np.full(m, h)
    if rule == "gauss-hermite":
        x, w = hermite_e.hermegauss(m)
        w = w / np.sqrt(2 * np.pi)
        # antisymmetrize roundoff so reflections are bit-exact
        x = 0.5 * (x - x[::-1])
        w = 0.5 * (w + w[::-1])
        return x, w / gaussian(x[:, None])
    raise LatticeError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")


def build_lattice(dim: int = 2, nodes_per_axis: int = 24, cutoff: float = 6.0,
                  rule: str = "uniform", tol: float | None = None) -> VelocityLattice:
    """Build and certify a velocity lattice.

    Raises
    ------
    LatticeError
        for odd ``nodes_per_axis``, ``dim`` outside {1, 2}, or a rule whose
        moment defects (see :func:`moment_defects`) exceed ``tol``.
    """
    if dim not in (1, 2):
        raise LatticeError(f"velocity dimension must be 1 or 2, got {dim}")
    if nodes_per_axis < 8 or nodes_per_axis % 2:
        raise LatticeError(f"nodes_per_axis must be even and >= 8, got {nodes_per_axis}")
    if rule == "uniform" and not cutoff > 0:
        raise LatticeError("uniform rule needs a positive cutoff")
    tol = TOL_LATTICE if tol is None else tol
    x, a = _axis_rule(nodes_per_axis, cutoff, rule)
    mesh = np.meshgrid(*([x] * dim), indexing="ij")
    nodes = np.stack([c.ravel() for c in mesh], axis=-1)
    plain = np.ones(len(nodes))
    for c in np.meshgrid(*([a] * dim), indexing="ij"):
        plain = plain * c.ravel()
    weights = plain * gaussian(nodes)
    lat = VelocityLattice(dim=dim, nodes=nodes, weights=weights,
                          cutoff=float(cutoff if rule == "uniform" else np.abs(x).max()),
                          rule=rule, axis_nodes=x, axis_plain=a, tol=tol)
    worst = max(abs(row[3]) for row in moment_defects(lat))
    if worst > tol:
        raise LatticeError(f"{rule} lattice with {nodes_per_axis} nodes/axis, cutoff {cutoff}: "
                           f"moment defect {worst:.3e} exceeds tolerance {tol:.1e}")
    return lat


def maxwellian(params: MaxwellianParams, lattice: VelocityLattice) -> np.ndarray:
    """Values rho (2 pi theta)^(-N/2) exp(-|v-u|^2 / (2 theta)) at the nodes."""
    d = lattice.nodes - params.u
    n = lattice.dim
    return params.rho * np.exp(-np.sum(d * d, axis=-1) / (2 * params.theta)) \
        / (2 * np.pi * params.theta) ** (n / 2)


def bracket(phi, lattice: VelocityLattice):
    """<phi> = sum_i w_i phi(v_i); reduces over the trailing node axis."""
    phi = np.asarray(phi, dtype=float)
    return phi @ lattice.weights if phi.ndim else phi * lattice.weights.sum()


def tensor_A(lattice: VelocityLattice) -> np.ndarray:
    """A(v) = v (x) v - |v|^2/N Id at every node, shape (n, N, N)."""
    v = lattice.nodes
    out = v[:, :, None] * v[:, None, :]
    out -= (np.sum(v * v, axis=-1) / lattice.dim)[:, None, None] * np.eye(lattice.dim)
    return out


def axis_of(normal, dim: int) -> tuple[int, int]:
    """Return ``(axis, sign)`` for a normal equal to +-e_axis."""
    n = np.asarray(normal, dtype=float).ravel()
    if n.shape != (dim,):
        raise ValueError(f"normal must have {dim} components, got {n.shape}")
    nz = np.flatnonzero(n)
    if len(nz) != 1 or abs(n[nz[0]]) != 1.0:
        raise ValueError(f"only coordinate-axis normals are supported, got {n}")
    return int(nz[0]), int(np.sign(n[nz[0]]))


def normal_velocity(normal, lattice: VelocityLattice) -> np.ndarray:
    axis, sgn = axis_of(normal, lattice.dim)
    return sgn * lattice.nodes[:, axis]


def half_space_moment(phi, normal, sign: str, lattice: VelocityLattice):
    """sum over nodes with sign(v.n) = sign of w_i phi(v_i) (v_i.n)_+/-."""
    vn = normal_velocity(normal, lattice)
    if sign in ("+", 1, "plus"):
        k = np.maximum(vn, 0.0)
    elif sign in ("-", -1, "minus"):
        k = np.maximum(-vn, 0.0)
    else:
        raise ValueError(f"sign must be '+' or '-', got {sign!r}")
    return np.asarray(phi, dtype=float) @ (lattice.weights * k) if np.ndim(phi) \
        else float(phi) * np.sum(lattice.weights * k)


def moment_defects(lattice: VelocityLattice):
    """Rows ``(name, value, target, defect)`` for every monomial moment up to degree 4."""
    v, n = lattice.nodes, lattice.dim
    rows = [("<1>", bracket(np.ones(lattice.size), lattice), 1.0)]
    for j in range(n):
        rows.append((f"<v{j + 1}>", bracket(v[:, j], lattice), 0.0))
    for j in range(n):
        for k in range(j, n):
            rows.append((f"<v{j + 1}v{k + 1}>", bracket(v[:, j] * v[:, k], lattice),
                         1.0 if j == k else 0.0))
    for j in range(n):
        rows.append((f"<v{j + 1}^3>", bracket(v[:, j] ** 3, lattice), 0.0))
        rows.append((f"<v{j + 1}^4>", bracket(v[:, j] ** 4, lattice), 3.0))
    if n == 2:
        rows.append(("<v1^2v2^2>", bracket(v[:, 0] ** 2 * v[:, 1] ** 2, lattice), 1.0))
    r2 = np.sum(v * v, axis=-1)
    rows.append(("<|v|^4>", bracket(r2 ** 2, lattice), float(n * (n + 2))))
    return [(name, float(val), tgt, float(val - tgt)) for name, val, tgt in rows]


def half_space_defects(lattice: VelocityLattice):
    """Half-range rows checked against tol_half rather than tol_lattice."""
    rows = []
    target = 1.0 / np.sqrt(2 * np.pi)
    for axis in range(lattice.dim):
        e = np.zeros(lattice.dim)
        e[axis] = 1.0
        for sgn in "+-":
            val = half_space_moment(1.0, e, sgn, lattice)
            rows.append((f"<(v{axis + 1})_{sgn}>", float(val), target, float(val - target)))
    if lattice.dim == 2:
        e = np.array([0.0, 1.0])
        vt2 = lattice.nodes[:, 0] ** 2
        val = half_space_moment(vt2, e, "+", lattice)
        rows.append(("<|v_t|^2(v.n)_+>", float(val), target, float(val - target)))
    return rows


def second_moment(Fw, lattice: VelocityLattice) -> np.ndarray:
    """Tensor sum_i Fw[..., i] v_i v_i^T for already weighted values ``Fw``."""
    d = lattice.dim
    VV = (lattice.nodes[:, :, None] * lattice.nodes[:, None, :]).reshape(lattice.size, d * d)
    return (Fw @ VV).reshape(Fw.shape[:-1] + (d, d))
