"""Maxwell accommodation walls on axis-aligned boundaries.

Wall-state arrays carry the velocity nodes on their trailing axis, so every
operation here applies unchanged to a single wall cell or to a whole row of
boundary cells.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .lattice import VelocityLattice, axis_of, half_space_moment, normal_velocity

TOL_FLUX = 1e-12


@dataclass(frozen=True)
class WallSpec:
    normal: tuple
    alpha: float
    wall_temperature: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "normal", tuple(float(c) for c in np.ravel(self.normal)))
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"accommodation coefficient must lie in [0, 1], got {self.alpha}")
        if self.wall_temperature != 1.0:
            raise ValueError("only unit wall temperature is supported")
        axis_of(self.normal, len(self.normal))


@dataclass(frozen=True, eq=False)
class WallGeometry:
    """Per-normal lattice data: node masks, reflection and outgoing normalization."""

    vn: np.ndarray
    out: np.ndarray
    inc: np.ndarray
    reflect: np.ndarray
    c_out: float


_GEOM_CACHE: dict = {}


def wall_geometry(normal, lattice: VelocityLattice) -> WallGeometry:
    key = (id(lattice), tuple(np.ravel(normal).astype(float)))
    g = _GEOM_CACHE.get(key)
    if g is None or g[0] is not lattice:
        axis, _ = axis_of(normal, lattice.dim)
        vn = normal_velocity(normal, lattice)
        out = vn > 0
        c_out = float(np.sum(lattice.weights[out] * vn[out]))
        geom = WallGeometry(vn=vn, out=out, inc=vn < 0, reflect=lattice.reflection(axis),
                            c_out=c_out)
        _GEOM_CACHE[key] = (lattice, geom)
        return geom
    return g[1]


def specular_reflect(F_wall, n, lattice: VelocityLattice):
    """Value at v becomes the input value at v - 2(v.n)n."""
    axis, _ = axis_of(n, lattice.dim)
    return np.asarray(F_wall)[..., lattice.reflection(axis)]


def outgoing_normalization(n, lattice: VelocityLattice) -> float:
    """Lattice value of the integral of (v.n)_+ M dv (exactly 1/sqrt(2 pi) in the continuum)."""
    return wall_geometry(n, lattice).c_out


def diffuse_flux_average(phi, n, lattice: VelocityLattice):
    """Average of phi over outgoing nodes against the probability weights w (v.n)_+ / c_out."""
    g = wall_geometry(n, lattice)
    k = np.where(g.out, lattice.weights * g.vn, 0.0) / g.c_out
    return np.asarray(phi, dtype=float) @ k


def diffuse_flux(F_wall, n, lattice: VelocityLattice):
    """Lambda(F/M): the outgoing-flux average of F/M, equal to 1 for F = M."""
    return diffuse_flux_average(np.asarray(F_wall, dtype=float) / lattice.maxwell, n, lattice)


def apply_accommodation(F_wall, wall: WallSpec, lattice: VelocityLattice):
    """Fill incoming nodes with (1-alpha) R F + alpha Lambda(F/M) M; outgoing nodes untouched."""
    F_wall = np.asarray(F_wall, dtype=float)
    g = wall_geometry(wall.normal, lattice)
    lam = diffuse_flux(F_wall, wall.normal, lattice)
    refl = F_wall[..., g.reflect]
    incoming = (1.0 - wall.alpha) * refl + wall.alpha * np.multiply.outer(lam, lattice.maxwell)
    return np.where(g.inc, incoming, F_wall)


def wall_mass_flux(F_full, n, lattice: VelocityLattice):
    """Plain-measure integral of F (v.n)."""
    vn = normal_velocity(n, lattice)
    return np.asarray(F_full, dtype=float) @ (lattice.plain * vn)


def tangential_identity_defect(F_out, wall: WallSpec, lattice: VelocityLattice) -> float:
    """Full-wall <v_t (v.n) g> minus alpha <v_t (v.n)_+ (g - Lambda g)> for g = F/M."""
    full = apply_accommodation(F_out, wall, lattice)
    axis, _ = axis_of(wall.normal, lattice.dim)
    g = full / lattice.maxwell
    vn = normal_velocity(wall.normal, lattice)
    worst = 0.0
    for t in range(lattice.dim):
        if t == axis:
            continue
        vt = lattice.nodes[:, t]
        lhs = (g * vt * vn) @ lattice.weights
        lam = diffuse_flux(full, wall.normal, lattice)
        rhs = wall.alpha * half_space_moment(vt * (g - np.asarray(lam)[..., None]),
                                             wall.normal, "+", lattice)
        worst = max(worst, float(np.max(np.abs(lhs - rhs))))
    return worst


def slip_coefficient(alpha_0: float, lattice: VelocityLattice | None = None, normal=None):
    """alpha_0 / sqrt(2 pi); with a lattice also return the moment form.

    The moment form is alpha_0/(N-1) <|v_t|^2 (v.n)_+>.
    """
    if alpha_0 < 0:
        raise ValueError("alpha_0 must be nonnegative")
    lam = alpha_0 / math.sqrt(2 * math.pi)
    if lattice is None:
        return lam
    if normal is None:
        normal = np.eye(lattice.dim)[-1]
    axis, _ = axis_of(normal, lattice.dim)
    vt2 = np.sum(np.delete(lattice.nodes, axis, axis=1) ** 2, axis=1)
    mom = alpha_0 / (lattice.dim - 1) * half_space_moment(vt2, normal, "+", lattice)
    return lam, float(mom)


__all__ = ["WallSpec", "WallGeometry", "wall_geometry", "specular_reflect", "outgoing_normalization",
           "diffuse_flux_average", "diffuse_flux", "apply_accommodation", "wall_mass_flux",
           "tangential_identity_defect", "slip_coefficient", "TOL_FLUX"]
