import math

import numpy as np
import pytest

from kinslip.lattice import TOL_HALF, TOL_LATTICE, build_lattice, half_space_moment
from kinslip.wall import (TOL_FLUX, WallSpec, apply_accommodation, diffuse_flux,
                          outgoing_normalization, slip_coefficient, specular_reflect,
                          tangential_identity_defect, wall_geometry, wall_mass_flux)

TOP = (0.0, 1.0)
BOTTOM = (0.0, -1.0)


@pytest.fixture(scope="module")
def lat():
    return build_lattice(2, 24, 6.0)


def _outgoing(lat, normal, seed, count=20):
    rng = np.random.default_rng(seed)
    F = lat.maxwell * rng.uniform(0.0, 3.0, (count, lat.size))
    return np.where(wall_geometry(normal, lat).inc, 0.0, F)


def test_wallspec_invariants():
    with pytest.raises(ValueError):
        WallSpec(TOP, 1.5)
    with pytest.raises(ValueError):
        WallSpec((0.6, 0.8), 0.5)
    with pytest.raises(ValueError):
        WallSpec(TOP, 0.5, wall_temperature=2.0)


def test_specular_moves_values(lat):
    F = np.arange(lat.size, dtype=float)
    R = specular_reflect(F, TOP, lat)
    for i in (0, 37, 300):
        a, b = lat.nodes[i]
        j = np.flatnonzero((lat.nodes[:, 0] == a) & (lat.nodes[:, 1] == -b))[0]
        assert R[j] == F[i]
    assert np.array_equal(specular_reflect(lat.maxwell, TOP, lat), lat.maxwell)
    rng = np.random.default_rng(0)
    for _ in range(5):
        phi = rng.standard_normal(lat.size)
        assert np.array_equal(specular_reflect(specular_reflect(phi, TOP, lat), TOP, lat), phi)
        lhs = half_space_moment(specular_reflect(phi, TOP, lat), TOP, "-", lat)
        assert lhs == pytest.approx(half_space_moment(phi, TOP, "+", lat), abs=1e-15)


def test_specular_rejects_oblique(lat):
    with pytest.raises(ValueError):
        specular_reflect(lat.maxwell, (0.6, 0.8), lat)


def test_diffuse_flux_examples(lat):
    M = lat.maxwell
    assert diffuse_flux(M, TOP, lat) == pytest.approx(1.0, abs=1e-14)
    assert diffuse_flux(2 * M, TOP, lat) == pytest.approx(2.0, abs=1e-14)
    assert diffuse_flux(M * (1 + 0.1 * lat.nodes[:, 0]), TOP, lat) == pytest.approx(1.0, abs=1e-14)
    # the normalization is the lattice outgoing flux, within tol_half of 1/sqrt(2 pi)
    assert abs(outgoing_normalization(TOP, lat) - 1 / math.sqrt(2 * math.pi)) <= TOL_HALF


@pytest.mark.parametrize("alpha", [0.0, 0.3, 1.0])
@pytest.mark.parametrize("normal", [TOP, BOTTOM])
def test_accommodation_zero_flux_and_identity(lat, alpha, normal):
    wall = WallSpec(normal, alpha)
    F = _outgoing(lat, normal, seed=int(alpha * 10) + 7)
    full = apply_accommodation(F, wall, lat)
    g = wall_geometry(normal, lat)
    assert np.array_equal(full[:, g.out], F[:, g.out])
    assert np.abs(wall_mass_flux(full, normal, lat)).max() <= TOL_FLUX
    assert full.min() >= 0
    assert tangential_identity_defect(F, wall, lat) <= TOL_HALF


def test_accommodation_limits(lat):
    F = _outgoing(lat, TOP, seed=3, count=1)[0]
    g = wall_geometry(TOP, lat)
    spec_out = apply_accommodation(F, WallSpec(TOP, 0.0), lat)
    assert np.array_equal(spec_out[g.inc], specular_reflect(F, TOP, lat)[g.inc])
    diff = apply_accommodation(F, WallSpec(TOP, 1.0), lat)
    assert np.allclose(diff[g.inc], diffuse_flux(F, TOP, lat) * lat.maxwell[g.inc], rtol=1e-15)
    for a in (0.0, 0.4, 1.0):
        M = apply_accommodation(lat.maxwell, WallSpec(TOP, a), lat)
        assert np.allclose(M, lat.maxwell, rtol=1e-14, atol=0)


def test_mass_flux_detector(lat):
    assert abs(wall_mass_flux(lat.maxwell, TOP, lat)) <= TOL_LATTICE
    eps = 0.01
    F = lat.maxwell * (1 + eps * lat.nodes[:, 1])
    assert wall_mass_flux(F, TOP, lat) == pytest.approx(eps, abs=eps * TOL_LATTICE)


def test_slip_coefficient(lat):
    assert slip_coefficient(1.0) == pytest.approx(0.3989422804014327, rel=1e-15)
    assert slip_coefficient(0.0) == 0.0
    lam, mom = slip_coefficient(1.0, lat)
    assert abs(mom - lam) <= TOL_HALF
    with pytest.raises(ValueError):
        slip_coefficient(-0.1)
