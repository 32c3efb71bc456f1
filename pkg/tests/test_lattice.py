import math

import numpy as np
import pytest
from scipy import integrate

from kinslip.lattice import (TOL_HALF, TOL_LATTICE, LatticeError, MaxwellianParams, bracket,
                             build_lattice, half_space_defects, half_space_moment, maxwellian,
                             moment_defects, second_moment, tensor_A)


@pytest.fixture(scope="module")
def lat24():
    return build_lattice(2, 24, 6.0)


def test_mass_1d_against_adaptive_integration():
    lat = build_lattice(1, 16, 6.0)
    oracle, _ = integrate.quad(lambda v: math.exp(-v * v / 2) / math.sqrt(2 * math.pi), -np.inf, np.inf)
    assert abs(bracket(np.ones(lat.size), lat) - oracle) <= 1e-6


def test_off_diagonal_second_moment_vanishes(lat24):
    # the node set is odd-symmetric; only summation-order roundoff remains
    v = lat24.nodes
    assert abs(bracket(v[:, 0] * v[:, 1], lat24)) <= 1e-16


def test_fourth_moment(lat24):
    r2 = np.sum(lat24.nodes ** 2, axis=1)
    assert abs(bracket(r2 ** 2, lat24) - 8.0) <= TOL_LATTICE


@pytest.mark.parametrize("bad", [dict(dim=2, nodes_per_axis=15), dict(dim=3, nodes_per_axis=16),
                                 dict(dim=2, nodes_per_axis=6)])
def test_build_rejects_invalid(bad):
    with pytest.raises(LatticeError):
        build_lattice(cutoff=6.0, **bad)


def test_rejects_inaccurate_rule():
    with pytest.raises(LatticeError):
        build_lattice(2, 8, 3.0)


def test_weights_positive_and_reflection_closed(lat24):
    assert np.all(lat24.weights > 0)
    for axis in range(2):
        R = lat24.reflection(axis)
        refl = lat24.nodes.copy()
        refl[:, axis] *= -1
        assert np.array_equal(lat24.nodes[R], refl)
        assert np.array_equal(lat24.weights[R], lat24.weights)
    assert np.all(lat24.nodes != 0)


def test_maxwellian_at_origin_and_zero_density():
    lat = build_lattice(2, 16, 6.0)
    m = maxwellian(MaxwellianParams(1.0, np.zeros(2), 1.0), lat)
    origin = np.array([[0.0, 0.0]])
    from kinslip.lattice import gaussian
    assert gaussian(origin)[0] == pytest.approx(1 / (2 * math.pi), rel=1e-15)
    assert 1 / (2 * math.pi) == pytest.approx(0.159155, abs=1e-6)
    assert np.all(m > 0)
    assert np.all(maxwellian(MaxwellianParams(0.0, np.array([0.3, 0.1]), 2.0), lat) == 0)
    assert abs(np.sum(m * lat.weights / lat.maxwell) - 1.0) <= TOL_LATTICE


def test_maxwellian_params_invariants():
    with pytest.raises(ValueError):
        MaxwellianParams(1.0, np.zeros(2), 0.0)
    with pytest.raises(ValueError):
        MaxwellianParams(-1.0, np.zeros(2), 1.0)


def test_bracket_examples(lat24):
    v = lat24.nodes
    assert abs(bracket(np.ones(lat24.size), lat24) - 1) <= TOL_LATTICE
    assert abs(bracket(v[:, 0] ** 2, lat24) - 1) <= TOL_LATTICE
    assert abs(bracket(np.sum(v * v, axis=1) - 2, lat24)) <= TOL_LATTICE


def test_tensor_A(lat24):
    A = tensor_A(lat24)
    assert np.allclose(np.trace(A, axis1=1, axis2=2), 0, atol=1e-13)
    i = np.argmin(np.abs(lat24.nodes[:, 0] - 0.25) + np.abs(lat24.nodes[:, 1] - 0.25))
    v = lat24.nodes[i]
    expect = np.outer(v, v) - np.dot(v, v) / 2 * np.eye(2)
    assert np.allclose(A[i], expect)
    assert np.abs(np.tensordot(lat24.weights, A, axes=1)).max() <= TOL_LATTICE
    AA = bracket(np.sum(A * A, axis=(1, 2)), lat24)
    assert abs(AA - 4.0) <= TOL_LATTICE


def test_tensor_A_unit_vector():
    # substitution oracle for v = (1, 0): A = [[1/2, 0], [0, -1/2]]
    from kinslip.lattice import VelocityLattice
    lat = build_lattice(2, 16, 6.0)
    fake = VelocityLattice(dim=2, nodes=np.array([[1.0, 0.0]]), weights=np.ones(1), cutoff=1.0,
                           rule="uniform", axis_nodes=lat.axis_nodes, axis_plain=lat.axis_plain,
                           tol=lat.tol)
    assert np.allclose(tensor_A(fake)[0], [[0.5, 0.0], [0.0, -0.5]])


def test_half_space_moments(lat24):
    target = 1 / math.sqrt(2 * math.pi)
    assert target == pytest.approx(0.398942, abs=1e-6)
    for n in ([1.0, 0.0], [0.0, -1.0]):
        plus = half_space_moment(1.0, n, "+", lat24)
        minus = half_space_moment(1.0, n, "-", lat24)
        assert abs(plus - target) <= TOL_HALF
        assert abs(plus - minus) <= TOL_HALF
    n = np.array([0.0, 1.0])
    assert half_space_moment(lat24.nodes[:, 0], n, "+", lat24) == pytest.approx(0.0, abs=1e-16)
    vt2 = lat24.nodes[:, 0] ** 2
    assert abs(half_space_moment(vt2, n, "+", lat24) - target) <= TOL_HALF


def test_half_space_reassembles_full_flux(lat24):
    rng = np.random.default_rng(3)
    phi = rng.standard_normal(lat24.size)
    n = np.array([0.0, 1.0])
    vn = lat24.nodes[:, 1]
    full = bracket(phi * vn, lat24)
    split = half_space_moment(phi, n, "+", lat24) - half_space_moment(phi, n, "-", lat24)
    assert split == pytest.approx(full, abs=1e-15)


def test_half_space_rejects_oblique_normal(lat24):
    with pytest.raises(ValueError):
        half_space_moment(1.0, [0.6, 0.8], "+", lat24)


def test_defect_tables(lat24):
    assert all(abs(r[3]) <= TOL_LATTICE for r in moment_defects(lat24))
    assert all(abs(r[3]) <= TOL_HALF for r in half_space_defects(lat24))


def test_gauss_hermite_rule_is_moment_exact():
    lat = build_lattice(2, 16, rule="gauss-hermite")
    assert all(abs(r[3]) <= 1e-12 for r in moment_defects(lat))


def test_second_moment_matches_einsum(lat24):
    rng = np.random.default_rng(0)
    Fw = rng.standard_normal((3, 4, lat24.size))
    ref = np.einsum("...i,ij,ik->...jk", Fw, lat24.nodes, lat24.nodes)
    assert np.allclose(second_moment(Fw, lat24), ref, rtol=1e-12, atol=1e-12)
