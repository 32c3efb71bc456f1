import math

import numpy as np
import pytest

from kinslip.collision import (TOL_MOMENT, TOL_SOLVE, TOLERANCES, BGKModel, CollisionError,
                               CollisionKernel, bgk_collision, bgk_relax,
                               boltzmann_collision_quadrature, build_reactions,
                               discrete_equilibrium, entropy_pairing, invariant_basis, linearize,
                               local_params, moments, quadrature_entropy_production,
                               quadrature_relax, solve_A_hat, viscosity)
from kinslip.lattice import TOL_LATTICE, MaxwellianParams, build_lattice, maxwellian, tensor_A


@pytest.fixture(scope="module")
def lat():
    return build_lattice(2, 16, 6.0)


@pytest.fixture(scope="module")
def coarse():
    # coarse 8x8 lattice for the quadrature kernel; its moment defects are large
    return build_lattice(2, 8, 4.0, tol=0.05)


@pytest.fixture(scope="module")
def table(coarse):
    return build_reactions(CollisionKernel("quadrature-boltzmann", 1.0, 32), coarse)


def _conserved(Q, lattice):
    return (Q * lattice.plain) @ invariant_basis(lattice)


def test_models_validate():
    with pytest.raises(ValueError):
        BGKModel(0.0)
    with pytest.raises(ValueError):
        CollisionKernel("hard-spheres")
    with pytest.raises(ValueError):
        CollisionKernel("quadrature-boltzmann", C_b=0.5)


def test_kernel_bounds():
    k = CollisionKernel("quadrature-boltzmann", C_b=2.0)
    z = np.linspace(0, 10, 50)
    b = k.b(z)
    assert np.all(b > 0) and np.all(b <= k.C_b * (1 + z)) and np.all(b >= 1 / k.C_b)


def test_local_params_examples(lat):
    # lattice Maxwellian: moment extraction is a fixed point to roundoff
    F = maxwellian(MaxwellianParams(1.0, np.array([0.1, 0.0]), 1.0), lat)
    E = discrete_equilibrium(F, lat)
    p, q = local_params(E, lat), local_params(F, lat)
    assert p.rho == pytest.approx(q.rho, abs=TOL_MOMENT)
    assert np.allclose(p.u, q.u, atol=TOL_MOMENT) and p.theta == pytest.approx(q.theta, abs=TOL_MOMENT)
    # analytic Maxwellian: the values agree with the parameters to the lattice accuracy
    assert q.rho == pytest.approx(1.0, abs=TOL_LATTICE)
    assert np.allclose(q.u, [0.1, 0.0], atol=TOL_LATTICE)
    assert q.theta == pytest.approx(1.0, abs=TOL_LATTICE)
    two = local_params(2 * lat.maxwell, lat)
    assert two.rho == pytest.approx(2.0, abs=TOL_LATTICE)
    assert np.allclose(two.u, 0, atol=TOL_MOMENT) and two.theta == pytest.approx(1.0, abs=TOL_LATTICE)
    pert = local_params(lat.maxwell * (1 + 0.01 * lat.nodes[:, 0]), lat)
    assert np.allclose(pert.u, [0.01, 0.0], atol=TOL_LATTICE)


def test_local_params_rejects_nonphysical(lat):
    with pytest.raises(CollisionError):
        local_params(np.zeros(lat.size), lat)


def test_bgk_collision_properties(lat):
    model = BGKModel(0.7)
    F = maxwellian(MaxwellianParams(1.2, np.array([0.2, -0.1]), 0.9), lat)
    E = discrete_equilibrium(F, lat)
    assert np.abs(bgk_collision(E, model, lat)).max() <= TOL_MOMENT
    rng = np.random.default_rng(1)
    G = lat.maxwell * (1 + 0.4 * rng.uniform(-1, 1, (20, lat.size)))
    Q = bgk_collision(G, model, lat)
    assert np.abs(_conserved(Q, lat)).max() <= TOL_MOMENT
    H = np.maximum(lat.maxwell * (1 + 0.2 * lat.nodes[:, 0]), 1e-300)
    assert entropy_pairing(bgk_collision(H, model, lat), H, lat) <= 0


def test_bgk_relax_conserves_and_decays(lat):
    rng = np.random.default_rng(2)
    F = lat.maxwell * (1 + 0.4 * rng.uniform(-1, 1, (5, lat.size)))
    G, MF = bgk_relax(F, 0.5, lat)
    assert np.abs(_conserved(G - F, lat)).max() <= TOL_MOMENT
    assert np.allclose(G - MF, (F - MF) * math.exp(-0.5))


def test_quadrature_kernel(coarse, table):
    assert table.accepted > 0 and len(table.weight) > 0
    Q0 = boltzmann_collision_quadrature(coarse.maxwell, table, coarse)
    assert np.abs(Q0).max() <= TOLERANCES["quadrature-boltzmann"]
    rng = np.random.default_rng(4)
    F = coarse.maxwell * (1 + 0.5 * rng.uniform(-1, 1, (10, coarse.size)))
    Q = boltzmann_collision_quadrature(F, table, coarse)
    assert np.abs(_conserved(Q, coarse)).max() <= 1e-13
    pair = np.array([entropy_pairing(q, f, coarse) for q, f in zip(Q, F)])
    assert np.all(pair <= TOLERANCES["quadrature-boltzmann"])
    assert np.all(quadrature_entropy_production(F, table, coarse) >= -TOLERANCES["quadrature-boltzmann"])


def test_quadrature_relax_conserves(coarse, table):
    F = coarse.maxwell * (1 + 0.3 * coarse.nodes[:, 0] ** 2 / 4)
    G = quadrature_relax(F[None], 0.05, table, coarse)[0]
    assert np.abs(_conserved(G - F, coarse)).max() <= 1e-12


def test_linearize_bgk(lat):
    L = linearize(BGKModel(1.0), lat)
    assert np.abs(L(np.ones(lat.size))).max() <= TOLERANCES["bgk"]
    L2 = linearize(BGKModel(2.0), lat)
    phi = lat.nodes[:, 0] * lat.nodes[:, 1]
    assert np.allclose(L2(phi), phi / 2, atol=1e-12)
    rng = np.random.default_rng(5)
    w = lat.weights
    for _ in range(5):
        f, g = rng.standard_normal((2, lat.size))
        assert abs(L(f) @ (w * g) - f @ (w * L(g))) <= L.tol_sym
        assert L(f) @ (w * f) >= -L.tol_sym


def test_linearize_quadrature(coarse, table):
    L = linearize(CollisionKernel("quadrature-boltzmann"), coarse, table)
    B = invariant_basis(coarse)
    assert np.abs(L.matrix @ B).max() <= L.tol_null * max(1, np.abs(L.matrix).max())
    rng = np.random.default_rng(6)
    f = rng.standard_normal(coarse.size)
    assert L(f) @ (coarse.weights * f) >= -L.tol_sym


def test_solve_A_hat_bgk(lat):
    tau = 0.3
    Ah = solve_A_hat(linearize(BGKModel(tau), lat), lat)
    A = tensor_A(lat)
    assert np.abs(Ah - tau * A).max() <= TOL_SOLVE
    assert abs(Ah[:, 0, 1] @ lat.weights) <= TOLERANCES["bgk"]
    L = linearize(BGKModel(tau), lat)
    resid = np.abs(np.einsum("ij,jkl->ikl", L.matrix, Ah) - A).max()
    assert resid <= TOL_SOLVE


@pytest.mark.parametrize("tau", [1e-3, 0.05, 1.0, 10.0])
def test_viscosity_chain_on_moment_exact_rule(tau):
    gh = build_lattice(2, 16, rule="gauss-hermite")
    assert viscosity(solve_A_hat(linearize(BGKModel(tau), gh), gh), gh) == pytest.approx(tau, abs=TOL_SOLVE)


def test_viscosity_chain_on_uniform_lattice(lat):
    nus = [viscosity(solve_A_hat(linearize(BGKModel(t), lat), lat), lat) for t in (0.05, 1.0, 2.0)]
    # deviation from tau is the relative fourth-moment defect of the lattice
    assert abs(nus[1] - 1.0) <= TOL_LATTICE
    assert nus[0] == pytest.approx(0.05 * nus[1], rel=1e-12)
    assert nus[2] == pytest.approx(2 * nus[1], rel=1e-12)


def test_moments_of_discrete_equilibrium_match(lat):
    rng = np.random.default_rng(7)
    F = lat.maxwell * (1 + 0.5 * rng.uniform(-1, 1, (4, 3, lat.size)))
    E = discrete_equilibrium(F, lat)
    for a, b in zip(moments(F, lat), moments(E, lat)):
        assert np.allclose(a, b, atol=1e-13, rtol=0)
