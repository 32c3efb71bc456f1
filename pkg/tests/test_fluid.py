import math

import numpy as np
import pytest
from scipy.optimize import brentq

from kinslip.fields import ChannelGeometry, ShearField
from kinslip.fluid import (FluidSolverError, FluidState, SlipParams, cell_velocity,
                           dissipative_solution_check, divergence, energy, euler_step,
                           leray_energy_check, max_stable_dt, ns_slip_step, project,
                           relative_energy_terms, restrict, run_fluid, sigma_minus,
                           state_from_streamfunction, strain, wall_slip_velocity,
                           wall_velocities_cc, zero_state)


@pytest.fixture(scope="module")
def geom():
    return ChannelGeometry(32, 32, 1.0)


@pytest.fixture(scope="module")
def shear_state(geom):
    f = ShearField(0.35, 0.15 / math.pi, 1.0)
    return state_from_streamfunction(f.streamfunction, geom)


def test_slip_params():
    with pytest.raises(ValueError):
        SlipParams(-1.0, 0.0)
    with pytest.raises(ValueError):
        SlipParams(0.1, -0.2)
    assert SlipParams(0.0, 5.0).ghost_ratio(0.1) == 1.0
    assert SlipParams(0.1, 0.0).ghost_ratio(0.1) == 1.0
    assert SlipParams(0.1, 1e12).ghost_ratio(0.1) == pytest.approx(-1.0, abs=1e-9)
    # nu (u_g - u_i)/dy + lam (u_g + u_i)/2 = 0
    p, dy = SlipParams(0.02, 0.3), 1 / 32
    r = p.ghost_ratio(dy)
    assert p.nu * (r - 1) / dy + p.lam * (r + 1) / 2 == pytest.approx(0.0, abs=1e-15)


def test_streamfunction_state_is_solenoidal(geom, shear_state):
    assert np.abs(divergence(shear_state.u, shear_state.v, geom)).max() < 1e-12
    assert np.all(shear_state.v[:, 0] == 0) and np.all(shear_state.v[:, -1] == 0)
    U = cell_velocity(shear_state)
    X, Y = geom.centers()
    exact = ShearField().velocity(X, Y)
    assert np.abs(U - exact).max() < 0.02


def test_projection(geom):
    rng = np.random.default_rng(0)
    u = rng.normal(size=(geom.nx, geom.ny))
    v = np.zeros((geom.nx, geom.ny + 1))
    v[:, 1:-1] = rng.normal(size=(geom.nx, geom.ny - 1))
    u1, v1, _ = project(u, v, geom)
    assert np.abs(divergence(u1, v1, geom)).max() < 1e-10
    u2, v2, phi = project(u1, v1, geom)
    assert np.abs(u2 - u1).max() < 1e-12 and np.abs(v2 - v1).max() < 1e-12
    # projection is orthogonal, so it never adds energy
    assert np.sum(u1 ** 2) + np.sum(v1 ** 2) <= np.sum(u ** 2) + np.sum(v ** 2)


def test_zero_state_is_fixed(geom):
    s = zero_state(geom)
    out = ns_slip_step(s, SlipParams(0.01, 0.1), 0.01, geom)
    assert np.all(out.u == 0) and np.all(out.v == 0) and out.t == pytest.approx(0.01)


def test_cfl_guard(geom, shear_state):
    p = SlipParams(0.01, 0.1)
    dt = max_stable_dt(shear_state, p, geom, cfl=1.0)
    with pytest.raises(FluidSolverError):
        ns_slip_step(shear_state, p, 1.5 * dt, geom)


def test_robin_shear_decay_rate():
    # u = cos(mu (y - 1/2)) with mu tan(mu/2) = lam/nu decays at rate nu mu^2
    geom = ChannelGeometry(8, 64, 1.0)
    nu, lam = 0.05, 0.2
    mu = brentq(lambda m: m * math.tan(m / 2) - lam / nu, 1e-6, math.pi - 1e-9)
    u = np.tile(np.cos(mu * (geom.yc - 0.5)), (geom.nx, 1))
    s = FluidState(u, np.zeros((geom.nx, geom.ny + 1)), np.zeros((geom.nx, geom.ny)))
    p = SlipParams(nu, lam)
    T, dt = 0.5, 1e-3
    hist = run_fluid(s, p, geom, T, dt, record_every=500)
    decay = math.log(hist.final.u[0].max() / u[0].max()) / T
    assert decay == pytest.approx(-nu * mu * mu, rel=2e-3)


def test_euler_energy_nearly_conserved(geom, shear_state):
    s = shear_state
    e0 = energy(s, geom)
    dt = 0.5 * max_stable_dt(s, SlipParams(), geom)
    for _ in range(20):
        s = euler_step(s, dt, geom)
    assert abs(energy(s, geom) - e0) / e0 < 1e-4


def test_leray_energy_inequality(geom, shear_state):
    p = SlipParams(0.01, 0.1)
    hist = run_fluid(shear_state, p, geom, 0.2, 0.01, record_every=5)
    chk = leray_energy_check(hist, tol=1e-10)
    assert not chk["violated"]
    assert np.all(np.diff(chk["energy"]) < 0)
    # the balance is tight: the slack is small compared with the dissipated energy
    assert abs(chk["min_slack"]) < 0.05 * (chk["viscous"][-1] + chk["wall"][-1])
    assert hist.max_div < 1e-10


def test_restrict_keeps_divergence():
    fine = ChannelGeometry(32, 32, 1.0)
    coarse = ChannelGeometry(16, 16, 1.0)
    s = state_from_streamfunction(ShearField().streamfunction, fine)
    c = restrict(s)
    assert c.u.shape == (16, 16) and c.v.shape == (16, 17)
    assert np.abs(divergence(c.u, c.v, coarse)).max() < 1e-10


def test_sigma_minus_examples():
    S = np.array([[1.0, 0.0], [0.0, -2.0]])
    assert sigma_minus(S) == pytest.approx(2.0)
    assert sigma_minus(np.eye(2)) == pytest.approx(-1.0)
    R = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert sigma_minus(R) == pytest.approx(1.0)


def test_strain_of_shear(geom):
    X, Y = geom.centers()
    f = ShearField()
    W = f.velocity(X, Y)
    G = f.gradient(X, Y)
    S = strain(W, geom)
    interior = (slice(None), slice(2, -2))
    assert np.abs(S[interior] - (G + np.swapaxes(G, -1, -2))[interior]).max() < 0.1


def test_wall_velocities(geom, shear_state):
    p = SlipParams(0.0, 0.0)
    b, t = wall_slip_velocity(shear_state, p, geom)
    assert b.shape == (geom.nx,)
    W = cell_velocity(shear_state)
    cc = wall_velocities_cc(W)
    assert cc.shape == (2, geom.nx)
    assert np.abs(cc[0] - 0.35).max() < 0.05 and np.abs(cc[1] + 0.35).max() < 0.05


def test_relative_energy_with_u_equal_w_is_exact(geom, shear_state):
    p = SlipParams(0.01, 0.1)
    hist = run_fluid(shear_state, p, geom, 0.1, 0.01, record_every=2)
    t, U = hist.as_arrays()
    walls = np.asarray(hist.walls)
    out = relative_energy_terms(t, U, U, walls, walls, p, geom)
    assert np.all(out["relative_energy"] == 0)
    assert np.abs(out["residual"]).max() < 1e-14
    d = dissipative_solution_check(t, U, U, geom)
    assert np.all(d["lhs"] == 0) and not d["violated"]
