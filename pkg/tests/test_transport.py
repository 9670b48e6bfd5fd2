import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from albedo_lab.albedo import BeamSpec, sample_beam
from albedo_lab.coefficients import make_phantom
from albedo_lab.errors import DomainError, RefusalError
from albedo_lab.geometry import BoundaryDistribution, DomainConfig, RaySet
from albedo_lab.transport import (Lattice, RayField, apply_A2, apply_J, apply_K, apply_T1inv, line_integral,
                                  segment_integral, sigma_p_at_points, solve_neumann, transport_residual)

R = 2.0
Q_BALL = 1 - np.exp(-1.2)


@pytest.fixture(scope="module")
def coarse():
    d = DomainConfig()
    return Lattice.transport(d, h=2 / 8), make_phantom("ball", d, N=9)


def single_ray(v, foot=(0, 0, 0)):
    v = np.array([v], dtype=float)
    return RaySet(v, np.array([foot], dtype=float), np.ones(1), np.zeros(1, int), v, R)


def test_line_integrals_ball():
    b = make_phantom("ball", N=17, sigma0=0.5)
    assert line_integral(b.sigma, [[0, 0, 0]], [[0, 0, 1]])[0] == pytest.approx(1.0, rel=1e-6)
    assert line_integral(b.sigma, [[0, 1.2, 0]], [[1, 0, 0]])[0] == 0.0
    seg = segment_integral(b.sigma, np.array([[0, 0, -1.0]]), np.array([[0, 0, 0.0]]))
    assert seg[0] == pytest.approx(0.5, rel=1e-3)


def test_J_no_attenuation(coarse):
    lat, ball = coarse
    zero = make_phantom("zero", N=9)
    f = BoundaryDistribution.constant(lat.rays, 1.0, -1)
    assert np.all(apply_J(f, zero.sigma, lat).values == 1.0)
    with pytest.raises(DomainError):
        apply_J(BoundaryDistribution.constant(lat.rays, 1.0, +1), zero.sigma, lat)


def test_J_central_ray_transmission():
    b = make_phantom("ball", N=17, sigma0=0.5)
    rays = single_ray((0, 0, 1))
    Jf = apply_J(BoundaryDistribution.constant(rays, 1.0, -1), b.sigma)
    assert Jf.values[0, -1] == pytest.approx(np.exp(-1), rel=1e-6)


@given(st.integers(0, 10_000))
@settings(max_examples=10, deadline=None)
def test_J_norm_bound(seed):
    rng = np.random.default_rng(seed)
    b = make_phantom("smooth-bump", N=9)
    lat = Lattice.transport(DomainConfig(), h=2 / 8)
    f = BoundaryDistribution(lat.rays, rng.random(len(lat.rays)), -1)
    f = f.scaled(1 / f.norm())
    assert apply_J(f, b.sigma, lat).norm() <= 2 * R + 1e-6


def test_T1inv_explicit_antiderivative(coarse):
    lat, _ = coarse
    zero = make_phantom("zero", N=9)
    assert np.all(apply_T1inv(RayField.zeros(lat), zero.sigma).values == 0)
    out = apply_T1inv(RayField(lat, np.ones(lat.shape)), zero.sigma)
    assert np.allclose(out.values, -(R + lat.t)[None, :], atol=1e-12)
    assert out.norm() / RayField(lat, np.ones(lat.shape)).norm() <= 2 * R


@pytest.mark.parametrize("seed", range(20))
def test_T1inv_norm_bound(coarse, seed):
    lat, ball = coarse
    g = RayField(lat, np.random.default_rng(seed).standard_normal(lat.shape))
    assert apply_T1inv(g, ball.sigma).norm() <= 2 * R * g.norm()


def test_A2_zero_and_isotropic(lattice17, phantoms):
    zero = phantoms("zero")
    ball = phantoms("ball")
    lat = lattice17
    f = RayField(lat, np.ones(lat.shape))
    assert np.all(apply_A2(f, zero.kappa, lat).values == 0)
    P = lat.points()
    g = np.exp(-np.sum(P**2, axis=1)).reshape(lat.shape)
    A = apply_A2(RayField(lat, g), ball.kappa, lat)
    sp = sigma_p_at_points(lat, ball.kappa)
    w = lat.rays.weights[:, None] * lat.wt[None, :]
    assert np.sum(w * np.abs(A.values - sp * g)) / np.sum(w * sp * g) < 0.05


@pytest.mark.parametrize("seed", range(5))
def test_A2_and_K_norm_bounds(coarse, seed):
    lat, ball = coarse
    f = RayField(lat, np.random.default_rng(seed).standard_normal(lat.shape))
    assert apply_A2(f, ball.kappa, lat).norm() <= (ball.kappa.sup_sigma_p() + 1e-6) * f.norm()
    assert apply_K(f, ball, lat).norm() <= (Q_BALL + 0.05) * f.norm()


def test_one_collision_mass(lattice17, phantoms):
    pure = phantoms("ball", sigma0=0.0, c=0.3)
    beam = sample_beam(BeamSpec.central())
    first = -apply_K(apply_J(beam, pure.sigma), pure, lattice17)
    assert first.trace().mass() == pytest.approx(0.6 * beam.mass(), rel=0.02)


def test_neumann_k_zero_single_term(coarse):
    lat, _ = coarse
    pair = make_phantom("ball", N=9, c=0.0)
    f = BoundaryDistribution.constant(lat.rays, 1.0, -1)
    sol = solve_neumann(f, pair, lattice=lat)
    assert len(sol.orders) == 1
    assert np.array_equal(sol.orders[0].values, apply_J(f, pair.sigma, lat).values)


def test_neumann_ratios_and_tail(coarse):
    lat, ball = coarse
    sol = solve_neumann(BoundaryDistribution.constant(lat.rays, 1.0, -1), ball, tol=1e-6, lattice=lat)
    assert all(r <= Q_BALL for r in sol.report.ratios)
    assert sol.report.tail_bound < 1e-6


def test_neumann_refuses_supercritical(coarse):
    lat, _ = coarse
    pair = make_phantom("ball", N=9, sigma0=0.0, c=0.3)
    with pytest.raises(RefusalError):
        solve_neumann(BoundaryDistribution.constant(lat.rays, 1.0, -1), pair, lattice=lat)


def test_conservative_pair_mass_balance(lattice17, phantoms):
    pair = phantoms("ball", sigma0=0.3, c=0.3)
    f = BoundaryDistribution.constant(lattice17.rays, 1.0, -1)
    sol = solve_neumann(f, pair, lattice=lattice17)
    assert sol.outgoing_mass() == pytest.approx(f.mass(), rel=0.02)
    assert abs(sol.absorbed(pair)) < 1e-3 * f.mass()
    assert transport_residual(sol.total(), pair) < 0.1
