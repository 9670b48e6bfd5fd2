import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from albedo_lab.coefficients import (AbsorptionField, CartesianGrid, CoefficientPair, PhaseFunction,
                                     ScatteringField, check_admissible, check_subcritical, make_phantom,
                                     sigma_p)
from albedo_lab.errors import AdmissibilityError, DomainError
from albedo_lab.geometry import DirectionSet, DomainConfig


def test_sigma_p_isotropic_equals_c():
    pair = make_phantom("ball", N=17, c=0.3)
    dirs = DirectionSet.default(3)
    val = sigma_p(pair.kappa, np.zeros((1, 3)), np.array([[0, 0, 1.0]]), dirs)
    assert val[0] == pytest.approx(0.3, abs=1e-6)
    far = sigma_p(pair.kappa, np.array([[2.0, 0, 0]]), np.array([[0, 0, 1.0]]), dirs)
    assert far[0] == 0.0


@pytest.mark.parametrize("phase", [PhaseFunction("quadratic"), PhaseFunction("hg", g=0.5)])
def test_sigma_p_anisotropic_matches_isotropic(phase):
    grid = CartesianGrid(3, 9, 1.0)
    amp = np.where(grid.active_mask(), 0.3, 0.0)
    iso = ScatteringField(grid, amp)
    ani = ScatteringField(grid, amp, phase)
    dirs = DirectionSet.gauss_product(24, 48)
    x = np.array([[0.1, -0.2, 0.3]])
    v = np.array([[0.0, 0.6, 0.8]])
    assert sigma_p(ani, x, v, dirs)[0] == pytest.approx(sigma_p(iso, x, v, dirs)[0], rel=0.01)


@pytest.mark.parametrize("name,g", [("isotropic", 0), ("quadratic", 0), ("hg", 0.7), ("hg", -0.3)])
def test_phase_normalised(name, g):
    for n in (2, 3):
        p = PhaseFunction(name, n, g)
        if n == 3:
            mu = np.linspace(-1, 1, 200001)
            total = 2 * np.pi * np.trapezoid(p(mu), mu)
        else:
            th = np.linspace(-np.pi, np.pi, 200001)
            total = np.trapezoid(p(np.cos(th)), th)
        assert total == pytest.approx(1.0, rel=1e-6)


@given(st.floats(-0.9, 0.9))
@settings(max_examples=20, deadline=None)
def test_hg_sampling_mean_cosine(g):
    p = PhaseFunction("hg", 3, g)
    u = (np.arange(20000) + 0.5) / 20000
    assert p.sample_mu(u).mean() == pytest.approx(g, abs=5e-3)


def test_admissibility_reports():
    rep = check_admissible(make_phantom("zero", N=9))
    assert rep.ok and rep.sup_sigma == 0 and rep.sup_sigma_p == 0
    rep = check_admissible(make_phantom("ball", N=17, sigma0=1.0, c=0.3))
    assert rep.ok and rep.sup_sigma == pytest.approx(1.0) and rep.sup_sigma_p == pytest.approx(0.3, abs=1e-6)
    pair = make_phantom("ball", N=9)
    vals = pair.sigma.values.copy()
    vals[4, 4, 4] = -0.1
    bad = CoefficientPair(AbsorptionField(pair.grid, vals), pair.kappa)
    rep = check_admissible(bad)
    assert not rep.ok and [4, 4, 4] in rep.violations[0]["cells"]
    with pytest.raises(AdmissibilityError):
        check_admissible(bad, strict=True)


def test_subcriticality_cases():
    d = DomainConfig()
    r = check_subcritical(make_phantom("ball", d, N=17, sigma0=1.0, c=0.3), d)
    assert r.c2 and r.contraction == pytest.approx(1 - np.exp(-1.2), rel=1e-6)
    r = check_subcritical(make_phantom("zero", d, N=9), d)
    assert r.c1 and r.c2 and r.contraction == 0
    r = check_subcritical(make_phantom("ball", d, N=17, sigma0=0.0, c=0.3), d)
    assert not r.c1 and not r.c2 and not r.ok and r.status.startswith("warning")


def test_phantoms():
    z = make_phantom("zero", N=9)
    assert z.sigma.is_zero() and z.kappa.is_zero()
    b = make_phantom("ball", N=17, sigma0=0.5)
    g = b.grid
    inside = g.node_radius() <= 1.0
    assert np.all(b.sigma.values[inside] == 0.5)
    s = make_phantom("smooth-bump", N=33)
    v = s.sigma.values
    assert np.unravel_index(np.argmax(v), v.shape) == (16, 16, 16)
    r = g_r = s.grid.node_radius()
    assert np.all(v[g_r >= 1.0] == 0) and v[r < 1].min() >= 0
    # profile: exp(-1/(1-r^2)) scaled to peak 1
    x = np.array([[0.5, 0, 0]])
    assert s.sigma(x)[0] == pytest.approx(np.exp(1 - 1 / 0.75), rel=1e-9)
    with pytest.raises(DomainError):
        make_phantom("nope", N=9)


@given(st.floats(-0.99, 0.99), st.floats(-0.99, 0.99), st.floats(-0.99, 0.99))
@settings(max_examples=30, deadline=None)
def test_interpolation_reproduces_linear(a, b, c):
    g = CartesianGrid(3, 9, 1.0)
    P = g.points()
    vals = (P @ np.array([1.0, -2.0, 0.5]) + 3).reshape(g.shape)
    x = np.array([[a, b, c]])
    assert g.interpolate(vals, x)[0] == pytest.approx(x[0] @ [1.0, -2.0, 0.5] + 3, abs=1e-12)
