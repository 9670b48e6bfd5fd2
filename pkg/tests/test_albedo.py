import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from albedo_lab.albedo import (PROFILES, BeamSpec, apply_albedo, ballistic_component, beta_column_check,
                               bin_masses, eval_E, kernel_traces, sample_beam, single_component)
from albedo_lab.errors import DomainError, RefusalError
from albedo_lab.geometry import BoundaryDistribution, DirectionSet, RaySet
from albedo_lab.inversion import richardson


@given(st.floats(0.005, 0.2), st.floats(-0.8, 0.8), st.sampled_from(PROFILES))
@settings(max_examples=25, deadline=None)
def test_beam_normalised(eps, s, profile):
    b = sample_beam(BeamSpec.offset(s, eps=eps, profile=profile))
    assert b.norm() == pytest.approx(1.0, abs=1e-6)
    assert np.all(b.values >= 0)


def test_beam_support_scales_with_eps():
    spread = []
    for eps in (0.04, 0.02):
        b = sample_beam(BeamSpec.central(eps=eps))
        spread.append(np.max(np.linalg.norm(b.rays.feet, axis=1)))
        assert b.norm() == pytest.approx(1.0, abs=1e-6)
    assert spread[1] == pytest.approx(spread[0] / 2, rel=1e-9)


def test_beam_refusals():
    with pytest.raises(RefusalError):
        sample_beam(BeamSpec.central(eps=1e-5))
    with pytest.raises(DomainError):
        sample_beam(BeamSpec.offset(1.99))


def test_profiles_agree(phantoms):
    ball = phantoms("ball")
    m = [ballistic_component(sample_beam(BeamSpec.offset(0.6, profile=p)), ball.sigma).mass() for p in PROFILES]
    assert abs(m[0] - m[1]) < 1e-3


def test_E_values(phantoms):
    ball = phantoms("ball")
    zero = phantoms("zero")
    x = np.zeros((1, 3))
    assert eval_E(x, 1.0, [0, 0, -1.0], [0, 0, 1.0], zero.sigma)[0] == 1.0
    # broken ray entirely outside the support
    assert eval_E([[1.5, 0, 0]], 0.0, [0, 0, 1.0], [0, 1.0, 0], ball.sigma)[0] == 1.0
    # back-scatter at the pole: both legs are full diameters
    assert eval_E(x, 1.0, [0, 0, -1.0], [0, 0, 1.0], ball.sigma)[0] == pytest.approx(np.exp(-4), rel=1e-3)


def test_ballistic_masses(phantoms):
    zero = phantoms("zero")
    assert ballistic_component(sample_beam(BeamSpec.central()), zero.sigma).mass() == pytest.approx(1, abs=1e-6)
    half = phantoms("ball", sigma0=0.5)
    assert ballistic_component(sample_beam(BeamSpec.central()), half.sigma).mass() == pytest.approx(np.exp(-1), rel=0.01)
    ball = phantoms("ball")
    eps = (0.08, 0.04, 0.02)
    m = [ballistic_component(sample_beam(BeamSpec.offset(0.6, eps=e)), ball.sigma).mass() for e in eps]
    assert richardson(eps, m) == pytest.approx(np.exp(-1.6), rel=0.01)


def test_single_component_cases(phantoms):
    dirs = DirectionSet.default(3)
    beam = sample_beam(BeamSpec.central())
    assert single_component(beam, phantoms("ball", c=0.0), dirs).mass() == 0
    assert single_component(beam, phantoms("ball", sigma0=0.0, c=0.3), dirs).mass() == pytest.approx(0.6, rel=0.02)


def test_single_component_follows_phase(phantoms):
    pair = phantoms("anisotropic", sigma0=0.0)
    dirs = DirectionSet.default(3)
    s = single_component(sample_beam(BeamSpec.central()), pair, dirs)
    mu = s.rays.dirs[:, 2]
    ratio = s.masses[mu > 0.5].sum() / s.masses[mu < -0.5].sum()
    p = pair.kappa.phase(dirs.nodes[:, 2]) * dirs.weights
    m = dirs.nodes[:, 2]
    assert ratio == pytest.approx(p[m > 0.5].sum() / p[m < -0.5].sum(), rel=0.03)


def test_decomposition_without_scattering(lattice17, phantoms):
    pair = phantoms("ball", c=0.0)
    dec = apply_albedo(BeamSpec.central(), pair, lattice17)
    m = dec.masses
    assert m["single"] == 0 and m["multiple"] == 0
    assert m["ballistic"] == pytest.approx(np.exp(-2), rel=0.01)


@pytest.fixture(scope="module")
def ball_albedo(lattice17, phantoms):
    beam = sample_beam(BeamSpec.central())
    return beam, apply_albedo(beam, phantoms("ball"), lattice17)


def test_multiple_geometric_bound(ball_albedo):
    _, dec = ball_albedo
    q = 1 - np.exp(-1.2)
    assert 0 < dec.masses["multiple"] <= q * q / (1 - q) * 4.0
    assert dec.tail_bound < 1e-6


def test_rotation_about_beam_axis(ball_albedo, lattice17, phantoms):
    beam, dec = ball_albedo
    c, s = np.cos(0.7), np.sin(0.7)
    M = np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])
    r = beam.rays
    rot = RaySet(r.dirs @ M.T, r.feet @ M.T, r.weights, r.group, r.group_dirs @ M.T, r.R)
    dec2 = apply_albedo(BoundaryDistribution(rot, beam.values, -1), phantoms("ball"), lattice17)
    for part in ("ballistic", "single", "multiple"):
        a = bin_masses(getattr(dec, part), [0, 0, 1])
        b = bin_masses(getattr(dec2, part), [0, 0, 1])
        assert np.abs(a - b).sum() <= 1e-3 * np.abs(a).sum()


def test_kernel_traces_are_first_orders(ball_albedo, lattice17, phantoms):
    beam, dec = ball_albedo
    a1, a2 = kernel_traces(beam, phantoms("ball"), lattice17)
    assert a1.mass() == pytest.approx(dec.masses["ballistic"], rel=1e-9)
    assert a2.mass() == pytest.approx(dec.report["grid_single_mass"], rel=1e-9)


def test_column_bound(phantoms):
    rng = np.random.default_rng(0)
    x = rng.normal(size=(8, 3))
    x *= (0.9 * rng.random(8) / np.linalg.norm(x, axis=1))[:, None]
    v = rng.normal(size=(8, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    samples = list(zip(x, v))
    rep = beta_column_check(phantoms("ball", c=0.0), samples)
    assert rep.passed and max(rep.values) == 0
    rep = beta_column_check(phantoms("ball"), samples)
    assert rep.passed and rep.bound == pytest.approx(2.0 * 0.09)
