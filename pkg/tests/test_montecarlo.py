import numpy as np
import pytest

from albedo_lab.albedo import BeamSpec, sample_beam
from albedo_lab.errors import DomainError
from albedo_lab.geometry import BoundaryDistribution
from albedo_lab.montecarlo import exits_as_distribution, mc_oracle

N = 200_000


@pytest.fixture(scope="module")
def beam():
    return sample_beam(BeamSpec.central())


def test_ballistic_tally_without_scattering(beam, phantoms):
    res = mc_oracle(beam, phantoms("ball", sigma0=0.5, c=0.0), N, seed=3)
    assert abs(res.masses[0] - np.exp(-1)) <= 3 * res.stderr[0]
    assert res.masses[1] == 0 and res.masses[2] == 0


def test_single_tally_without_absorption(beam, phantoms):
    res = mc_oracle(beam, phantoms("ball", sigma0=0.0, c=0.3), N, seed=4)
    assert abs(res.masses[1] - 0.6) <= 3 * res.stderr[1]


def test_same_seed_same_tallies(beam, phantoms):
    pair = phantoms("ball")
    a = mc_oracle(beam, pair, 50_000, seed=11)
    b = mc_oracle(beam, pair, 50_000, seed=11, workers=2)
    assert np.array_equal(a.masses, b.masses) and np.array_equal(a.stderr, b.stderr)
    c = mc_oracle(beam, pair, 50_000, seed=12)
    assert not np.array_equal(a.masses, c.masses)


def test_recorded_exits_match_tallies(beam, phantoms):
    res = mc_oracle(beam, phantoms("ball"), 20_000, seed=5, record=True)
    dist = exits_as_distribution(res, 2.0)
    assert dist.mass() == pytest.approx(res.masses.sum(), rel=1e-9)
    assert exits_as_distribution(res, 2.0, orders=[0]).mass() == pytest.approx(res.masses[0], rel=1e-9)


def test_rejections(beam, phantoms):
    with pytest.raises(DomainError):
        mc_oracle(beam, phantoms("ball"), 100)
    with pytest.raises(DomainError):
        mc_oracle(BoundaryDistribution(beam.rays, beam.values, +1), phantoms("ball"), N)
