import numpy as np
import pytest
from hypothesis import given, strategies as st

from albedo_lab.errors import DomainError
from albedo_lab.geometry import (BoundaryDistribution, DirectionSet, DiscRule, DomainConfig, RaySet,
                                 chord_interval, integrate_O, make_frame, project_to_F, sphere_area)

unit = st.tuples(*[st.floats(-1, 1)] * 3).map(np.array).filter(lambda v: np.linalg.norm(v) > 0.1).map(
    lambda v: v / np.linalg.norm(v))


def test_frame_axis_cases():
    F = make_frame([0, 0, 1])
    assert np.allclose(F[0], [1, 0, 0]) and np.allclose(F[1], [0, 1, 0])
    v = np.array([1.0, 0, 0])
    e1, e2 = make_frame(v)
    assert abs(e1 @ v) < 1e-15 and abs(e2 @ v) < 1e-15
    assert np.allclose(np.cross(e1, e2), v)


@given(unit)
def test_frame_orthonormal(v):
    e1, e2 = make_frame(v)
    M = np.array([e1, e2, v])
    assert np.allclose(M @ M.T, np.eye(3), atol=1e-12)
    assert np.allclose(np.cross(e1, e2), v, atol=1e-12)


def test_frame_diagonal():
    v = np.ones(3) / np.sqrt(3)
    e1, e2 = make_frame(v)
    for a, b in [(e1, e2), (e1, v), (e2, v)]:
        assert abs(a @ b) < 1e-14


def test_chords():
    assert chord_interval([0, 0, 0], [0, 0, 1], 1.0) == pytest.approx((-1, 1))
    assert chord_interval([0, 0.6, 0], [1, 0, 0], 1.0) == pytest.approx((-0.8, 0.8), abs=1e-14)
    assert chord_interval([0, 2, 0], [1, 0, 0], 1.0) is None


@given(unit, st.floats(0, 0.99))
def test_chord_endpoints_on_sphere(v, s):
    e1, _ = make_frame(v)
    x0 = s * e1
    t0, t1 = chord_interval(x0, v, 1.0)
    for t in (t0, t1):
        assert np.linalg.norm(x0 + t * v) == pytest.approx(1.0, abs=1e-12)
    assert t1 - t0 == pytest.approx(2 * np.sqrt(1 - s * s), abs=1e-12)


def test_project_to_F():
    y, p = project_to_F([0.3, 0, 5], [0, 0, 1], 1, 2.0)
    assert np.allclose(y, [0.3, 0, 0]) and np.allclose(p, [0.3, 0, 2.0])
    v = np.array([0.6, 0.8, 0])
    y, p = project_to_F([0, 0, 0], v, -1, 2.0)
    assert np.allclose(y, 0) and np.allclose(p, -2.0 * v)
    y, _ = project_to_F([0, 2.0 - 1e-9, 0], [1, 0, 0], 1, 2.0)
    assert np.linalg.norm(y) < 2.0
    with pytest.raises(DomainError):
        project_to_F([0, 2.5, 0], [1, 0, 0], 1, 2.0)
    with pytest.raises(DomainError):
        project_to_F([0, 0, 0], [1, 0, 0], 0, 2.0)


def test_domain_config_validation():
    with pytest.raises(DomainError):
        DomainConfig(n=4)
    with pytest.raises(DomainError):
        DomainConfig(R=1.0, rho=1.0)
    assert DomainConfig().volume_O == pytest.approx(4 * np.pi * np.pi * 4 * 4)


def test_direction_sets_sum_to_sphere():
    for n in (2, 3):
        d = DirectionSet.default(n)
        assert d.weights.sum() == pytest.approx(sphere_area(n), rel=1e-12)
        assert np.allclose(np.linalg.norm(d.nodes, axis=1), 1)
    d = DirectionSet.gauss_product(6, 12)
    assert DirectionSet.from_json(d.to_json()).nodes == pytest.approx(d.nodes)


def test_disc_rules_area():
    for rule in (DiscRule.polar(2.0, 8, 16), DiscRule.spiral(2.0, 300), DiscRule.default(3, 2.0)):
        assert rule.weight * len(rule) == pytest.approx(np.pi * 4.0, rel=1e-12)


def test_integrate_O_constant_and_ball():
    dirs = DirectionSet.default(3)
    disc = DiscRule.default(3, 2.0)
    one = integrate_O(lambda x, v: np.ones(len(x)), dirs, disc)
    assert one == pytest.approx(4 * np.pi * np.pi * 4 * 4, rel=1e-9)
    assert integrate_O(lambda x, v: np.zeros(len(x)), dirs, disc) == 0.0
    rho = 1.0
    ball = integrate_O(lambda x, v: (np.linalg.norm(x, axis=1) < rho).astype(float), dirs,
                       DiscRule.spiral(2.0, 4000), n_t=256)
    assert ball == pytest.approx(4 * np.pi * 4 / 3 * np.pi * rho**3, rel=0.01)


def test_boundary_constant_norm():
    rays = RaySet.tensor(DirectionSet.default(3), DiscRule.default(3, 2.0))
    assert BoundaryDistribution.constant(rays, 0.0, -1).norm() == 0.0
    assert BoundaryDistribution.constant(rays, 1.0, -1).norm() == pytest.approx(4 * np.pi * np.pi * 4, rel=1e-9)
    with pytest.raises(DomainError):
        BoundaryDistribution(rays, np.ones(3), -1)
