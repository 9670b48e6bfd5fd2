import csv

import numpy as np
import pytest
from hypothesis import given, strategies as st

from albedo_lab.coefficients import make_phantom
from albedo_lab.inversion import (DEFAULT_EPS, recover_k, recover_line_integrals, recover_sigma, richardson,
                                  sweep_ballistic)
from albedo_lab.xray import xray_transform

coef = st.floats(-5, 5)


@given(coef, coef, coef)
def test_richardson_exact_on_quadratics(a, b, c):
    eps = np.array(DEFAULT_EPS)
    vals = a + b * eps + c * eps**2
    assert richardson(eps, vals) == pytest.approx(a, abs=1e-9)


def test_richardson_trailing_axes():
    eps = np.array(DEFAULT_EPS)
    vals = np.stack([np.array([1.0, 2.0]) + e * 3 + e * e for e in eps])
    assert np.allclose(richardson(eps, vals), [1.0, 2.0])


def test_sweep_zero_and_chord():
    zero = make_phantom("zero", N=17)
    s = recover_line_integrals(zero.sigma, n_angles=4, n_s=9, z=[0.0])
    assert np.max(np.abs(s.values)) < 1e-3
    half = make_phantom("ball", N=17, sigma0=0.5)
    s = recover_line_integrals(half.sigma, n_angles=4, n_s=9, z=[0.0])
    assert s.stacked[0, :, 4] == pytest.approx(np.ones(4), rel=0.01)
    assert not s.flagged.any()


def test_extrapolation_beats_raw():
    b = make_phantom("smooth-bump", N=17)
    probe = recover_line_integrals(make_phantom("zero", N=17).sigma, n_angles=4, n_s=9, z=[0.0, 0.25])
    masses = np.stack([sweep_ballistic(b.sigma, probe.dirs, probe.feet, e) for e in DEFAULT_EPS])
    exact = xray_transform(b.sigma, dirs=probe.dirs, feet=probe.feet).values
    extrap = np.max(np.abs(-np.log(richardson(DEFAULT_EPS, masses)) - exact))
    raw = np.max(np.abs(-np.log(masses[-1]) - exact))
    assert extrap < raw


def test_recorded_masses_path():
    b = make_phantom("smooth-bump", N=17)
    s = recover_line_integrals(b.sigma, n_angles=4, n_s=9, z=[0.0])
    again = recover_line_integrals(b.sigma, n_angles=4, n_s=9, z=[0.0],
                                   masses=np.exp(-np.tile(s.values, (3, 1))))
    assert np.allclose(again.values, s.values, atol=1e-12)


def test_zero_phantom_recovers_zero():
    z = make_phantom("zero", N=17)
    rec = recover_sigma(recover_line_integrals(z.sigma, n_angles=16, n_s=16), z.grid)
    assert np.max(np.abs(rec.sigma.values)) < 1e-3


def test_ball_plateau():
    b = make_phantom("ball", N=17)
    # only the slices crossing the core are swept
    z = b.grid.axis[np.abs(b.grid.axis) < 0.6]
    rec = recover_sigma(recover_line_integrals(b.sigma, z=z), b.grid, b.sigma)
    core = rec.sigma.values[b.grid.node_radius() < 0.6]
    assert np.all(np.abs(core - 1.0) <= 0.05)
    assert set(rec.errors) == {"l2_rel", "h_minus_half", "sup"}


def test_k_recovery_cases(tmp_path):
    z = make_phantom("ball", N=17, c=0.0)
    assert np.max(np.abs(recover_k(z, z.sigma).khat)) < 1e-12
    clear = make_phantom("ball", N=17, sigma0=0.0, c=0.3)
    a = recover_k(clear, clear.sigma)
    assert np.all(np.abs(a.khat * 4 * np.pi / 0.3 - 1) <= 0.03)
    dense = make_phantom("ball", N=17, sigma0=1.0, c=0.3)
    b = recover_k(dense, dense.sigma)
    assert len(a.khat) == len(b.khat)
    assert np.all(np.abs(b.khat / a.khat - 1) <= 0.05)
    c = recover_k(dense, dense.sigma, delta=0.5)
    assert c.rejected and all(r["reason"] == "near-parallel" for r in c.rejected)
    path = tmp_path / "rej.csv"
    c.write_rejections(path)
    rows = list(csv.DictReader(open(path)))
    assert len(rows) == len(c.rejected) and set(rows[0]) == {"beam", "t_prime", "direction", "reason", "E"}
    field = a.assemble(clear.grid, clear.kappa.phase)
    inner = clear.grid.node_radius() < 0.8
    hit = field.amplitude[inner] > 0
    assert hit.any() and np.allclose(field.amplitude[inner][hit], 0.3, rtol=0.03)
