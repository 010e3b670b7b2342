from __future__ import annotations

import math

import numpy as np
import pytest

from zospec.asymptotics import (
    BoundsError,
    CoefficientReport,
    DirectionFunction,
    MCBounds,
    ScalarHamiltonian,
    closed_form_coefficient,
    counting_exponent,
    default_bounds,
    geometry_constants,
    hydrogen_count,
    phase_volume_mc,
    power_hamiltonian,
    predicted_counting,
    radial_quadrature_coefficient,
    slice_volume,
)
from zospec.spectra import fit_power_law


def const(d, a=1.0, h=1.0):
    return DirectionFunction.constant(d, a * np.eye(d)), DirectionFunction.constant(d, h)


@pytest.mark.parametrize(
    "d, omega, beta",
    [(1, 2.0, math.pi / 2), (2, math.pi, 0.5), (3, 4 * math.pi / 3, math.pi / 16)],
)
def test_geometry_constants(d, omega, beta):
    o, b = geometry_constants(d)
    assert o == pytest.approx(omega, rel=1e-14)
    assert b == pytest.approx(beta, rel=1e-14)


def test_slice_volume():
    assert slice_volume(np.eye(2), 1.0) == pytest.approx(math.pi)
    assert slice_volume(np.eye(2), 0.0) == 0.0
    assert slice_volume(np.eye(2), -1.0) == 0.0
    assert slice_volume(np.diag([4.0, 1.0]), 1.0) == pytest.approx(math.pi / 2)


def test_slice_volume_rejects_indefinite():
    with pytest.raises(ValueError):
        slice_volume(np.diag([1.0, -1.0]), 1.0)


def test_slice_volume_ellipse_by_rejection():
    rng = np.random.default_rng(0)
    p = rng.uniform(-1, 1, (400_000, 2))
    frac = np.mean(4 * p[:, 0] ** 2 + p[:, 1] ** 2 < 1)
    assert slice_volume(np.diag([4.0, 1.0]), 1.0) == pytest.approx(4 * frac, rel=0.01)


def test_closed_form_hydrogen():
    rep = closed_form_coefficient(*const(3), 3)
    assert rep.C == pytest.approx(1 / 24, rel=1e-6)
    assert rep.theta == 1.5
    assert rep.method == "closed_form"


@pytest.mark.parametrize("d, want", [(1, 1.0), (2, 0.25)])
def test_closed_form_low_dimensions(d, want):
    assert closed_form_coefficient(*const(d), d).C == pytest.approx(want, rel=1e-8)


def test_closed_form_zero_and_scaling():
    assert closed_form_coefficient(*const(2, h=0.0), 2).C == 0.0
    assert closed_form_coefficient(*const(2, h=-1.0), 2).C == 0.0
    for d in (1, 2, 3):
        a = closed_form_coefficient(*const(d, h=1.0), d).C
        b = closed_form_coefficient(*const(d, h=1.7), d).C
        assert b == pytest.approx(1.7**d * a, rel=1e-8)


def test_closed_form_anisotropic_matches_radial_quadrature():
    a2 = DirectionFunction(2, lambda om: (1 + 0.5 * om[:, 0] ** 2)[:, None, None] * np.eye(2), True)
    h = DirectionFunction(2, lambda om: 1 + 0.3 * np.cos(2 * np.arctan2(om[:, 1], om[:, 0])))
    a = closed_form_coefficient(a2, h, 2).C
    b = radial_quadrature_coefficient(a2, h, 2).C
    assert a == pytest.approx(b, rel=1e-6)


def test_monte_carlo_selects_h_power_d():
    # h = 2 in d = 1: the h^d closed form gives 2, the h^(d/2) variant gives sqrt 2
    a2, h = const(1, h=2.0)
    mc = phase_volume_mc(power_hamiltonian(a2, h), 1, 400_000, default_bounds(a2, h), seed=6)
    good = closed_form_coefficient(a2, h, 1).C
    bad = closed_form_coefficient(a2, h, 1, half_power=True).C
    assert good == pytest.approx(2.0, rel=1e-8) and bad == pytest.approx(2**0.5, rel=1e-8)
    assert abs(mc.C - good) <= 3 * mc.stderr
    assert abs(mc.C - bad) > 10 * mc.stderr


def test_predicted_counting():
    r = CoefficientReport(1 / 24, 1.5, "oracle")
    assert predicted_counting(r, 0.01) == pytest.approx(1000 / 24)
    assert predicted_counting(r, 1.0) == pytest.approx(1 / 24)


def test_report_json_and_stderr():
    r = CoefficientReport(0.1, 1.0, "monte_carlo", 0.01, seeds=(1, 4), nodes=100)
    assert '"seeds": [1, 4]' in r.to_json()
    with pytest.raises(ValueError):
        CoefficientReport(0.1, 1.0, "monte_carlo", -1.0)


def test_counting_exponent():
    assert counting_exponent(3) == 1.5
    assert counting_exponent(2) == 1.0
    assert counting_exponent(1, kappa=0.25) == pytest.approx(1.5)


def test_direction_function_checks():
    a2, h = const(2)
    assert a2.ellipticity()[0] == pytest.approx(1.0)
    assert h.finite_on_antipodes()
    with pytest.raises(ValueError):
        DirectionFunction.constant(2, np.diag([1.0, -1.0]))


# Monte-Carlo ----------------------------------------------------------------------


def test_mc_hydrogen_1e6():
    a2, h = const(3)
    r = phase_volume_mc(power_hamiltonian(a2, h), 3, 1_000_000, default_bounds(a2, h), seed=3)
    assert abs(r.C - 1 / 24) <= 3 * r.stderr
    assert r.seeds == (3, 4)


def test_mc_no_potential_is_empty():
    a2, h = const(2, h=0.0)
    r = phase_volume_mc(power_hamiltonian(a2, h), 2, 10_000, default_bounds(a2, h), seed=0)
    assert r.C == 0.0 and r.stderr > 0


def test_mc_d1_matches_closed_form():
    a2, h = const(1)
    r = phase_volume_mc(power_hamiltonian(a2, h), 1, 1_000_000, default_bounds(a2, h), seed=1)
    assert abs(r.C - 1.0) <= 3 * r.stderr


def test_mc_deterministic():
    a2, h = const(2)
    args = (power_hamiltonian(a2, h), 2, 50_000, default_bounds(a2, h))
    assert phase_volume_mc(*args, seed=9).C == phase_volume_mc(*args, seed=9).C
    assert phase_volume_mc(*args, seed=9).C != phase_volume_mc(*args, seed=10).C


def test_mc_boundary_contact_detected():
    a2, h = const(2)
    tight = MCBounds(0.5, np.eye(2), 1.0)
    with pytest.raises(BoundsError):
        phase_volume_mc(power_hamiltonian(a2, h), 2, 20_000, tight, seed=0)


def test_mc_scaling_law():
    a2, h = const(2)
    H = power_hamiltonian(a2, h)
    s = 1.6
    Hs = ScalarHamiltonian(2, lambda x, xi: H(x / s, xi))
    b = default_bounds(a2, h)
    bs = MCBounds(s * b.R, b.M, b.K * s**b.p, b.p)
    r0 = phase_volume_mc(H, 2, 400_000, b, seed=4)
    r1 = phase_volume_mc(Hs, 2, 400_000, bs, seed=5)
    err = math.hypot(s**2 * r0.stderr, r1.stderr)
    assert abs(r1.C - s**2 * r0.C) <= 3 * err


def test_mc_matrix_branches_sum():
    a2, h = const(1)
    H = power_hamiltonian(a2, h)
    both = ScalarHamiltonian(1, lambda x, xi: np.stack([H(x, xi), H(x, xi)], axis=-1))
    b = default_bounds(a2, h)
    one = phase_volume_mc(H, 1, 100_000, b, seed=2).C
    two = phase_volume_mc(both, 1, 100_000, b, seed=2).C
    assert two == pytest.approx(2 * one)


def test_degenerate_profile_exponent():
    # |xi|^2 - |x|^(-1/2) in d = 1: kappa = 1/4, predicted theta = 3/2
    a2, h = const(1)
    H = power_hamiltonian(a2, h, p=0.5)
    ts = np.array([0.05, 0.1, 0.2, 0.4, 0.8])
    vols = [phase_volume_mc(H, 1, 200_000, default_bounds(a2, h, p=0.5, level=t), level=t, seed=7).C for t in ts]
    fit = fit_power_law(list(zip(ts, vols)), (0.05, 0.8))
    theta = counting_exponent(1, kappa=0.25)
    assert abs(fit.theta - theta) <= 0.1 * theta


def test_hydrogen_count_levels():
    assert int(hydrogen_count(0.25)) == 0
    assert int(hydrogen_count(0.25 - 1e-12)) == 1
    assert np.all(np.diff(hydrogen_count(np.logspace(-5, -1, 50))) <= 0)
