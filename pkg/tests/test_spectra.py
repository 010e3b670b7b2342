from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zospec.asymptotics import DirectionFunction, hydrogen_count, hydrogen_levels
from zospec.quantize import SchrodingerSpec, dense_operator
from zospec.spectra import (
    CountingFunction,
    CountSamples,
    FitError,
    auto_window,
    count_samples,
    counting,
    eigenvalues,
    fit_power_law,
    schrodinger_floor,
    sturm_count_1d,
    t_grid,
)


def rand_herm(rng, n):
    a = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (a + a.conj().T) / 2


def below(A, t):
    return counting(CountingFunction(eigenvalues(dense_operator(A)), 0.0, "below"), t)


# eigenvalues and counting -------------------------------------------------------


def test_eigenvalues_identity_and_diagonal():
    np.testing.assert_allclose(eigenvalues(dense_operator(np.eye(4))), np.ones(4))
    np.testing.assert_allclose(eigenvalues(dense_operator(np.diag([3.0, 1.0, 2.0]))), [1, 2, 3])


def test_counting_examples():
    cf = CountingFunction(np.array([1.5, 1.2, 1.05, 0.9]), 1.0, "above")
    assert counting(cf, 0.1) == 2
    assert counting(cf, 10.0) == 0


def test_counting_is_strict():
    cf = CountingFunction(np.array([1.1, 1.2]), 1.0, "above")
    assert cf.count(0.2) == 0
    assert cf.count(0.2 - 1e-12) == 1


def test_counting_flags_below_floor():
    cf = CountingFunction(np.array([-1.0]), 0.0, "below", resolution_floor=0.1)
    assert cf.flagged(0.05) and not cf.flagged(0.2)
    s = count_samples(cf, [0.05, 0.5])
    assert s.flagged.tolist() == [True, False]


def test_counting_rejects_bad_side_and_t():
    with pytest.raises(ValueError):
        CountingFunction(np.zeros(2), side="left")
    with pytest.raises(ValueError):
        CountingFunction(np.zeros(2)).count(0.0)


def test_hydrogen_count_example():
    cf = CountingFunction(hydrogen_levels(1.0, 20), 0.0, "below")
    assert cf.count(1 / 36 - 1e-9) == 14
    assert int(hydrogen_count(1 / 36 - 1e-9)) == 14
    assert int(hydrogen_count(1 / 36)) == 5


def test_spectral_flip_identity():
    rng = np.random.default_rng(5)
    A = rand_herm(rng, 30) / 10 + 0.5 * np.eye(30)
    op = dense_operator(A)
    up = CountingFunction(eigenvalues(op), 1.0, "above")
    down = CountingFunction(eigenvalues(op.flipped(1.0)), 0.0, "below")
    ts = np.linspace(0.01, 1.0, 25)
    assert np.array_equal(up.count(ts), down.count(ts))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_perturbation_inequality(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 40))
    B = rand_herm(rng, n)
    A = B @ B.conj().T
    V, W = rand_herm(rng, n), rand_herm(rng, n)
    for eps in (0.1, 0.5, 0.9):
        for t in (0.01, 0.3, 2.0):
            lhs = below(A - V - W, t)
            rhs = below(eps * A - W, eps * t) + below((1 - eps) * A - V, (1 - eps) * t)
            assert lhs <= rhs


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_monotonicity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(5, 40))
    X = rand_herm(rng, n)
    Y = rand_herm(rng, n)
    A = X @ X.conj().T
    B = A + Y @ Y.conj().T
    V = rand_herm(rng, n) * 3
    for t in (0.01, 0.5, 3.0):
        assert below(B - V, t) <= below(A - V, t)


# Sturm counts ---------------------------------------------------------------------


def _spec(a, h, scale=1.0):
    return SchrodingerSpec(1, DirectionFunction.constant(1, [[a]]), DirectionFunction.constant(1, h), scale)


def test_sturm_zero_potential():
    assert np.all(sturm_count_1d(_spec(1.0, 1.0, 0.0), np.logspace(-4, 0, 8), 20.0, 400) == 0)


def test_sturm_matches_dense_solver():
    from zospec.quantize import assemble_schrodinger, make_grid

    rng = np.random.default_rng(11)
    for _ in range(20):
        spec = _spec(rng.uniform(0.5, 2.0), rng.uniform(0.2, 3.0))
        L, n = rng.uniform(10, 60), 2 * int(rng.integers(50, 200))
        ev = eigenvalues(assemble_schrodinger(spec, make_grid(1, L, n, dense=False)))
        ts = np.logspace(-3, -0.5, 10)
        want = CountingFunction(ev, 0.0, "below").count(ts)
        assert np.array_equal(sturm_count_1d(spec, ts, L, n), want)


def test_sturm_monotone_in_t():
    c = sturm_count_1d(_spec(1.0, 1.0), np.logspace(-4, 0, 30), 200.0, 4000)
    assert np.all(np.diff(c) <= 0)


def test_schrodinger_floor():
    assert schrodinger_floor(100.0, 1.0, 1.0) == pytest.approx(0.02)
    assert schrodinger_floor(1.0, 1.0, 0.1) == pytest.approx((np.pi / 2) ** 2)


# fits -------------------------------------------------------------------------------


def test_fit_exact_power_laws():
    t = np.array([0.5, 0.2, 0.1, 0.05, 0.02])
    f = fit_power_law(list(zip(t, 5 / t)), (0.02, 0.5))
    assert f.C == pytest.approx(5) and f.theta == pytest.approx(1) and f.r_squared == pytest.approx(1)
    g = fit_power_law(list(zip(t, 2 / np.sqrt(t))), (0.02, 0.5))
    assert g.C == pytest.approx(2) and g.theta == pytest.approx(0.5)


def test_fit_hydrogen_samples():
    t = t_grid(1e-4, 1e-2)
    f = fit_power_law(list(zip(t, hydrogen_count(t))), (1e-4, 1e-2))
    assert abs(f.theta - 1.5) <= 0.05 * 1.5
    assert abs(f.C - 1 / 24) <= 0.1 / 24


def test_fit_errors_and_zero_counts():
    t = np.array([0.5, 0.2, 0.1])
    with pytest.raises(FitError):
        fit_power_law(list(zip(t, 1 / t)), (0.1, 0.5))
    with pytest.raises(FitError):
        fit_power_law([(0.1, 1)] * 6, (0.5, 0.1))
    t = np.logspace(-3, 0, 10)
    n = np.where(t > 0.5, 0, 1 / t)
    f = fit_power_law(list(zip(t, n)), (1e-3, 1.0))
    assert any("zero-count" in s for s in f.notes)
    assert f.point_count == int((n > 0).sum())


def test_fit_fixed_exponent():
    t = np.logspace(-3, -1, 9)
    f = fit_power_law(list(zip(t, 3 * t**-1.0)), (1e-3, 1e-1), theta_fixed=1.0)
    assert f.C_fixed == pytest.approx(3)


@settings(max_examples=50, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(0.5, 50.0), st.integers(0, 1000))
def test_fit_scale_equivariance(theta, scale, seed):
    rng = np.random.default_rng(seed)
    t = np.logspace(-3, -1, 12)
    n = np.maximum(np.round(t**-theta * rng.uniform(0.8, 1.2, t.size)), 1)
    a = fit_power_law(list(zip(t, n)), (1e-3, 1e-1))
    b = fit_power_law(list(zip(t, scale * n)), (1e-3, 1e-1))
    assert b.C == pytest.approx(scale * a.C, rel=1e-12)
    assert b.theta == pytest.approx(a.theta, rel=1e-12, abs=1e-12)


def test_auto_window_picks_clean_decade():
    t = t_grid(1e-3, 1.0)
    n = np.round(1000 * t**-0.5 * (1 + 0.5 * (t > 0.05)))
    f = auto_window(CountSamples(t, n, np.zeros_like(t, bool)), 1e-3)
    assert f.window[1] <= 0.05 * 1.0001
    assert f.theta == pytest.approx(0.5, abs=0.01)


def test_count_samples_csv_round_trip():
    s = CountSamples(np.array([0.1, 0.01]), np.array([3, 7]), np.array([False, True]))
    back = CountSamples.from_csv(s.to_csv())
    assert back.pairs() == s.pairs() and back.flagged.tolist() == [False, True]
    assert s.to_csv().splitlines()[0] == "t,n,flagged"


def test_t_grid_density():
    g = t_grid(1e-3, 1e-1)
    assert g.size == 25
    np.testing.assert_allclose(np.diff(np.log10(g)), 1 / 12)
