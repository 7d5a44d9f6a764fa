import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stochgrav.background import (
    C_LIGHT,
    BackgroundEnsemble,
    PlaneWaveMode,
    SpectrumParams,
    metric_perturbation_at,
    sample_background,
)
from stochgrav.deviation import (
    DeviationState,
    StochasticForcing,
    TidalSignal,
    accumulate_phase,
    analytic_oscillator,
    integrate_deviation,
    kuiper_statistic,
    phase_statistics,
    riemann_from_background,
    riemann_series,
)
from stochgrav.errors import DomainError, GridError, SampleSizeError, StepSizeError

R_UNIT = 1.0 / C_LIGHT**2  # omega = 1 rad/s
NO_FORCE = StochasticForcing()


def fd_riemann(mode, t, h):
    """-(1/2c^2) d^2 h_11 / dt^2 by a 5-point central difference in coordinate time."""

    def h11(s):
        return metric_perturbation_at(mode, np.array([C_LIGHT * s, 0.0, 0.0, 0.0]))[1, 1]

    d2 = (-h11(t + 2 * h) + 16 * h11(t + h) - 30 * h11(t) + 16 * h11(t - h) - h11(t - 2 * h)) / (12 * h * h)
    return -d2 / (2 * C_LIGHT**2)


def single_mode(a=1e-3, freq=2.0, phase0=0.0):
    e = np.zeros((4, 4))
    e[1, 1], e[2, 2] = a, -a
    k0 = 2 * math.pi * freq / C_LIGHT
    return PlaneWaveMode(e, [k0, 0.0, 0.0, -k0], phase0)


def one_mode_ensemble(mode):
    return BackgroundEnsemble((mode,), 0, SpectrumParams(1.0, 10.0))


def oscillator_run(dt_fraction=200, periods=10):
    period = 2 * math.pi
    steps = periods * dt_fraction
    traj = integrate_deviation(TidalSignal.constant(R_UNIT), NO_FORCE, DeviationState(1.0, 0.0), period / dt_fraction, steps)
    exact = analytic_oscillator(R_UNIT, 1.0, traj.tau)
    return traj, float(np.max(np.abs(traj.ell - exact)))


# riemann_from_background ----------------------------------------------------------


def test_empty_ensemble_has_no_tidal_field():
    assert riemann_from_background(BackgroundEnsemble.empty(), 0.3) == 0.0
    assert np.all(riemann_series(BackgroundEnsemble.empty(), [0.0, 1.0]) == 0.0)


def test_single_mode_at_zero_phase():
    a, f = 1e-3, 2.0
    omega = 2 * math.pi * f
    got = riemann_from_background(one_mode_ensemble(single_mode(a, f)), 0.0)
    assert got == pytest.approx(a * omega**2 / C_LIGHT**2, rel=1e-14)
    assert got == pytest.approx(fd_riemann(single_mode(a, f), 0.0, 1e-3), rel=1e-6)


def test_agrees_with_finite_differences_for_random_modes():
    ens = sample_background(100, 12, SpectrumParams(1.0, 100.0, rms=1e-4))
    rng = np.random.default_rng(1)
    for mode in ens.modes:
        t = rng.uniform(0, 1)
        exact = riemann_from_background(BackgroundEnsemble((mode,), 0, ens.spectrum), t)
        f = mode.angular_frequency / (2 * math.pi)
        fd = fd_riemann(mode, t, 1e-3 / f)
        scale = mode.wave_vector[0] ** 2 * abs(mode.polarization[1, 1])
        assert abs(exact - fd) <= 1e-6 * max(abs(exact), scale)


def test_superposition_is_additive():
    m1, m2 = single_mode(1e-3, 2.0, 0.1), single_mode(-4e-4, 7.0, 2.0)
    both = BackgroundEnsemble((m1, m2), 0, SpectrumParams(1.0, 10.0))
    for t in (0.0, 0.13, 2.7):
        r1 = riemann_from_background(one_mode_ensemble(m1), t)
        r2 = riemann_from_background(one_mode_ensemble(m2), t)
        assert riemann_from_background(both, t) == pytest.approx(r1 + r2, abs=1e-14 * (abs(r1) + abs(r2)))


def test_vectorized_series_matches_scalar_loop():
    ens = sample_background(30, 3, SpectrumParams(1.0, 50.0))
    t = np.linspace(0, 1, 17)
    pos = (3e4, -1e4, 5e3)
    scalar = [riemann_from_background(ens, ti, pos) for ti in t]
    assert np.allclose(riemann_series(ens, t, pos), scalar, rtol=1e-12, atol=1e-30)


# integrate_deviation ----------------------------------------------------------------


def test_free_pair_stays_put():
    traj = integrate_deviation(TidalSignal.constant(0.0), NO_FORCE, DeviationState(1.0, 0.0), 0.01, 500)
    assert len(traj) == 501
    assert np.all(traj.ell == 1.0)
    assert np.all(traj.ell_rate == 0.0)


def test_returns_initial_state_first():
    traj = integrate_deviation(TidalSignal.constant(R_UNIT), NO_FORCE, DeviationState(0.5, 0.2, 3.0), 0.01, 3)
    assert traj[0] == DeviationState(0.5, 0.2, 3.0)
    assert traj.tau[-1] == pytest.approx(3.03)


def test_uniform_acceleration():
    f0, ell0 = 0.25, 2.0
    traj = integrate_deviation(TidalSignal.constant(0.0), StochasticForcing.fixed(f0), DeviationState(ell0, 0.0), 0.1, 100)
    # RK4 is exact for a quadratic solution
    assert np.allclose(traj.ell, ell0 + 0.5 * f0 * traj.tau**2, rtol=1e-13, atol=1e-13)
    assert np.allclose(traj.ell_rate, f0 * traj.tau, rtol=1e-13, atol=1e-13)


def test_constant_tidal_field_tracks_cosine():
    _, err = oscillator_run()
    # classic RK4 at 200 steps per period: global error of a few 1e-7 over 10 periods
    assert err < 1e-6


def test_energy_drift_below_tolerance():
    traj, _ = oscillator_run()
    energy = traj.energy(R_UNIT)
    assert np.max(np.abs(energy - energy[0])) / energy[0] < 1e-6


def test_fourth_order_convergence():
    _, coarse = oscillator_run(200)
    _, fine = oscillator_run(400)
    assert 14.0 <= coarse / fine <= 18.0


@settings(max_examples=30, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5), st.floats(-5, 5))
def test_trajectories_are_linear_in_initial_state(u0, u1, v0, v1):
    tidal = TidalSignal.from_background(sample_background(5, 1, SpectrumParams(1.0, 10.0, rms=1e-3)))
    run = lambda a, b: integrate_deviation(tidal, NO_FORCE, DeviationState(a, b), 1e-3, 300)
    u, v, uv = run(u0, u1), run(v0, v1), run(u0 + v0, u1 + v1)
    assert np.allclose(uv.ell, u.ell + v.ell, rtol=0, atol=1e-9)
    assert np.allclose(uv.ell_rate, u.ell_rate + v.ell_rate, rtol=0, atol=1e-9)


def test_stability_guard():
    with pytest.raises(StepSizeError):
        integrate_deviation(TidalSignal.constant(R_UNIT), NO_FORCE, DeviationState(1.0, 0.0), 0.2, 10)


def test_non_positive_step_rejected():
    with pytest.raises(StepSizeError):
        integrate_deviation(TidalSignal.constant(0.0), NO_FORCE, DeviationState(1.0, 0.0), 0.0, 10)


def test_gaussian_forcing_is_reproducible():
    assert StochasticForcing.draw(0.5, 9) == StochasticForcing.draw(0.5, 9)
    assert StochasticForcing.draw(0.0, 9).value_per_realization == 0.0


# analytic_oscillator -------------------------------------------------------------------


def test_analytic_oscillator_examples():
    assert analytic_oscillator(R_UNIT, 1.5, 0.0) == 1.5
    assert analytic_oscillator(R_UNIT, 1.5, math.pi) == pytest.approx(-1.5, rel=1e-15)
    assert analytic_oscillator(R_UNIT, 2.0, math.pi / 3) == pytest.approx(1.0, rel=1e-15)


@pytest.mark.parametrize("r0", [0.0, -1e-17])
def test_analytic_oscillator_domain(r0):
    with pytest.raises(DomainError):
        analytic_oscillator(r0, 1.0, 0.0)


# accumulate_phase -----------------------------------------------------------------------


@pytest.mark.parametrize("mode", ["literal", "integral"])
def test_constant_frequency_phase(mode):
    omega0 = 3.0
    t = np.linspace(0.0, 5.0, 101)
    trace = accumulate_phase(TidalSignal.constant((omega0 / C_LIGHT) ** 2), t, mode)
    assert trace.phi[0] == 0.0
    assert np.allclose(trace.phi, omega0 * t, rtol=1e-14, atol=1e-14)


def test_linearly_rising_frequency():
    omega0, big_t = 2.0, 4.0
    tidal = TidalSignal(lambda s: (omega0 * (1 + s / big_t) / C_LIGHT) ** 2)
    t = np.linspace(0.0, 3.0, 301)
    integral = accumulate_phase(tidal, t, "integral")
    literal = accumulate_phase(tidal, t, "literal")
    # trapezoid rule is exact for a linear integrand
    assert np.allclose(integral.phi, omega0 * (t + t**2 / (2 * big_t)), rtol=1e-12, atol=1e-12)
    assert np.allclose(literal.phi, omega0 * (t + t**2 / big_t), rtol=1e-12, atol=1e-12)


def test_single_point_grid():
    trace = accumulate_phase(TidalSignal.constant(R_UNIT), [0.0])
    assert trace.phi.shape == (1,) and trace.phi[0] == 0.0


def test_unsorted_grid_rejected():
    with pytest.raises(GridError):
        accumulate_phase(TidalSignal.constant(R_UNIT), [0.0, 2.0, 1.0])


def test_integral_phase_is_additive():
    tidal = TidalSignal.from_background(sample_background(20, 4, SpectrumParams(1.0, 10.0, rms=1e-3)))
    t = np.linspace(0.0, 2.0, 2001)
    whole = accumulate_phase(tidal, t).phi[-1]
    first = accumulate_phase(tidal, t[:1001]).phi[-1]
    second = accumulate_phase(tidal, t[1000:]).phi[-1]
    assert whole == pytest.approx(first + second, abs=1e-12 * max(1.0, abs(whole)))


def test_negative_tidal_values_are_clipped():
    tidal = TidalSignal(lambda s: np.where(s < 1.0, -R_UNIT, R_UNIT))
    trace = accumulate_phase(tidal, [0.0, 0.5, 1.0, 1.5])
    assert trace.clipped_fraction == 0.5
    assert trace.phi[1] == 0.0


# phase_statistics ---------------------------------------------------------------------


def test_zero_amplitude_background_has_no_phase():
    ens = sample_background(3, 0, SpectrumParams(1.0, 2.0, rms=0.0))
    stats = phase_statistics(ens, 1.0, 10, seed=1)
    assert stats.mean == 0.0 and stats.variance == 0.0


def test_forced_shared_subseed_has_zero_variance():
    ens = sample_background(3, 0, SpectrumParams(1.0, 2.0, rms=1e-4))
    stats = phase_statistics(ens, 1.0, 8, seed=1, fixed_subseed=True)
    assert stats.variance == 0.0
    assert stats.mean != 0.0


def test_needs_two_realizations():
    with pytest.raises(SampleSizeError):
        phase_statistics(sample_background(1, 0, SpectrumParams(1.0, 2.0)), 1.0, 1, seed=0)


def test_worker_count_does_not_change_result():
    ens = sample_background(2, 0, SpectrumParams(1.0, 2.0, rms=1e-4))
    a = phase_statistics(ens, 1.0, 20, seed=5, workers=1)
    b = phase_statistics(ens, 1.0, 20, seed=5, workers=4)
    assert np.array_equal(a.phases, b.phases)


def brute_force_single_mode_phases(rms, f_min, f_max, window, n, seed):
    """End-of-window phases of one isotropic TT mode drawn without the package sampler.

    For a TT tensor along a uniformly random direction ``n`` with a uniform
    plus/cross mixing angle, ``e_11 = A (1 - n_1^2) cos(a)`` with ``n_1``
    uniform on ``[-1, 1]``; ``A^2 = 15 rms^2 / 8`` for a flat spectrum.
    """
    rng = np.random.default_rng(seed)
    amp = rms * math.sqrt(15.0 / 8.0)
    n1 = rng.uniform(-1, 1, n)
    e11 = amp * (1 - n1**2) * np.cos(rng.uniform(0, 2 * math.pi, n))
    f = np.exp(rng.uniform(math.log(f_min), math.log(f_max), n))
    phase0 = rng.uniform(0, 2 * math.pi, n)
    t = np.linspace(0.0, window, 4001)
    out = np.empty(n)
    for j in range(n):
        omega_g = 2 * math.pi * f[j]
        # c sqrt(R) with R = (omega_g / c)^2 e11 cos(.)
        w = omega_g * np.sqrt(np.maximum(e11[j] * np.cos(omega_g * t + phase0[j]), 0.0))
        out[j] = np.trapezoid(w, t) if hasattr(np, "trapezoid") else np.trapz(w, t)
    return out


def variance_stderr(x):
    m = x - x.mean()
    return math.sqrt(max(np.mean(m**4) - np.mean(m**2) ** 2, 0.0) / x.size)


def test_single_mode_phase_spread_matches_brute_force():
    spectrum = SpectrumParams(1.0, 2.0, rms=1e-4)
    stats = phase_statistics(sample_background(1, 0, spectrum), 1.0, 2000, seed=17, steps_per_period=256)
    oracle = brute_force_single_mode_phases(1e-4, 1.0, 2.0, 1.0, 8000, seed=99)
    se = math.hypot(variance_stderr(stats.phases), variance_stderr(oracle))
    assert abs(stats.variance - np.var(oracle, ddof=1)) < 3 * se


# kuiper_statistic ------------------------------------------------------------------------


def test_kuiper_uniform_sample_not_rejected():
    v, p = kuiper_statistic(np.random.default_rng(0).uniform(0, 2 * math.pi, 5000))
    assert p > 0.01
    assert v < 0.05


def test_kuiper_concentrated_sample_rejected():
    v, p = kuiper_statistic(np.random.default_rng(0).normal(1.0, 0.1, 500))
    assert p < 1e-6
    assert v > 0.5
