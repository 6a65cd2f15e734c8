"""Tests for the SIR simulator."""
import pytest
from pathlib import Path
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

import numpy as np
from scipy.integrate import solve_ivp

from src.errors import InvalidParameters
from src.sir import (
    SirParams,
    SirState,
    WaveSchedule,
    check_survival_identity,
    incidence_from_trajectory,
    integrate,
    simulate_incidence,
    step,
)


def _local_maxima(values) -> int:
    v = np.asarray(values)
    return int(np.sum((v[1:-1] > v[:-2]) & (v[1:-1] > v[2:])))


@pytest.fixture
def single_wave():
    return SirParams.from_infected(beta=0.3, gamma=0.1, i0=1e-4)


def test_step_without_transmission_only_recovers():
    """beta=0 keeps s and decays i by (1 - gamma*dt)."""
    params = SirParams(beta=0.0, gamma=0.1, s0=0.9, i0=0.1)
    state = step(SirState(0.9, 0.1, 0.0), params)
    assert state.s == 0.9
    assert state.i == pytest.approx(0.1 * (1 - 0.1 * 0.1), abs=1e-15)


def test_step_disease_free_is_fixed_point():
    params = SirParams(beta=0.3, gamma=0.1, s0=1.0, i0=0.0)
    state = step(SirState(0.7, 0.0, 0.3), params)
    assert state.s == 0.7
    assert state.i == 0.0
    assert state.r == pytest.approx(0.3, abs=1e-15)


def test_step_matches_reference_integrator():
    """One Euler step stays within 1e-3 of a tight RK45 solution."""
    params = SirParams(beta=0.3, gamma=0.1, s0=0.99, i0=0.01, dt=0.1)

    def rhs(t, y):
        s, i, r = y
        return [-0.3 * s * i, 0.3 * s * i - 0.1 * i, 0.1 * i]

    reference = solve_ivp(rhs, (0.0, 0.1), [0.99, 0.01, 0.0], method="RK45",
                          rtol=1e-12, atol=1e-14, max_step=1e-4)
    state = step(SirState(0.99, 0.01, 0.0), params)
    expected = reference.y[:, -1]
    assert abs(state.s - expected[0]) <= 1e-3
    assert abs(state.i - expected[1]) <= 1e-3
    assert abs(state.r - expected[2]) <= 1e-3


def test_conservation_and_monotone_susceptibles(single_wave):
    trajectory = integrate(single_wave, None, 200)
    total = trajectory.s + trajectory.i + trajectory.r
    assert np.max(np.abs(total - 1.0)) <= 1e-8
    assert np.all(np.diff(trajectory.s) <= 0)
    for compartment in (trajectory.s, trajectory.i, trajectory.r):
        assert compartment.min() >= 0.0 and compartment.max() <= 1.0


def test_no_transmission_gives_zero_incidence():
    params = SirParams.from_infected(beta=0.0, gamma=0.1, i0=1e-3)
    series = simulate_incidence(params, None, 50)
    assert len(series) == 50
    assert all(v == 0.0 for v in series.values)


def test_single_wave_has_one_peak(single_wave):
    series = simulate_incidence(single_wave, None, 250)
    assert _local_maxima(series.values) == 1
    assert min(series.values) >= 0.0


def test_raised_beta_after_first_wave_gives_two_peaks():
    params = SirParams.from_infected(beta=0.3, gamma=0.2, i0=1e-4)
    series = simulate_incidence(params, WaveSchedule(((170, 0.9),)), 300)
    assert _local_maxima(series.values) == 2


def test_incidence_equals_decrease_in_susceptibles(single_wave):
    trajectory = integrate(single_wave, None, 100)
    incidence = incidence_from_trajectory(trajectory)
    s_daily = trajectory.s[::10]
    expected = (s_daily[:-1] - s_daily[1:]) * single_wave.population
    np.testing.assert_allclose(incidence, expected, atol=1e-9, rtol=0)


def test_subcritical_final_size_is_small():
    params = SirParams.from_infected(beta=0.09, gamma=0.1, i0=1e-4)
    series = simulate_incidence(params, None, 400)
    assert sum(series.values) <= 0.05 * params.population


def test_survival_identity_exact_without_transmission():
    params = SirParams.from_infected(beta=0.0, gamma=0.1, i0=1e-2)
    assert check_survival_identity(integrate(params, None, 30)) == 0.0


def test_survival_identity_at_fine_step_and_convergence():
    coarse = SirParams.from_infected(beta=0.3, gamma=0.1, i0=1e-4, dt=0.01)
    fine = SirParams.from_infected(beta=0.3, gamma=0.1, i0=1e-4, dt=0.005)
    deviation = check_survival_identity(integrate(coarse, None, 150))
    finer = check_survival_identity(integrate(fine, None, 150))
    assert deviation <= 1e-3
    assert finer <= deviation


def test_survival_identity_rejects_schedules(single_wave):
    trajectory = integrate(single_wave, WaveSchedule(((10, 0.5),)), 20)
    with pytest.raises(InvalidParameters):
        check_survival_identity(trajectory)


@pytest.mark.parametrize("kwargs", [
    dict(beta=-0.1, gamma=0.1, s0=1.0, i0=0.0),
    dict(beta=0.1, gamma=0.0, s0=1.0, i0=0.0),
    dict(beta=0.1, gamma=0.1, s0=0.5, i0=0.1),
    dict(beta=0.1, gamma=0.1, s0=1.0, i0=0.0, dt=2.0),
    dict(beta=0.1, gamma=0.1, s0=1.0, i0=0.0, population=0),
])
def test_invalid_params_rejected(kwargs):
    with pytest.raises(InvalidParameters):
        SirParams(**kwargs)


def test_dt_must_divide_period():
    params = SirParams(beta=0.1, gamma=0.1, s0=1.0, i0=0.0, dt=0.3)
    with pytest.raises(InvalidParameters):
        integrate(params, None, 5)


def test_schedule_times_must_increase():
    with pytest.raises(InvalidParameters):
        WaveSchedule(((10, 0.5), (5, 0.3)))


def test_schedule_beta_lookup():
    schedule = WaveSchedule(((10, 0.5), (20, 0.1)))
    assert schedule.beta_at(0, 0.3) == 0.3
    assert schedule.beta_at(10, 0.3) == 0.5
    assert schedule.beta_at(25, 0.3) == 0.1
