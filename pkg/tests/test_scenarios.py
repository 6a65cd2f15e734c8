"""Tests for bundled scenario loading."""
import pytest
from pathlib import Path
import sys
sys.path.insert(0, str(Path(__file__).parent.parent))

from datetime import date

from src.scenarios import add_observation_noise, get_all_scenarios, load_scenario
from src.series import Cadence


def test_both_scenarios_available():
    scenarios = get_all_scenarios()
    assert "two-wave" in scenarios
    assert "single-wave" in scenarios


def test_load_two_wave():
    scenario = load_scenario("two-wave")
    assert scenario.cadence == Cadence.DAILY
    assert scenario.start_date == date(2021, 1, 1)
    assert scenario.n_periods == 300
    assert not scenario.schedule.is_constant


def test_load_scenario_case_insensitive():
    assert load_scenario("Single-Wave").name == "single-wave"


def test_load_invalid_scenario():
    with pytest.raises(FileNotFoundError):
        load_scenario("three-wave")


def test_simulate_is_deterministic():
    scenario = load_scenario("two-wave")
    first = scenario.simulate()
    second = scenario.simulate()
    assert first == second
    assert len(first) == scenario.n_periods
    assert first.location == scenario.location


def test_poisson_noise_is_seeded():
    series = load_scenario("single-wave").simulate()
    a = add_observation_noise(series, "poisson", seed=7)
    b = add_observation_noise(series, "poisson", seed=7)
    c = add_observation_noise(series, "poisson", seed=8)
    assert a == b
    assert a != c
    assert all(v == int(v) and v >= 0 for v in a.values)


def test_no_noise_returns_series_unchanged():
    series = load_scenario("single-wave").simulate()
    assert add_observation_noise(series, "none", seed=1) is series


def test_unknown_noise_model():
    series = load_scenario("single-wave").simulate()
    with pytest.raises(ValueError):
        add_observation_noise(series, "gaussian", seed=1)
