"""Bundled SIR scenario loading."""
import json
from dataclasses import dataclass
from datetime import date
from pathlib import Path

import numpy as np

from .series import Cadence, EpidemicSeries
from .sir import SirParams, WaveSchedule, simulate_incidence


@dataclass(frozen=True)
class Scenario:
    """A named simulation setup."""
    name: str
    description: str
    location: str
    cadence: Cadence
    start_date: date
    n_periods: int
    params: SirParams
    schedule: WaveSchedule
    noise: str = "none"

    def simulate(self) -> EpidemicSeries:
        """Deterministic incidence for the scenario."""
        return simulate_incidence(
            self.params,
            self.schedule,
            self.n_periods,
            location=self.location,
            start_date=self.start_date,
            cadence=self.cadence,
        )


def _get_data_dir() -> Path:
    """Get the data/scenarios directory path."""
    return Path(__file__).parent.parent / "data" / "scenarios"


def load_scenario(name: str) -> Scenario:
    """Load a scenario from its JSON file.

    Args:
        name: Scenario name (e.g., "two-wave")

    Returns:
        Scenario with simulator parameters and wave schedule

    Raises:
        FileNotFoundError: If the scenario file doesn't exist
    """
    scenario_file = _get_data_dir() / f"{name.lower()}.json"

    if not scenario_file.exists():
        raise FileNotFoundError(f"Scenario not found: {name}")

    with open(scenario_file) as f:
        data = json.load(f)

    raw = data["params"]
    params = SirParams.from_infected(
        beta=raw["beta"],
        gamma=raw["gamma"],
        i0=raw["i0"],
        r0_init=raw.get("r0_init", 0.0),
        dt=raw.get("dt", 0.1),
        population=raw.get("population", 1_000_000),
    )

    return Scenario(
        name=data["name"],
        description=data.get("description", ""),
        location=data.get("location", "SIM"),
        cadence=Cadence(data.get("cadence", "daily")),
        start_date=date.fromisoformat(data["start_date"]),
        n_periods=int(data["n_periods"]),
        params=params,
        schedule=WaveSchedule(tuple(tuple(p) for p in data.get("schedule", []))),
        noise=data.get("noise", "none"),
    )


def get_all_scenarios() -> list[str]:
    """Get list of all available scenario names."""
    data_dir = _get_data_dir()
    if not data_dir.exists():
        return []
    return sorted([f.stem for f in data_dir.glob("*.json")])


def add_observation_noise(series: EpidemicSeries, noise: str, seed: int) -> EpidemicSeries:
    """Poisson observations around a deterministic series ("none" returns it unchanged)."""
    if noise == "none":
        return series
    if noise != "poisson":
        raise ValueError(f"Unknown noise model: {noise}")
    rng = np.random.default_rng(seed)
    observed = rng.poisson(series.as_array()).astype(float)
    return EpidemicSeries(series.location, series.cadence, series.start_date, tuple(observed.tolist()))
