"""
Deterministic SIR simulator used to generate synthetic truth.

Integrates dS/dt = -beta*S*I, dI/dt = beta*S*I - gamma*I, dR/dt = gamma*I with
explicit Euler sub-steps and reports per-period incidence -dS * population.
"""

import logging
from dataclasses import dataclass, field
from datetime import date
from typing import Optional

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import InvalidParameters
from .series import Cadence, EpidemicSeries

logger = logging.getLogger(__name__)

CONSERVATION_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SirParams:
    """Rates (per period) and initial proportions for the simulator."""
    beta: float
    gamma: float
    s0: float
    i0: float
    r0_init: float = 0.0
    dt: float = 0.1
    population: float = 1_000_000.0

    def __post_init__(self):
        if self.beta < 0:
            raise InvalidParameters(f"beta must be >= 0, got {self.beta}")
        if self.gamma <= 0:
            raise InvalidParameters(f"gamma must be > 0, got {self.gamma}")
        for name in ("s0", "i0", "r0_init"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise InvalidParameters(f"{name} must lie in [0, 1], got {value}")
        if abs(self.s0 + self.i0 + self.r0_init - 1.0) > CONSERVATION_TOLERANCE:
            raise InvalidParameters("s0 + i0 + r0_init must equal 1")
        if not 0.0 < self.dt <= 1.0:
            raise InvalidParameters(f"dt must lie in (0, 1], got {self.dt}")
        if self.population <= 0:
            raise InvalidParameters(f"population must be > 0, got {self.population}")

    @property
    def steps_per_period(self) -> int:
        steps = int(round(1.0 / self.dt))
        if abs(steps * self.dt - 1.0) > 1e-9:
            raise InvalidParameters(f"dt={self.dt} does not divide one period evenly")
        return steps

    @classmethod
    def from_infected(cls, beta: float, gamma: float, i0: float, **kwargs) -> "SirParams":
        """Params with everyone not initially infected (or recovered) susceptible."""
        r0_init = kwargs.pop("r0_init", 0.0)
        return cls(beta=beta, gamma=gamma, s0=1.0 - i0 - r0_init, i0=i0, r0_init=r0_init, **kwargs)


@dataclass(frozen=True)
class SirState:
    """Compartment proportions at one time."""
    s: float
    i: float
    r: float


@dataclass(frozen=True)
class WaveSchedule:
    """Ordered (time, beta) change points; beta holds from its time onward."""
    change_points: tuple = ()

    def __post_init__(self):
        points = tuple((float(t), float(b)) for t, b in self.change_points)
        for (t1, _), (t2, _) in zip(points, points[1:]):
            if t2 <= t1:
                raise InvalidParameters("Wave schedule times must be strictly increasing")
        for t, b in points:
            if b < 0:
                raise InvalidParameters(f"Scheduled beta at t={t} is negative")
        object.__setattr__(self, "change_points", points)

    def beta_at(self, t: float, default: float) -> float:
        beta = default
        for time, value in self.change_points:
            if t + 1e-9 >= time:
                beta = value
            else:
                break
        return beta

    @property
    def is_constant(self) -> bool:
        return not self.change_points


@dataclass
class SirTrajectory:
    """States at every Euler sub-step (including t=0)."""
    times: np.ndarray
    s: np.ndarray
    i: np.ndarray
    r: np.ndarray
    params: SirParams
    schedule: WaveSchedule = field(default_factory=WaveSchedule)

    def state_at(self, step_index: int) -> SirState:
        return SirState(float(self.s[step_index]), float(self.i[step_index]), float(self.r[step_index]))


def step(state: SirState, params: SirParams, beta: Optional[float] = None) -> SirState:
    """One explicit Euler step, clipped to [0, 1] and renormalized to sum to one."""
    beta = params.beta if beta is None else beta
    infection = beta * state.s * state.i * params.dt
    recovery = params.gamma * state.i * params.dt

    s = min(max(state.s - infection, 0.0), 1.0)
    i = min(max(state.i + infection - recovery, 0.0), 1.0)
    # rounding error is absorbed by R so S is exact when nothing is transmitted
    r = min(max(1.0 - s - i, 0.0), 1.0)
    return SirState(s, i, r)


def integrate(params: SirParams, schedule: Optional[WaveSchedule], n_periods: int) -> SirTrajectory:
    """Run the simulator for n_periods periods."""
    if n_periods < 1:
        raise InvalidParameters(f"n_periods must be >= 1, got {n_periods}")
    schedule = schedule or WaveSchedule()
    per_period = params.steps_per_period
    total = n_periods * per_period

    s = np.empty(total + 1)
    i = np.empty(total + 1)
    r = np.empty(total + 1)
    state = SirState(params.s0, params.i0, params.r0_init)
    s[0], i[0], r[0] = state.s, state.i, state.r

    for n in range(total):
        t = n * params.dt
        state = step(state, params, schedule.beta_at(t, params.beta))
        s[n + 1], i[n + 1], r[n + 1] = state.s, state.i, state.r

    times = np.arange(total + 1) * params.dt
    return SirTrajectory(times=times, s=s, i=i, r=r, params=params, schedule=schedule)


def incidence_from_trajectory(trajectory: SirTrajectory) -> np.ndarray:
    """Per-period new infections: decrease in S over each period times population."""
    per_period = trajectory.params.steps_per_period
    boundaries = trajectory.s[::per_period]
    return (boundaries[:-1] - boundaries[1:]) * trajectory.params.population


def simulate_incidence(
    params: SirParams,
    schedule: Optional[WaveSchedule],
    n_periods: int,
    location: str = "SIM",
    start_date: date = date(2020, 1, 1),
    cadence: Cadence = Cadence.DAILY,
) -> EpidemicSeries:
    """Simulate and return incidence as an EpidemicSeries."""
    trajectory = integrate(params, schedule, n_periods)
    incidence = np.clip(incidence_from_trajectory(trajectory), 0.0, None)
    logger.debug(
        f"Simulated {n_periods} periods for {location}: peak {incidence.max():.1f} "
        f"at period {int(incidence.argmax())}"
    )
    return EpidemicSeries(location=location, cadence=cadence, start_date=start_date,
                          values=tuple(incidence.tolist()))


def check_survival_identity(trajectory: SirTrajectory) -> float:
    """
    Max deviation of S(t) from the closed form S0 * exp(-beta * integral of I),
    accumulating I with the trapezoidal rule. Requires constant beta.
    """
    if not trajectory.schedule.is_constant:
        raise InvalidParameters("Survival identity only holds for constant beta")
    beta = trajectory.params.beta
    exposure = cumulative_trapezoid(trajectory.i, trajectory.times, initial=0.0)
    closed_form = trajectory.s[0] * np.exp(-beta * exposure)
    return float(np.max(np.abs(trajectory.s - closed_form)))
