"""Macro step-size controllers.

A controller is asked for the next step once per communication point,
after the row for ``t[n]`` has been recorded. It may look at the whole
trace so far. The orchestrator may still shorten the step to land on an
event or on the end time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Protocol, Sequence

from .core import ConfigurationError, PortRef, PowerBond, Trace

if TYPE_CHECKING:
    from .orchestrator import Model

EPS_FLOOR = 1e-12


class StepController(Protocol):
    def reset(self, model: "Model", t_start: float) -> None: ...

    def next_dt(self, trace: Trace) -> float: ...


# parameter sets -----------------------------------------------------------


@dataclass(frozen=True)
class ControllerParams:
    """PI controller and error-estimator settings."""

    dt0: float = 0.1
    kP: float = 0.2
    kI: float = 0.1
    dt_min: float = 1e-5
    dt_max: float = 0.1
    theta_min: float = 0.2
    theta_max: float = 1.2
    abs_tol: float = 1e-6
    rel_tol: float = 1e-6

    def __post_init__(self):
        if not 0 < self.dt_min <= self.dt0 <= self.dt_max:
            raise ConfigurationError("need 0 < dt_min <= dt0 <= dt_max")
        if not 0 < self.theta_min < 1 < self.theta_max:
            raise ConfigurationError("need 0 < theta_min < 1 < theta_max")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ConfigurationError("tolerances must be positive")


@dataclass(frozen=True)
class BangBangParams:
    monitor: PortRef
    threshold: float = 0.5
    dt_small: float = 0.001
    dt_large: float = 0.01

    def __post_init__(self):
        if not 0 < self.dt_small < self.dt_large:
            raise ConfigurationError("need 0 < dt_small < dt_large")


@dataclass(frozen=True)
class StepSchedule:
    """Piecewise-constant step sizes: ``pieces[i] = (from_time, dt)``."""

    pieces: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if not self.pieces:
            raise ConfigurationError("a step schedule needs at least one piece")
        times = [p[0] for p in self.pieces]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ConfigurationError("schedule start times must be strictly increasing")
        if any(not dt > 0 for _, dt in self.pieces):
            raise ConfigurationError("schedule step sizes must be positive")


# pure step laws -----------------------------------------------------------


def fixed_next(dt_fixed: float) -> float:
    return dt_fixed


def bangbang_next(monitor_value: float, p: BangBangParams) -> float:
    return p.dt_small if monitor_value > p.threshold else p.dt_large


def bond_power(bond: PowerBond, trace: Trace, n: int) -> float:
    e, f = bond.effort.source, bond.flow.source
    return trace.outputs[e][n] * trace.outputs[f][n]


def ecco_residual(bond: PowerBond, trace: Trace, n: int) -> float:
    """Energy residual over the step ending at ``t[n]``.

    The power held (zero-order) through the last step, minus the power seen
    at its end, times the step length.
    """
    if n < 1:
        raise ValueError("energy residual needs a completed step (n >= 1)")
    return trace.dt[n - 1] * (bond_power(bond, trace, n - 1) - bond_power(bond, trace, n))


def energy_scale(bond: PowerBond, trace: Trace, n: int) -> float:
    return trace.dt[n - 1] * max(abs(bond_power(bond, trace, n)), abs(bond_power(bond, trace, n - 1)))


def normalize_error(
    residuals: Sequence[float], scales: Sequence[float], abs_tol: float, rel_tol: float
) -> float:
    """RMS over bonds of each residual relative to ``abs_tol + rel_tol * scale``."""
    if not residuals:
        raise ValueError("need at least one bond residual")
    terms = [(r / (abs_tol + rel_tol * s)) ** 2 for r, s in zip(residuals, scales, strict=True)]
    return math.sqrt(math.fsum(terms) / len(terms))


def pi_next(eps_n: float, eps_prev: float, dt_prev: float, p: ControllerParams) -> float:
    eps = max(eps_n, EPS_FLOOR)
    prev = max(eps_prev, EPS_FLOOR)
    theta = eps ** (-p.kI) * (prev / eps) ** p.kP
    theta = min(max(theta, p.theta_min), p.theta_max)
    return min(max(theta * dt_prev, p.dt_min), p.dt_max)


# stateful controllers -----------------------------------------------------


class FixedController:
    def __init__(self, dt: float):
        if not (math.isfinite(dt) and dt > 0):
            raise ConfigurationError(f"fixed step must be positive, got {dt}")
        self.dt = float(dt)

    def reset(self, model, t_start):
        pass

    def next_dt(self, trace):
        return fixed_next(self.dt)


class ScheduledController:
    """Follows a :class:`StepSchedule`, shortening a step so that each
    piece starts exactly on a communication point."""

    def __init__(self, schedule: StepSchedule, snap: float = 1e-6):
        self.schedule = schedule
        self.snap = snap

    def reset(self, model, t_start):
        if abs(self.schedule.pieces[0][0] - t_start) > 1e-12 * max(1.0, abs(t_start)):
            raise ConfigurationError("the first schedule piece must start at t_start")

    def next_dt(self, trace):
        t = trace.t[-1]
        pieces = self.schedule.pieces
        i = 0
        while i + 1 < len(pieces) and pieces[i + 1][0] <= t + self.snap * pieces[i][1]:
            i += 1
        dt = pieces[i][1]
        if i + 1 < len(pieces):
            remaining = pieces[i + 1][0] - t
            if t + dt > pieces[i + 1][0] - self.snap * dt:
                dt = remaining
        return dt


class BangBangController:
    """Two-valued step rule driven by a monitored output."""

    def __init__(self, params: BangBangParams):
        self.params = params

    def reset(self, model, t_start):
        if self.params.monitor.direction != "output":
            raise ConfigurationError("the bang-bang monitor must be an output port")

    def next_dt(self, trace):
        value = trace.outputs[self.params.monitor][-1]
        return bangbang_next(value, self.params)


class PIController:
    """PI step-size control on the normalised energy residual of the model's bonds."""

    def __init__(self, params: ControllerParams = ControllerParams(), bonds: Sequence[PowerBond] | None = None):
        self.params = params
        self._bonds = list(bonds) if bonds is not None else None
        self.eps_history: list[float] = []

    def reset(self, model, t_start):
        self.bonds = self._bonds if self._bonds is not None else list(model.bonds)
        if not self.bonds:
            raise ConfigurationError("the PI controller needs at least one power bond")
        self.eps_prev = 1.0
        self.eps_history = []

    def error(self, trace: Trace, n: int) -> float:
        residuals = [ecco_residual(b, trace, n) for b in self.bonds]
        scales = [energy_scale(b, trace, n) for b in self.bonds]
        return normalize_error(residuals, scales, self.params.abs_tol, self.params.rel_tol)

    def next_dt(self, trace):
        n = len(trace) - 1
        if n == 0:
            return self.params.dt0
        eps = self.error(trace, n)
        self.eps_history.append(eps)
        dt = pi_next(eps, self.eps_prev, trace.dt[n - 1], self.params)
        self.eps_prev = eps
        return dt
