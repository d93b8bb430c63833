"""Concrete simulation units with exact step solutions.

Every unit here integrates its state equation in closed form over a macro
step with zero-order-hold inputs, so any error seen in a co-simulation run
comes from the coupling alone.
"""

from __future__ import annotations

import math
from typing import Sequence

from numpy.polynomial import Polynomial

from .core import ConfigurationError, SimulationUnit, check_step

MAX_FLOW_DEGREE = 8


# pure step and output functions -------------------------------------------


def spring_damper_output(x1: float, u1: float, k: float = 1.0, c: float = 1.0) -> float:
    return -k * x1 - c * u1


def mass_step(x2: float, v2: float, u2: float, m: float, dt: float) -> tuple[float, float]:
    """Exact update of a point mass under a constant force ``u2``."""
    dt = check_step(dt)
    return x2 + v2 * dt + u2 * dt * dt / (2 * m), v2 + u2 * dt / m


def reservoir_pipe_step(V2: float, u2: float, C: float, R: float, dt: float) -> float:
    """Exact solution of ``dV2/dt = u2/R - V2/(C R)`` with ``u2`` held.

    Written as a relaxation towards ``C*u2`` with ``-expm1`` so that small
    ``dt/(R C)`` does not lose digits.
    """
    dt = check_step(dt)
    return V2 + (C * u2 - V2) * -math.expm1(-dt / (R * C))


def pipe_flow(V2: float, u2: float, C: float, R: float) -> float:
    return u2 / R - V2 / (C * R)


def scripted_flow_step(coeffs: Sequence[float], t: float, dt: float, x2: float) -> tuple[float, float]:
    """Advance ``x2`` by the exact integral of the polynomial flow over ``[t, t+dt]``.

    Returns ``(x2', q(t+dt))``.
    """
    dt = check_step(dt)
    q = _flow_poly(coeffs)
    Q = q.integ()
    return x2 + (Q(t + dt) - Q(t)), float(q(t + dt))


def _flow_poly(coeffs: Sequence[float]) -> Polynomial:
    coeffs = [float(c) for c in coeffs]
    if not coeffs:
        raise ConfigurationError("flow polynomial needs at least one coefficient")
    if len(coeffs) - 1 > MAX_FLOW_DEGREE:
        raise ConfigurationError(f"flow polynomial degree is capped at {MAX_FLOW_DEGREE}")
    return Polynomial(coeffs)


# units of the damped oscillator ------------------------------------------


class SpringDamperUnit(SimulationUnit):
    """Spring and damper: integrates the velocity input into an extension ``x1``."""

    inputs = {"u1": "flow"}
    outputs = {"y1": "effort"}
    states = ("x1",)
    feedthrough = {"y1": ("u1",)}

    def __init__(self, k: float = 1.0, c: float = 1.0, x1: float = 0.0):
        super().__init__()
        self.k, self.c = float(k), float(c)
        if not (math.isfinite(self.k) and math.isfinite(self.c)):
            raise ConfigurationError("k and c must be finite")
        self.x1 = float(x1)

    def _advance(self, t, dt):
        self.x1 = self.x1 + self.held("u1") * dt

    def _output(self, port):
        return spring_damper_output(self.x1, self.held("u1"), self.k, self.c)


class MassUnit(SimulationUnit):
    """Point mass driven by a force input; outputs its velocity."""

    inputs = {"u2": "effort"}
    outputs = {"y2": "flow"}
    states = ("x2", "v2")

    def __init__(self, m: float = 1.0, x2: float = 0.0, v2: float = 0.0):
        super().__init__()
        if not m > 0:
            raise ConfigurationError(f"mass must be positive, got {m}")
        self.m = float(m)
        self.x2, self.v2 = float(x2), float(v2)

    def _advance(self, t, dt):
        self.x2, self.v2 = mass_step(self.x2, self.v2, self.held("u2"), self.m, dt)

    def _output(self, port):
        return self.v2


# units of the connected reservoirs ---------------------------------------


class ReservoirUnit(SimulationUnit):
    """Reservoir 1: drained by the flow input, outputs its bottom pressure."""

    inputs = {"u1": "flow"}
    outputs = {"y1": "effort"}
    states = ("V1",)

    def __init__(self, C: float = 1.0, V1: float = 0.0):
        super().__init__()
        if not C > 0:
            raise ConfigurationError(f"capacitance must be positive, got {C}")
        self.C = float(C)
        self.V1 = float(V1)

    def _advance(self, t, dt):
        self.V1 = self.V1 - self.held("u1") * dt

    def _output(self, port):
        return self.V1 / self.C


class ReservoirPipeUnit(SimulationUnit):
    """Reservoir 2 plus the laminar pipe; the pressure input drives the pipe flow."""

    inputs = {"u2": "effort"}
    outputs = {"y2": "flow"}
    states = ("V2",)
    feedthrough = {"y2": ("u2",)}

    def __init__(self, C: float = 1.0, R: float = 1.0, V2: float = 0.0):
        super().__init__()
        if not (C > 0 and R > 0):
            raise ConfigurationError(f"C and R must be positive, got C={C}, R={R}")
        self.C, self.R = float(C), float(R)
        self.V2 = float(V2)

    def _advance(self, t, dt):
        self.V2 = reservoir_pipe_step(self.V2, self.held("u2"), self.C, self.R, dt)

    def _output(self, port):
        return pipe_flow(self.V2, self.held("u2"), self.C, self.R)


# synthetic units for the general flow case -------------------------------


class ScriptedFlowSourceUnit(SimulationUnit):
    """Emits a known polynomial flow ``q(t)`` and integrates it exactly into ``x2``.

    The running integral is accumulated with Neumaier compensation so that
    it stays within a few ulps of the antiderivative difference over long
    runs.
    """

    outputs = {"y2": "flow"}
    states = ("x2",)

    def __init__(self, coeffs: Sequence[float], x2: float = 0.0, t0: float = 0.0):
        super().__init__()
        self.q = _flow_poly(coeffs)
        self.coeffs = tuple(float(c) for c in self.q.coef)
        self._Q = self.q.integ()
        self.t = float(t0)
        self.x2 = float(x2)
        self._carry = 0.0

    def _advance(self, t, dt):
        incr = self._Q(t + dt) - self._Q(t)
        s = self.x2 + incr
        if abs(self.x2) >= abs(incr):
            self._carry += (self.x2 - s) + incr
        else:
            self._carry += (incr - s) + self.x2
        self.x2 = s
        self.t = t + dt

    def get_state(self, name):
        value = super().get_state(name)
        return value + self._carry if name == "x2" else value

    def set_state(self, name, value):
        super().set_state(name, value)
        self._carry = 0.0

    def _output(self, port):
        return float(self.q(self.t))


class AccumulatorUnit(SimulationUnit):
    """Integrates a zero-order-held flow input into ``x1``."""

    inputs = {"u1": "flow"}
    states = ("x1",)

    def __init__(self, x1: float = 0.0):
        super().__init__()
        self.x1 = float(x1)

    def _advance(self, t, dt):
        self.x1 = self.x1 + self.held("u1") * dt

    def _output(self, port):  # pragma: no cover - no outputs declared
        raise ConfigurationError("AccumulatorUnit has no outputs")


def flow_polynomial(coeffs: Sequence[float]) -> Polynomial:
    """Validated :class:`~numpy.polynomial.Polynomial` for a flow profile."""
    return _flow_poly(coeffs)


__all__ = [
    "AccumulatorUnit",
    "MassUnit",
    "MAX_FLOW_DEGREE",
    "ReservoirPipeUnit",
    "ReservoirUnit",
    "ScriptedFlowSourceUnit",
    "SpringDamperUnit",
    "flow_polynomial",
    "mass_step",
    "pipe_flow",
    "reservoir_pipe_step",
    "scripted_flow_step",
    "spring_damper_output",
]
