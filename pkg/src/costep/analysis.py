"""Discrepancy measurement and closed-form prediction.

Two states that both integrate the same flow ``q`` drift apart when one of
them only sees ``q`` through a zero-order hold. The functions here measure
that drift from a :class:`~costep.core.Trace` and predict it from the flow
samples and the step schedule, either exactly (polynomial flows) or to
leading order in the step size.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from numpy.polynomial import Polynomial

from .core import ConfigurationError, Event, Trace, fmt


def running_sum(terms: Iterable[float]) -> np.ndarray:
    """Prefix sums ``[0, t0, t0+t1, ...]`` with Neumaier compensation."""
    out = [0.0]
    s = c = 0.0
    for x in terms:
        x = float(x)
        y = s + x
        if abs(s) >= abs(x):
            c += (s - y) + x
        else:
            c += (x - y) + s
        s = y
        out.append(s + c)
    return np.asarray(out)


@dataclass
class DiscrepancySeries:
    t: np.ndarray
    measured: np.ndarray
    predicted_leading: np.ndarray
    predicted_exact: np.ndarray | None = None

    def __len__(self):
        return len(self.t)

    def points(self):
        exact = self.predicted_exact
        for n in range(len(self)):
            yield (
                float(self.t[n]),
                float(self.measured[n]),
                None if exact is None else float(exact[n]),
                float(self.predicted_leading[n]),
            )

    @property
    def final(self) -> float:
        return float(self.measured[-1])

    def to_csv(self, path) -> None:
        header = ["t", "measured", "predicted_leading"]
        cols = [self.t, self.measured, self.predicted_leading]
        if self.predicted_exact is not None:
            header.append("predicted_exact")
            cols.append(self.predicted_exact)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in zip(*cols):
                w.writerow([fmt(float(v)) for v in row])


@dataclass
class FlowTrace:
    """Flow samples ``q[n] = q(t[n])`` on a communication grid.

    ``q_end[i]``, when given, is the flow seen by the exact integrator just
    before ``t[i+1]``. It differs from ``q[i+1]`` when the flow jumps at a
    communication point (an event, or an input that feeds straight through
    to the flow). When absent the flow is taken to be continuous.
    """

    t: np.ndarray
    q: np.ndarray
    q_end: np.ndarray | None = None

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.q = np.asarray(self.q, dtype=float)
        if self.t.shape != self.q.shape or self.t.ndim != 1 or len(self.t) < 1:
            raise ValueError("t and q must be 1-d arrays of equal, non-zero length")
        if np.any(np.diff(self.t) <= 0):
            raise ValueError("sample times must be strictly increasing")
        if self.q_end is not None:
            self.q_end = np.asarray(self.q_end, dtype=float)
            if self.q_end.shape != (len(self.t) - 1,):
                raise ValueError("q_end needs one value per step")

    @property
    def schedule(self) -> np.ndarray:
        return np.diff(self.t)

    @classmethod
    def from_trace(cls, trace: Trace, unit_id: str, port: str) -> "FlowTrace":
        return cls(trace.times(), trace.output(unit_id, port))


# measurement ------------------------------------------------------------


def measure_oscillator_discrepancy(
    trace: Trace, m: float = 1.0, s1: str = "S1", s2: str = "S2"
) -> DiscrepancySeries:
    """``x1 - x2`` along an oscillator run, with both predictions.

    For the mass unit the velocity is linear within a step, so the
    leading-order form built from ``v2`` samples and the compact sum
    ``-(1/2m) sum u2 dt^2`` are both exact for these update equations.
    """
    x1, x2 = trace.state(s1, "x1"), trace.state(s2, "x2")
    u2 = trace.input(s2, "u2")[:-1]
    dt = trace.steps()
    exact = x1[0] - x2[0] + running_sum(-u2 * dt * dt / (2 * m))
    flow = FlowTrace(trace.times(), trace.output(s2, "y2"))
    leading = x1[0] - x2[0] + predict_leading(flow)
    return DiscrepancySeries(trace.times(), x1 - x2, leading, exact)


def total_volume(times: np.ndarray, v0: float, events: Sequence[Event]) -> np.ndarray:
    """Total fluid volume at each time: initial volume plus injections already applied."""
    total = np.full(len(times), float(v0))
    for ev in events:
        total[times >= ev.time - 1e-9 * max(1.0, abs(ev.time))] += ev.amount
    return total


def reservoir_flow(trace: Trace, C: float = 1.0, R: float = 1.0, s2: str = "S2") -> FlowTrace:
    """Pipe flow as a :class:`FlowTrace`.

    Within a step the pipe unit sees its pressure input held, so the flow it
    integrates at the end of step ``i`` is ``u2[i]/R - V2[i+1]/(C R)``,
    not the exchanged sample ``y2[i+1]``.
    """
    u2 = trace.input(s2, "u2")
    V2 = trace.state(s2, "V2")
    q_end = u2[:-1] / R - V2[1:] / (C * R)
    return FlowTrace(trace.times(), trace.output(s2, "y2"), q_end)


def measure_reservoir_discrepancy(
    trace: Trace,
    injected: Sequence[Event] = (),
    v1: tuple[str, str] = ("S1", "V1"),
    v2: tuple[str, str] = ("S2", "V2"),
    C: float = 1.0,
    R: float = 1.0,
) -> DiscrepancySeries:
    """``V - V1 - V2`` where ``V`` is the fluid put into the system so far."""
    t = trace.times()
    V1, V2 = trace.state(*v1), trace.state(*v2)
    total = total_volume(t, V1[0] + V2[0], injected)
    measured = total - V1 - V2
    try:
        leading = measured[0] + predict_leading(reservoir_flow(trace, C, R, s2=v2[0]))
    except ConfigurationError:
        leading = np.full(len(t), np.nan)
    return DiscrepancySeries(t, measured, leading)


# prediction -------------------------------------------------------------


def predict_exact_sum(q: Polynomial | Sequence[float], t: Sequence[float], dx0: float = 0.0) -> np.ndarray:
    """Exact discrepancy for a polynomial flow sampled at times ``t``.

    Sums ``q^(k)(t[i]) dt[i]^(k+1) / (k+1)!`` for every derivative order
    ``k >= 1`` that does not vanish.
    """
    if not isinstance(q, Polynomial):
        q = Polynomial([float(c) for c in q])
    t = np.asarray(t, dtype=float)
    dt = np.diff(t)
    per_step = np.zeros(len(dt))
    deriv = q
    for k in range(1, q.degree() + 1):
        deriv = deriv.deriv()
        per_step += deriv(t[:-1]) * dt ** (k + 1) / math.factorial(k + 1)
    return dx0 + running_sum(-per_step)


def predict_leading(flow: FlowTrace) -> np.ndarray:
    """Leading-order discrepancy ``-1/2 sum (q[i+1] - q[i]) dt[i]``."""
    q_next = flow.q[1:] if flow.q_end is None else flow.q_end
    return running_sum(-0.5 * (q_next - flow.q[:-1]) * flow.schedule)


def predict_regrouped(flow: FlowTrace) -> np.ndarray:
    """The leading-order series rearranged by step-size differences.

    Each step change contributes ``q[i] (dt[i] - dt[i-1]) / 2``; the two
    boundary terms close the sum. Uses the ``q`` samples only, so it agrees
    with :func:`predict_leading` when the flow is continuous.
    """
    q, dt = flow.q, flow.schedule
    n = len(dt)
    out = np.zeros(n + 1)
    if n == 0:
        return out
    inner = running_sum(0.5 * q[1:n] * np.diff(dt))
    head = 0.5 * q[0] * dt[0]
    for k in range(1, n + 1):
        # fsum keeps the boundary terms from swamping the compensated middle sum
        out[k] = math.fsum((head, inner[k - 1], -0.5 * q[k] * dt[k - 1]))
    return out


def oscillator_single_change_limit(v2_0: float, v2_K: float, dt1: float, dt2: float) -> float:
    """Final discrepancy after one step change from ``dt1`` to ``dt2`` once the mass is at rest."""
    return 0.5 * v2_0 * dt1 + 0.5 * v2_K * (dt2 - dt1)


def oscillator_fixed_step(v2: np.ndarray, dt: float) -> np.ndarray:
    return -0.5 * (np.asarray(v2) - v2[0]) * dt


# reference solutions ----------------------------------------------------


def reference_oscillator(
    t: float | np.ndarray, m: float = 1.0, c: float = 1.0, k: float = 1.0, x0: float = 1.0, v0: float = 0.0
):
    """Exact position and velocity of an underdamped oscillator ``m x'' + c x' + k x = 0``."""
    a = c / (2 * m)
    w2 = k / m - a * a
    if w2 <= 0:
        raise ValueError("reference_oscillator covers the underdamped case only")
    wd = math.sqrt(w2)
    t = np.asarray(t, dtype=float)
    e = np.exp(-a * t)
    cs, sn = np.cos(wd * t), np.sin(wd * t)
    B = (v0 + a * x0) / wd
    x = e * (x0 * cs + B * sn)
    v = e * ((B * wd - a * x0) * cs - (x0 * wd + a * B) * sn)
    if x.ndim == 0:
        return float(x), float(v)
    return x, v
