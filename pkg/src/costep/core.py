"""Domain types shared by every part of the co-simulation kernel.

A :class:`SimulationUnit` owns its state and advances it exactly over one
macro step while its inputs are held constant (zero-order hold). Units are
wired together with :class:`Connection` objects; a :class:`PowerBond` pairs
the effort and flow connections between two units. The orchestrator writes
one :class:`Trace` row per communication point.
"""

from __future__ import annotations

import csv
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import ClassVar, Iterable, Literal

import numpy as np

Direction = Literal["input", "output"]
Role = Literal["effort", "flow", "other"]


class ConfigurationError(ValueError):
    """Wiring or naming problem detected before or during a run."""


class UnitStateError(RuntimeError):
    """A unit was asked to do something its current state does not allow."""


class UnitStepError(RuntimeError):
    """A unit failed while stepping; carries the id of the failing unit."""

    def __init__(self, unit_id: str, cause: BaseException):
        super().__init__(f"unit {unit_id!r} failed to step: {cause}")
        self.unit_id = unit_id


class ControllerError(RuntimeError):
    """A step controller produced an unusable step size."""


def check_step(dt: float) -> float:
    dt = float(dt)
    if not math.isfinite(dt) or dt <= 0.0:
        raise ValueError(f"macro step must be positive and finite, got {dt!r}")
    return dt


@dataclass(frozen=True)
class PortRef:
    unit_id: str
    port_name: str
    direction: Direction
    role: Role = "other"

    @property
    def label(self) -> str:
        return f"{self.unit_id}.{self.port_name}"


@dataclass(frozen=True)
class Connection:
    source: PortRef
    dest: PortRef

    def __post_init__(self):
        if self.source.direction != "output" or self.dest.direction != "input":
            raise ConfigurationError(
                f"connection {self.source.label} -> {self.dest.label} must run output -> input"
            )
        if self.source.unit_id == self.dest.unit_id:
            raise ConfigurationError(f"self-connection on unit {self.source.unit_id!r}")
        if self.source.role != self.dest.role:
            raise ConfigurationError(
                f"role mismatch: {self.source.label} is {self.source.role}, "
                f"{self.dest.label} is {self.dest.role}"
            )


@dataclass(frozen=True)
class PowerBond:
    """An effort connection and a flow connection between the same two units,
    running in opposite directions. Their product is the transmitted power."""

    effort: Connection
    flow: Connection

    def __post_init__(self):
        if self.effort.source.role != "effort" or self.flow.source.role != "flow":
            raise ConfigurationError("power bond needs one effort and one flow connection")
        e, f = self.effort, self.flow
        if (e.source.unit_id, e.dest.unit_id) != (f.dest.unit_id, f.source.unit_id):
            raise ConfigurationError(
                "effort and flow connections of a bond must run in opposite "
                "directions between the same pair of units"
            )


@dataclass(frozen=True)
class Event:
    """Instantaneous state mutation ``state += amount`` at ``time``."""

    time: float
    unit_id: str
    state: str
    amount: float
    action: str = "add_to_state"

    def apply(self, unit: "SimulationUnit") -> None:
        if self.action != "add_to_state":
            raise ConfigurationError(f"unknown event action {self.action!r}")
        unit.add_to_state(self.state, self.amount)


class SimulationUnit(ABC):
    """Base class for a subsystem stepped between communication points.

    Subclasses declare their ports and states as class attributes and
    implement :meth:`_advance` and :meth:`_output`. ``feedthrough`` maps an
    output to the inputs its output equation reads directly; the
    orchestrator uses it to order the exchange at a communication point.
    """

    inputs: ClassVar[dict[str, Role]] = {}
    outputs: ClassVar[dict[str, Role]] = {}
    states: ClassVar[tuple[str, ...]] = ()
    feedthrough: ClassVar[dict[str, tuple[str, ...]]] = {}

    def __init__(self):
        self._held: dict[str, float | None] = {p: None for p in self.inputs}

    # inputs -----------------------------------------------------------

    def set_input(self, port: str, value: float) -> None:
        if port not in self.inputs:
            raise ConfigurationError(f"{type(self).__name__} has no input {port!r}")
        self._held[port] = float(value)

    def held(self, port: str) -> float:
        value = self._held[port]
        if value is None:
            raise UnitStateError(f"input {port!r} of {type(self).__name__} has not been set")
        return value

    # stepping ---------------------------------------------------------

    def do_step(self, t: float, dt: float) -> None:
        dt = check_step(dt)
        unset = [p for p, v in self._held.items() if v is None]
        if unset:
            raise UnitStateError(f"cannot step {type(self).__name__}: unset inputs {unset}")
        self._advance(float(t), dt)

    @abstractmethod
    def _advance(self, t: float, dt: float) -> None: ...

    # outputs and states -----------------------------------------------

    def get_output(self, port: str) -> float:
        if port not in self.outputs:
            raise ConfigurationError(f"{type(self).__name__} has no output {port!r}")
        return self._output(port)

    @abstractmethod
    def _output(self, port: str) -> float: ...

    def get_state(self, name: str) -> float:
        if name not in self.states:
            raise ConfigurationError(f"{type(self).__name__} has no state {name!r}")
        return float(getattr(self, name))

    def set_state(self, name: str, value: float) -> None:
        if name not in self.states:
            raise ConfigurationError(f"{type(self).__name__} has no state {name!r}")
        setattr(self, name, float(value))

    def add_to_state(self, name: str, amount: float) -> None:
        self.set_state(name, self.get_state(name) + amount)

    def port(self, unit_id: str, name: str) -> PortRef:
        """Return a fully qualified reference to one of this unit's ports."""
        if name in self.inputs:
            return PortRef(unit_id, name, "input", self.inputs[name])
        if name in self.outputs:
            return PortRef(unit_id, name, "output", self.outputs[name])
        raise ConfigurationError(f"{type(self).__name__} has no port {name!r}")


@dataclass
class TraceRow:
    n: int
    t: float
    dt: float
    inputs: dict[PortRef, float]
    outputs: dict[PortRef, float]
    states: dict[tuple[str, str], float]


@dataclass
class EventRecord:
    """Snapshot of the states touched by an event, taken just before it fired."""

    n: int
    event: Event
    before: float
    after: float


@dataclass
class Trace:
    """Column-oriented record of communication points.

    Row ``n`` holds ``t[n]``, the step ``dt[n]`` taken *from* ``t[n]`` (NaN
    on the final row), the inputs held during step ``n`` and the outputs and
    states read at ``t[n]``.
    """

    input_ports: list[PortRef]
    output_ports: list[PortRef]
    state_keys: list[tuple[str, str]]
    t: list[float] = field(default_factory=list)
    dt: list[float] = field(default_factory=list)
    inputs: dict[PortRef, list[float]] = field(default_factory=dict)
    outputs: dict[PortRef, list[float]] = field(default_factory=dict)
    states: dict[tuple[str, str], list[float]] = field(default_factory=dict)
    events: list[EventRecord] = field(default_factory=list)
    clamped: list[bool] = field(default_factory=list)

    def __post_init__(self):
        for p in self.input_ports:
            self.inputs.setdefault(p, [])
        for p in self.output_ports:
            self.outputs.setdefault(p, [])
        for k in self.state_keys:
            self.states.setdefault(k, [])
        labels = self.column_names()
        if len(set(labels)) != len(labels):
            raise ConfigurationError(f"trace column names collide: {labels}")

    def __len__(self) -> int:
        return len(self.t)

    def append(self, t: float, inputs: dict, outputs: dict, states: dict) -> None:
        self.t.append(t)
        self.dt.append(math.nan)
        self.clamped.append(False)
        for p in self.input_ports:
            self.inputs[p].append(inputs[p])
        for p in self.output_ports:
            self.outputs[p].append(outputs[p])
        for k in self.state_keys:
            self.states[k].append(states[k])

    def row(self, n: int) -> TraceRow:
        return TraceRow(
            n=n,
            t=self.t[n],
            dt=self.dt[n],
            inputs={p: v[n] for p, v in self.inputs.items()},
            outputs={p: v[n] for p, v in self.outputs.items()},
            states={k: v[n] for k, v in self.states.items()},
        )

    def __iter__(self):
        return (self.row(n) for n in range(len(self)))

    # column lookup by name ------------------------------------------------

    def _find(self, ports: Iterable[PortRef], unit_id: str, name: str) -> PortRef:
        for p in ports:
            if p.unit_id == unit_id and p.port_name == name:
                return p
        raise ConfigurationError(f"trace has no port {unit_id}.{name}")

    def input(self, unit_id: str, name: str) -> np.ndarray:
        return np.asarray(self.inputs[self._find(self.input_ports, unit_id, name)])

    def output(self, unit_id: str, name: str) -> np.ndarray:
        return np.asarray(self.outputs[self._find(self.output_ports, unit_id, name)])

    def state(self, unit_id: str, name: str) -> np.ndarray:
        key = (unit_id, name)
        if key not in self.states:
            raise ConfigurationError(f"trace does not record state {unit_id}.{name}")
        return np.asarray(self.states[key])

    def times(self) -> np.ndarray:
        return np.asarray(self.t)

    def steps(self) -> np.ndarray:
        """The realised macro steps ``dt[0] .. dt[N-1]`` (final NaN dropped)."""
        return np.asarray(self.dt[:-1])

    # CSV -------------------------------------------------------------------

    def column_names(self) -> list[str]:
        return (
            [p.label for p in self.input_ports]
            + [p.label for p in self.output_ports]
            + [f"{u}.{s}" for u, s in self.state_keys]
        )

    def to_csv(self, path) -> None:
        cols = [self.inputs[p] for p in self.input_ports]
        cols += [self.outputs[p] for p in self.output_ports]
        cols += [self.states[k] for k in self.state_keys]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "t", "dt", *self.column_names()])
            for n in range(len(self)):
                w.writerow([n, fmt(self.t[n]), fmt(self.dt[n]), *(fmt(c[n]) for c in cols)])


def fmt(x: float) -> str:
    """Serialise a double so that it round-trips exactly."""
    return format(x, ".17g")
