"""Explicit Jacobi co-simulation master.

At every communication point the master reads outputs, pushes them through
the connections into inputs, and records a trace row. Between points every
unit is stepped from the same exchanged values, so the order in which
units are stepped does not matter.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .core import (
    Connection,
    ConfigurationError,
    ControllerError,
    Event,
    EventRecord,
    PortRef,
    PowerBond,
    SimulationUnit,
    Trace,
    UnitStepError,
)
from .stepctl import StepController

log = logging.getLogger(__name__)

# relative tolerance (in units of the proposed step) for landing on a target time
SNAP = 1e-6


@dataclass
class Model:
    units: dict[str, SimulationUnit]
    connections: list[Connection]
    bonds: list[PowerBond] = field(default_factory=list)
    events: list[Event] = field(default_factory=list)

    def port(self, unit_id: str, name: str) -> PortRef:
        if unit_id not in self.units:
            raise ConfigurationError(f"unknown unit {unit_id!r}")
        return self.units[unit_id].port(unit_id, name)

    def connect(self, src: tuple[str, str], dst: tuple[str, str]) -> Connection:
        conn = Connection(self.port(*src), self.port(*dst))
        self.connections.append(conn)
        return conn

    def validate(self) -> list[Connection]:
        """Check the wiring and return connections in a valid exchange order."""
        covered: dict[PortRef, Connection] = {}
        for c in self.connections:
            for ref in (c.source, c.dest):
                unit = self.units.get(ref.unit_id)
                if unit is None:
                    raise ConfigurationError(f"connection refers to unknown unit {ref.unit_id!r}")
                if unit.port(ref.unit_id, ref.port_name) != ref:
                    raise ConfigurationError(f"port reference {ref} does not match the unit")
            if c.dest in covered:
                raise ConfigurationError(f"input {c.dest.label} is driven by more than one connection")
            covered[c.dest] = c
        for uid, unit in self.units.items():
            for name in unit.inputs:
                if unit.port(uid, name) not in covered:
                    raise ConfigurationError(f"input {uid}.{name} is not connected")
        for b in self.bonds:
            for c in (b.effort, b.flow):
                if c not in self.connections:
                    raise ConfigurationError(f"bond refers to a connection not in the model: {c}")
        for ev in self.events:
            if ev.unit_id not in self.units:
                raise ConfigurationError(f"event targets unknown unit {ev.unit_id!r}")
            if ev.state not in self.units[ev.unit_id].states:
                raise ConfigurationError(f"event targets unknown state {ev.unit_id}.{ev.state}")
        return self._exchange_order()

    def _exchange_order(self) -> list[Connection]:
        # an output can be read once every input it feeds through from is fresh
        pending = list(self.connections)
        fresh: set[PortRef] = set()
        order: list[Connection] = []
        while pending:
            ready = [
                c for c in pending
                if all(
                    self.port(c.source.unit_id, i) in fresh
                    for i in self.units[c.source.unit_id].feedthrough.get(c.source.port_name, ())
                )
            ]
            if not ready:
                raise ConfigurationError(
                    "algebraic loop through direct-feedthrough outputs: "
                    + ", ".join(f"{c.source.label}->{c.dest.label}" for c in pending)
                )
            for c in ready:
                order.append(c)
                fresh.add(c.dest)
                pending.remove(c)
        return order


@dataclass
class RunConfig:
    t_start: float
    t_end: float
    controller: StepController
    record_states: list[tuple[str, str]] | None = None

    def __post_init__(self):
        if not (math.isfinite(self.t_start) and math.isfinite(self.t_end)):
            raise ConfigurationError("run horizon must be finite")
        if self.t_end < self.t_start:
            raise ConfigurationError("t_end must not precede t_start")


class Orchestrator:
    """Runs one model under one configuration and produces its trace."""

    def __init__(self, model: Model, cfg: RunConfig):
        self.model = model
        self.cfg = cfg
        self.order = model.validate()
        for ev in model.events:
            if not cfg.t_start < ev.time <= cfg.t_end:
                raise ConfigurationError(f"event at t={ev.time} lies outside ({cfg.t_start}, {cfg.t_end}]")
        units = model.units
        keys = cfg.record_states
        if keys is None:
            keys = [(uid, s) for uid, u in units.items() for s in u.states]
        for uid, s in keys:
            if uid not in units or s not in units[uid].states:
                raise ConfigurationError(f"cannot record unknown state {uid}.{s}")
        self.trace = Trace(
            input_ports=[u.port(uid, p) for uid, u in units.items() for p in u.inputs],
            output_ports=[u.port(uid, p) for uid, u in units.items() for p in u.outputs],
            state_keys=list(keys),
        )

    def exchange(self) -> None:
        for c in self.order:
            value = self.model.units[c.source.unit_id].get_output(c.source.port_name)
            self.model.units[c.dest.unit_id].set_input(c.dest.port_name, value)

    def record(self, t: float) -> None:
        units = self.model.units
        tr = self.trace
        tr.append(
            t,
            {p: units[p.unit_id].held(p.port_name) for p in tr.input_ports},
            {p: units[p.unit_id].get_output(p.port_name) for p in tr.output_ports},
            {k: units[k[0]].get_state(k[1]) for k in tr.state_keys},
        )

    def initialize(self) -> Trace:
        self.cfg.controller.reset(self.model, self.cfg.t_start)
        self.exchange()
        self.record(self.cfg.t_start)
        return self.trace

    def run(self) -> Trace:
        if not len(self.trace):
            self.initialize()
        cfg, units, tr = self.cfg, self.model.units, self.trace
        pending = sorted(self.model.events, key=lambda e: e.time)
        t = tr.t[-1]
        done = t >= cfg.t_end
        while not done:
            dt = cfg.controller.next_dt(tr)
            if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
                raise ControllerError(f"controller returned invalid step {dt!r} at t={t}")
            target, at_end = cfg.t_end, True
            if pending and pending[0].time < cfg.t_end:
                target, at_end = pending[0].time, False
            hit = t + dt >= target - SNAP * dt
            proposed = dt
            if hit:
                dt = target - t
            tr.dt[-1] = dt
            tr.clamped[-1] = dt != proposed
            for uid, unit in units.items():
                try:
                    unit.do_step(t, dt)
                except Exception as exc:
                    raise UnitStepError(uid, exc) from exc
            t = t + dt
            if hit:
                while pending and pending[0].time <= target:
                    ev = pending.pop(0)
                    unit = units[ev.unit_id]
                    before = unit.get_state(ev.state)
                    ev.apply(unit)
                    tr.events.append(EventRecord(len(tr), ev, before, unit.get_state(ev.state)))
                    log.debug("event %s applied at t=%r", ev, t)
                done = at_end
            self.exchange()
            self.record(t)
        return tr


def initialize(model: Model, cfg: RunConfig) -> Orchestrator:
    orch = Orchestrator(model, cfg)
    orch.initialize()
    return orch


def run(model: Model, cfg: RunConfig) -> Trace:
    """Initialise ``model`` and run it from ``cfg.t_start`` to ``cfg.t_end``."""
    return Orchestrator(model, cfg).run()
