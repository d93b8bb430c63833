import hypothesis
import numpy as np
import pytest

from costep import (
    Event,
    FixedController,
    MassUnit,
    Model,
    PowerBond,
    ReservoirPipeUnit,
    ReservoirUnit,
    RunConfig,
    ScheduledController,
    SpringDamperUnit,
    StepSchedule,
    run,
)

hypothesis.settings.register_profile("ci", max_examples=200, deadline=None)
hypothesis.settings.register_profile("fast", max_examples=20, deadline=None)
hypothesis.settings.load_profile("ci")


def oscillator(v2=0.0, x0=1.0, m=1.0, c=1.0, k=1.0, order=("S1", "S2")):
    units = {
        "S1": SpringDamperUnit(k=k, c=c, x1=x0),
        "S2": MassUnit(m=m, x2=x0, v2=v2),
    }
    model = Model({u: units[u] for u in order}, [])
    flow = model.connect(("S2", "y2"), ("S1", "u1"))
    effort = model.connect(("S1", "y1"), ("S2", "u2"))
    model.bonds.append(PowerBond(effort, flow))
    return model


def reservoirs(V1=0.6, V2=0.4, C=1.0, R=1.0, inject=True):
    model = Model({"S1": ReservoirUnit(C=C, V1=V1), "S2": ReservoirPipeUnit(C=C, R=R, V2=V2)}, [])
    flow = model.connect(("S2", "y2"), ("S1", "u1"))
    effort = model.connect(("S1", "y1"), ("S2", "u2"))
    model.bonds.append(PowerBond(effort, flow))
    if inject:
        model.events.append(Event(1.0, "S1", "V1", 1.0))
    return model


def schedule_from_steps(dts, t0=0.0):
    t = t0 + np.concatenate([[0.0], np.cumsum(dts)])
    return StepSchedule(tuple(zip(map(float, t[:-1]), map(float, dts)))), float(t[-1])


def run_scheduled(model, dts, t0=0.0):
    sched, t_end = schedule_from_steps(dts, t0)
    return run(model, RunConfig(t0, t_end, ScheduledController(sched)))


def run_fixed(model, dt, t_end, t0=0.0):
    return run(model, RunConfig(t0, t_end, FixedController(dt)))


@pytest.fixture
def rng():
    return np.random.default_rng(20261016)


# one PASS/FAIL line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
