"""Experiment configuration: parse, build, run, summarise.

Configs are INI-style text::

    [experiment]
    model = oscillator          ; oscillator | reservoirs | general-flow
    t_end = 40

    [initial]
    v2 = 1

    [controller]
    kind = fixed
    dt = 0.1

Every key is checked against the model and controller kind; unknown keys
are rejected with the line they appear on.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import analysis
from .core import ConfigurationError, Event, PowerBond, Trace
from .orchestrator import Model, RunConfig, run
from .stepctl import (
    BangBangController,
    BangBangParams,
    ControllerParams,
    FixedController,
    PIController,
    ScheduledController,
    StepSchedule,
)
from .units import (
    AccumulatorUnit,
    MassUnit,
    ReservoirPipeUnit,
    ReservoirUnit,
    ScriptedFlowSourceUnit,
    SpringDamperUnit,
)


class ConfigError(ConfigurationError):
    def __init__(self, message: str, source: str = "<config>", line: int | None = None):
        where = f"{source}:{line}: " if line else f"{source}: "
        super().__init__(where + message)
        self.line = line


MODELS = {
    "oscillator": {
        "parameters": {"m": 1.0, "c": 1.0, "k": 1.0},
        "initial": {"x1": 1.0, "x2": 1.0, "v2": 0.0},
    },
    "reservoirs": {
        "parameters": {"C": 1.0, "R": 1.0},
        "initial": {"V1": 0.6, "V2": 0.4},
    },
    "general-flow": {
        "parameters": {"coeffs": "0, 1"},
        "initial": {"x1": 0.0, "x2": 0.0},
    },
}

_PI = ControllerParams()
CONTROLLERS = {
    "fixed": {"dt": 0.1},
    "scheduled": {"schedule": None},
    "bangbang": {"monitor": "S2.y2", "threshold": 0.5, "dt_small": 0.001, "dt_large": 0.01},
    "pi": {
        "dt0": _PI.dt0, "kP": _PI.kP, "kI": _PI.kI, "dt_min": _PI.dt_min, "dt_max": _PI.dt_max,
        "theta_min": _PI.theta_min, "theta_max": _PI.theta_max,
        "abs_tol": _PI.abs_tol, "rel_tol": _PI.rel_tol,
    },
}


@dataclass
class ExperimentConfig:
    name: str
    model: str
    parameters: dict[str, Any]
    initial: dict[str, float]
    controller: dict[str, Any]
    t_start: float = 0.0
    t_end: float = 1.0
    events: list[Event] = field(default_factory=list)
    output_dir: str | None = None
    description: str = ""


def _number(value: str, source: str, line: int | None, key: str) -> float:
    try:
        x = float(value)
    except ValueError:
        raise ConfigError(f"{key}: expected a number, got {value!r}", source, line) from None
    if not math.isfinite(x):
        raise ConfigError(f"{key}: value must be finite", source, line)
    return x


def _line_index(text: str) -> dict[tuple[str, str | None], int]:
    index: dict[tuple[str, str | None], int] = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            index.setdefault((section, None), lineno)
        elif section is not None and ("=" in line or ":" in line):
            key = line.split("=", 1)[0] if "=" in line else line.split(":", 1)[0]
            index.setdefault((section, key.strip()), lineno)
    return index


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str  # keep C/R and kP/kI case
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).splitlines()[0], source, getattr(exc, "lineno", None)) from None
    lines = _line_index(text)

    def at(section, key=None):
        return lines.get((section, key), lines.get((section, None)))

    known = {"experiment", "parameters", "initial", "controller", "events", "output"}
    for sec in parser.sections():
        if sec not in known:
            raise ConfigError(f"unknown section [{sec}]", source, at(sec))
    if not parser.has_section("experiment"):
        raise ConfigError("missing [experiment] section", source)

    exp = dict(parser["experiment"])
    for key in exp:
        if key not in {"name", "model", "t_start", "t_end", "description"}:
            raise ConfigError(f"unknown key {key!r} in [experiment]", source, at("experiment", key))
    model = exp.get("model")
    if model not in MODELS:
        raise ConfigError(
            f"model must be one of {sorted(MODELS)}, got {model!r}", source, at("experiment", "model")
        )

    def section(name, defaults):
        out = dict(defaults)
        if parser.has_section(name):
            for key, value in parser[name].items():
                if key not in defaults:
                    raise ConfigError(f"unknown key {key!r} in [{name}] for model {model}", source, at(name, key))
                out[key] = value
        return out

    params = section("parameters", MODELS[model]["parameters"])
    for key, value in params.items():
        if key != "coeffs":
            params[key] = _number(value, source, at("parameters", key), key)
    if model == "general-flow":
        try:
            params["coeffs"] = [float(c) for c in str(params["coeffs"]).split(",")]
        except ValueError:
            raise ConfigError("coeffs: expected comma-separated numbers", source, at("parameters", "coeffs")) from None
    initial = {
        k: _number(v, source, at("initial", k), k)
        for k, v in section("initial", MODELS[model]["initial"]).items()
    }

    if not parser.has_section("controller"):
        raise ConfigError("missing [controller] section", source)
    ctl = dict(parser["controller"])
    kind = ctl.pop("kind", None)
    if kind not in CONTROLLERS:
        raise ConfigError(
            f"controller kind must be one of {sorted(CONTROLLERS)}, got {kind!r}", source, at("controller", "kind")
        )
    controller: dict[str, Any] = {"kind": kind, **CONTROLLERS[kind]}
    for key, value in ctl.items():
        if key not in CONTROLLERS[kind]:
            raise ConfigError(f"unknown key {key!r} for {kind} controller", source, at("controller", key))
        line = at("controller", key)
        if key == "monitor":
            controller[key] = value.strip()
        elif key == "schedule":
            controller[key] = _parse_schedule(value, source, line)
        else:
            controller[key] = _number(value, source, line, key)
    if kind == "scheduled" and controller["schedule"] is None:
        raise ConfigError("scheduled controller needs a schedule", source, at("controller"))
    for key in ("dt", "dt0", "dt_min", "dt_max", "dt_small", "dt_large", "abs_tol", "rel_tol"):
        if key in controller and not controller[key] > 0:
            raise ConfigError(f"{key} must be positive", source, at("controller", key))
    if kind == "pi":
        try:
            ControllerParams(**{k: v for k, v in controller.items() if k != "kind"})
        except ConfigurationError as exc:
            raise ConfigError(str(exc), source, at("controller")) from None

    events = []
    if parser.has_section("events"):
        for key, value in parser["events"].items():
            parts = [p.strip() for p in value.split(",")]
            line = at("events", key)
            if len(parts) != 4:
                raise ConfigError(f"event {key!r}: expected 'time, unit, state, amount'", source, line)
            events.append(
                Event(
                    _number(parts[0], source, line, key), parts[1], parts[2],
                    _number(parts[3], source, line, key),
                )
            )

    output_dir = None
    if parser.has_section("output"):
        for key, value in parser["output"].items():
            if key != "dir":
                raise ConfigError(f"unknown key {key!r} in [output]", source, at("output", key))
            output_dir = value.strip()

    t_start = _number(exp.get("t_start", "0"), source, at("experiment", "t_start"), "t_start")
    t_end = _number(exp.get("t_end", "1"), source, at("experiment", "t_end"), "t_end")
    if t_end < t_start:
        raise ConfigError("t_end must not precede t_start", source, at("experiment", "t_end"))
    if kind == "scheduled" and controller["schedule"].pieces[0][0] != t_start:
        raise ConfigError("the first schedule piece must start at t_start", source, at("controller", "schedule"))
    return ExperimentConfig(
        name=exp.get("name", Path(source).stem if source != "<config>" else "experiment"),
        model=model,
        parameters=params,
        initial=initial,
        controller=controller,
        t_start=t_start,
        t_end=t_end,
        events=events,
        output_dir=output_dir,
        description=exp.get("description", ""),
    )


def _parse_schedule(value: str, source: str, line: int | None) -> StepSchedule:
    pieces = []
    for item in value.split(","):
        if ":" not in item:
            raise ConfigError(f"schedule piece {item.strip()!r} is not 'from_time:dt'", source, line)
        a, b = item.split(":", 1)
        pieces.append((_number(a, source, line, "schedule"), _number(b, source, line, "schedule")))
    try:
        return StepSchedule(tuple(pieces))
    except ConfigurationError as exc:
        raise ConfigError(str(exc), source, line) from None


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    return parse_config(path.read_text(encoding="utf-8"), source=str(path))


# building ---------------------------------------------------------------


def build_model(cfg: ExperimentConfig) -> Model:
    p, x = cfg.parameters, cfg.initial
    if cfg.model == "oscillator":
        units = {
            "S1": SpringDamperUnit(k=p["k"], c=p["c"], x1=x["x1"]),
            "S2": MassUnit(m=p["m"], x2=x["x2"], v2=x["v2"]),
        }
    elif cfg.model == "reservoirs":
        units = {
            "S1": ReservoirUnit(C=p["C"], V1=x["V1"]),
            "S2": ReservoirPipeUnit(C=p["C"], R=p["R"], V2=x["V2"]),
        }
    else:
        units = {
            "S1": AccumulatorUnit(x1=x["x1"]),
            "S2": ScriptedFlowSourceUnit(p["coeffs"], x2=x["x2"], t0=cfg.t_start),
        }
    model = Model(units, [], events=list(cfg.events))
    flow = model.connect(("S2", "y2"), ("S1", "u1"))
    if cfg.model in ("oscillator", "reservoirs"):
        effort = model.connect(("S1", "y1"), ("S2", "u2"))
        model.bonds.append(PowerBond(effort, flow))
    return model


def build_controller(cfg: ExperimentConfig, model: Model):
    c = cfg.controller
    kind = c["kind"]
    if kind == "fixed":
        return FixedController(c["dt"])
    if kind == "scheduled":
        return ScheduledController(c["schedule"])
    if kind == "bangbang":
        unit, _, port = c["monitor"].partition(".")
        return BangBangController(
            BangBangParams(model.port(unit, port), c["threshold"], c["dt_small"], c["dt_large"])
        )
    fields = {k: v for k, v in c.items() if k != "kind"}
    return PIController(ControllerParams(**fields))


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    model: Model
    trace: Trace
    discrepancy: analysis.DiscrepancySeries
    summary: dict[str, Any]


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    model = build_model(cfg)
    controller = build_controller(cfg, model)
    trace = run(model, RunConfig(cfg.t_start, cfg.t_end, controller))
    disc, summary = _analyse(cfg, trace)
    return ExperimentResult(cfg, model, trace, disc, summary)


def _analyse(cfg: ExperimentConfig, trace: Trace):
    p = cfg.parameters
    steps = trace.steps()
    summary: dict[str, Any] = {
        "experiment": cfg.name,
        "model": cfg.model,
        "controller": cfg.controller["kind"],
        "steps": len(steps),
        "t_final": trace.t[-1],
        "dt_min_used": float(steps.min()) if len(steps) else math.nan,
        "dt_max_used": float(steps.max()) if len(steps) else math.nan,
    }
    if cfg.model == "oscillator":
        disc = analysis.measure_oscillator_discrepancy(trace, m=p["m"])
        summary["final_dx"] = disc.final
        summary["predicted_exact_dx"] = float(disc.predicted_exact[-1])
        summary["predicted_leading_dx"] = float(disc.predicted_leading[-1])
        v2 = trace.state("S2", "v2")
        kind = cfg.controller["kind"]
        if kind == "fixed":
            summary["fixed_step_limit_dx"] = 0.5 * v2[0] * cfg.controller["dt"]
        elif kind == "scheduled" and len(cfg.controller["schedule"].pieces) == 2:
            (_, dt1), (t_k, dt2) = cfg.controller["schedule"].pieces
            K = int(np.searchsorted(trace.times(), t_k - 1e-9 * dt1))
            if K < len(trace):
                summary["switch_index"] = K
                summary["single_change_limit_dx"] = analysis.oscillator_single_change_limit(
                    v2[0], v2[K], dt1, dt2
                )
    elif cfg.model == "reservoirs":
        disc = analysis.measure_reservoir_discrepancy(trace, cfg.events, C=p["C"], R=p["R"])
        summary["final_dV"] = disc.final
        summary["predicted_leading_dV"] = float(disc.predicted_leading[-1])
    else:
        x1, x2 = trace.state("S1", "x1"), trace.state("S2", "x2")
        exact = analysis.predict_exact_sum(p["coeffs"], trace.times(), x1[0] - x2[0])
        leading = (x1[0] - x2[0]) + analysis.predict_leading(analysis.FlowTrace.from_trace(trace, "S2", "y2"))
        disc = analysis.DiscrepancySeries(trace.times(), x1 - x2, leading, exact)
        summary["final_dx"] = disc.final
        summary["predicted_exact_dx"] = float(exact[-1])
        summary["predicted_leading_dx"] = float(leading[-1])
    return disc, summary


# built-in experiments -----------------------------------------------------

BUILTINS: dict[str, tuple[str, str]] = {
    "osc-fixed": (
        "damped oscillator, fixed step 0.1, initial velocity 0",
        """
        [experiment]
        model = oscillator
        t_end = 40
        [controller]
        kind = fixed
        dt = 0.1
        """,
    ),
    "osc-fixed-v1": (
        "damped oscillator, fixed step 0.1, initial velocity 1",
        """
        [experiment]
        model = oscillator
        t_end = 40
        [initial]
        v2 = 1
        [controller]
        kind = fixed
        dt = 0.1
        """,
    ),
    "osc-scheduled": (
        "damped oscillator, one step change 0.1 -> 0.01 at t = 0.2",
        """
        [experiment]
        model = oscillator
        t_end = 40
        [controller]
        kind = scheduled
        schedule = 0:0.1, 0.2:0.01
        """,
    ),
    "osc-scheduled-v1": (
        "damped oscillator, one step change 0.1 -> 0.01 at t = 0.2, initial velocity 1",
        """
        [experiment]
        model = oscillator
        t_end = 40
        [initial]
        v2 = 1
        [controller]
        kind = scheduled
        schedule = 0:0.1, 0.2:0.01
        """,
    ),
    "osc-pi": (
        "damped oscillator, PI step control on the energy residual",
        """
        [experiment]
        model = oscillator
        t_end = 40
        [controller]
        kind = pi
        """,
    ),
    "osc-pi-v1": (
        "damped oscillator, PI step control, initial velocity 1",
        """
        [experiment]
        model = oscillator
        t_end = 40
        [initial]
        v2 = 1
        [controller]
        kind = pi
        """,
    ),
    "reservoirs-fixed": (
        "connected reservoirs, fixed step 0.001, +1 volume into S1 at t = 1",
        """
        [experiment]
        model = reservoirs
        t_end = 5
        [controller]
        kind = fixed
        dt = 0.001
        [events]
        injection = 1.0, S1, V1, 1.0
        """,
    ),
    "reservoirs-bangbang": (
        "connected reservoirs, bang-bang step control on the pipe flow",
        """
        [experiment]
        model = reservoirs
        t_end = 5
        [controller]
        kind = bangbang
        monitor = S2.y2
        threshold = 0.5
        dt_small = 0.001
        dt_large = 0.01
        [events]
        injection = 1.0, S1, V1, 1.0
        """,
    ),
    "general-poly": (
        "accumulator fed by the flow q(t) = 1 + 2t - t^2 under a three-piece schedule",
        """
        [experiment]
        model = general-flow
        t_end = 3
        [parameters]
        coeffs = 1, 2, -1
        [controller]
        kind = scheduled
        schedule = 0:0.1, 1:0.01, 2:0.05
        """,
    ),
}


def builtin_config(name: str) -> ExperimentConfig:
    if name not in BUILTINS:
        raise KeyError(name)
    text = "\n".join(line.strip() for line in BUILTINS[name][1].splitlines())
    cfg = parse_config(text, source=f"<builtin {name}>")
    cfg.name = name
    cfg.description = BUILTINS[name][0]
    return cfg
