"""Co-simulation kernel for studying step-size-change discrepancies between
duplicated integral states."""

from .analysis import (
    DiscrepancySeries,
    FlowTrace,
    measure_oscillator_discrepancy,
    measure_reservoir_discrepancy,
    oscillator_single_change_limit,
    predict_exact_sum,
    predict_leading,
    predict_regrouped,
    reference_oscillator,
)
from .core import (
    ConfigurationError,
    Connection,
    ControllerError,
    Event,
    PortRef,
    PowerBond,
    SimulationUnit,
    Trace,
    UnitStateError,
    UnitStepError,
)
from .orchestrator import Model, Orchestrator, RunConfig, initialize, run
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

__version__ = "0.1.0"
