"""Acceptance gate: one test and one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -s`` to see the lines as they happen;
they are also repeated in the terminal summary.
"""

import contextlib

import numpy as np
import pytest
from numpy.polynomial import Polynomial
from scipy.integrate import solve_ivp

from costep import (
    AccumulatorUnit,
    BangBangController,
    BangBangParams,
    ControllerParams,
    FlowTrace,
    Model,
    PIController,
    RunConfig,
    ScheduledController,
    ScriptedFlowSourceUnit,
    StepSchedule,
    measure_oscillator_discrepancy,
    measure_reservoir_discrepancy,
    predict_exact_sum,
    predict_leading,
    predict_regrouped,
    reference_oscillator,
    run,
)

from conftest import ACCEPTANCE_LINES, oscillator, reservoirs, run_fixed, run_scheduled

SEED = 20261016


@contextlib.contextmanager
def criterion(number, title):
    detail = {}
    try:
        yield detail
    except BaseException:
        line = f"FAIL criterion {number}: {title} {detail.get('text', '')}".rstrip()
        print(line)
        ACCEPTANCE_LINES.append(line)
        raise
    line = f"PASS criterion {number}: {title} {detail.get('text', '')}".rstrip()
    print(line)
    ACCEPTANCE_LINES.append(line)


def random_schedules(rng, count, lo, hi, max_steps):
    for _ in range(count):
        yield rng.uniform(lo, hi, rng.integers(1, max_steps + 1))


def test_criterion_1_fixed_step_law():
    with criterion(1, "fixed-step oscillator law") as d:
        finals = {}
        for v2, want in ((0.0, 0.0), (1.0, 0.05)):
            disc = measure_oscillator_discrepancy(run_fixed(oscillator(v2=v2), 0.1, 40.0))
            finals[v2] = disc.final
            d["text"] = f"(dx_final: v0=0 -> {finals.get(0.0):.3g}, v0=1 -> {finals.get(1.0, float('nan')):.10f})"
            assert abs(disc.final - want) <= 1e-6


def test_criterion_2_exact_identity():
    rng = np.random.default_rng(SEED)
    with criterion(2, "exact discrepancy identity on 50 random schedules") as d:
        worst = 0.0
        for dts in random_schedules(rng, 50, 1e-4, 0.1, 2000):
            m = rng.uniform(0.5, 2.0)
            model = oscillator(v2=rng.uniform(-1, 1), m=m)
            tr = run_scheduled(model, dts)
            disc = measure_oscillator_discrepancy(tr, m=m)
            u2, dt = tr.input("S2", "u2")[:-1], tr.steps()
            # plain in-order sum of the same trace values
            want = np.concatenate([[0.0], np.cumsum(-u2 * dt * dt / (2 * m))])
            scale = max(np.max(np.abs(disc.measured)), np.finfo(float).tiny)
            err = np.max(np.abs(disc.measured - want)) / scale
            worst = max(worst, err)
            d["text"] = f"(worst scale-relative error {worst:.2e})"
            assert err <= 1e-12


@pytest.mark.parametrize("t_switch", [0.2, 1.0, 3.0])
def test_criterion_3_single_change(t_switch):
    with criterion(3, f"single step change at t={t_switch}") as d:
        parts = []
        for v0 in (0.0, 1.0):
            sched = StepSchedule(((0.0, 0.1), (t_switch, 0.01)))
            tr = run(oscillator(v2=v0), RunConfig(0.0, 40.0, ScheduledController(sched)))
            v2, t = tr.state("S2", "v2"), tr.times()
            K = int(np.argmin(np.abs(t - t_switch)))
            assert abs(t[K] - t_switch) < 1e-9
            want = 0.5 * v0 * 0.1 + 0.5 * v2[K] * (0.01 - 0.1)
            got = measure_oscillator_discrepancy(tr).final
            tol = 0.5 * abs(v2[-1]) * 0.01 + 1e-12
            parts.append(f"v0={v0:g}: {got:.6f} vs {want:.6f}")
            d["text"] = "(" + "; ".join(parts) + ")"
            assert abs(got - want) <= tol


def _accumulate(coeffs, dts):
    model = Model({"S1": AccumulatorUnit(), "S2": ScriptedFlowSourceUnit(coeffs)}, [])
    model.connect(("S2", "y2"), ("S1", "u1"))
    tr = run_scheduled(model, dts)
    return tr.times(), tr.state("S1", "x1") - tr.state("S2", "x2")


def _leading_gap(coeffs, dts):
    t = np.concatenate([[0.0], np.cumsum(dts)])
    exact = predict_exact_sum(coeffs, t)[-1]
    return abs(exact - predict_leading(FlowTrace(t, Polynomial(coeffs)(t)))[-1])


def test_criterion_4_general_case():
    rng = np.random.default_rng(SEED + 4)
    with criterion(4, "polynomial flows: simulation equals exact sum, leading gap is O(dt^2)") as d:
        worst_err, worst_ratio = 0.0, np.inf
        for dts in random_schedules(rng, 50, 1e-3, 0.02, 150):
            coeffs = rng.uniform(-1, 1, rng.integers(1, 10))
            t, dx = _accumulate(coeffs, dts)
            worst_err = max(worst_err, np.max(np.abs(dx - predict_exact_sum(coeffs, t))))
            if len(coeffs) >= 3:
                ratio = _leading_gap(coeffs, dts) / _leading_gap(coeffs, np.repeat(dts / 2, 2))
                worst_ratio = min(worst_ratio, ratio)
            d["text"] = f"(max abs error {worst_err:.2e}, min halving ratio {worst_ratio:.3f})"
            assert worst_err <= 1e-10
            assert worst_ratio >= 3.5


def test_criterion_5_regrouped_identity():
    rng = np.random.default_rng(SEED + 5)
    with criterion(5, "regrouped form equals leading form on 1000 random traces") as d:
        worst = 0.0
        for _ in range(1000):
            n = int(rng.integers(2, 500))
            t = np.concatenate([[0.0], np.cumsum(rng.uniform(1e-4, 0.1, n - 1))]) + rng.uniform(-5, 5)
            q = rng.normal(scale=10.0 ** rng.uniform(-3, 3), size=n)
            flow = FlowTrace(t, q)
            a, b = predict_leading(flow), predict_regrouped(flow)
            scale = 0.5 * np.sum((np.abs(q[1:]) + np.abs(q[:-1])) * flow.schedule)
            worst = max(worst, np.max(np.abs(a - b)) / scale)
            d["text"] = f"(worst error {worst:.2e} relative to the sum of term magnitudes)"
            assert worst <= 1e-12


def test_criterion_6_reservoirs():
    with criterion(6, "reservoirs: bang-bang frozen-in error exceeds fixed step") as d:
        fixed_model = reservoirs()
        fixed = measure_reservoir_discrepancy(run_fixed(fixed_model, 0.001, 5.0), fixed_model.events)
        bb_model = reservoirs()
        ctl = BangBangController(BangBangParams(bb_model.port("S2", "y2"), 0.5, 0.001, 0.01))
        tr = run(bb_model, RunConfig(0.0, 5.0, ctl))
        bb = measure_reservoir_discrepancy(tr, bb_model.events)
        r_fixed = fixed.final / fixed.predicted_leading[-1]
        r_bb = bb.final / bb.predicted_leading[-1]
        d["text"] = (
            f"(dV fixed {fixed.final:.4e}, bang-bang {bb.final:.4e}; "
            f"measured/leading {r_fixed:.4f}, {r_bb:.4f})"
        )
        assert abs(bb.final) > abs(fixed.final)
        free = ~np.asarray(tr.clamped[:-1])
        assert set(tr.steps()[free]) <= {0.001, 0.01}
        assert 0.5 <= r_fixed <= 2.0 and 0.5 <= r_bb <= 2.0


def _pi_violations(tr, p):
    dt = tr.steps()
    free = ~np.asarray(tr.clamped[:-1])
    bad = int(np.sum((dt[free] < p.dt_min) | (dt[free] > p.dt_max)))
    ratio = dt[1:] / dt[:-1]
    both = free[1:] & free[:-1]
    lo, hi = p.theta_min * (1 - 1e-12), p.theta_max * (1 + 1e-12)
    return bad + int(np.sum((ratio[both] < lo) | (ratio[both] > hi)))


def test_criterion_7_controller_properties():
    p = ControllerParams()
    with criterion(7, "PI bounds, step ratios and steady-state growth") as d:
        runs = [
            run(oscillator(v2=0.0), RunConfig(0.0, 40.0, PIController(p))),
            run(oscillator(v2=1.0), RunConfig(0.0, 40.0, PIController(p))),
            run(reservoirs(), RunConfig(0.0, 5.0, PIController(p))),
        ]
        violations = sum(_pi_violations(tr, p) for tr in runs)
        reached = []
        for dt0 in (0.01, p.dt_max * p.theta_max**-20):
            q = ControllerParams(dt0=dt0)
            for model in (reservoirs(V1=0.5, V2=0.5, inject=False), oscillator(x0=0.0)):
                dt = run(model, RunConfig(0.0, 5.0, PIController(q))).steps()
                hit = np.flatnonzero(np.isclose(dt, p.dt_max, rtol=1e-12))
                reached.append(int(hit[0]) if hit.size else None)
        d["text"] = f"({violations} violations over {sum(len(t) for t in runs)} rows; steps to dt_max {reached})"
        assert violations == 0
        assert all(r is not None and r <= 20 for r in reached)


def test_criterion_8_reference_solution():
    ts = [0.5, 1.0, 2.0, 5.0, 10.0]
    with criterion(8, "reference oscillator vs adaptive ODE oracle") as d:
        sol = solve_ivp(
            lambda t, y: [y[1], -y[1] - y[0]], (0.0, 10.0), [1.0, 0.0],
            method="DOP853", rtol=1e-12, atol=1e-12, t_eval=ts,
        )
        x, v = reference_oscillator(np.array(ts))
        err = max(np.max(np.abs(x - sol.y[0])), np.max(np.abs(v - sol.y[1])))
        d["text"] = f"(max abs error {err:.2e})"
        assert err <= 1e-9
