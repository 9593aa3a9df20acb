import copy
import dataclasses

import numpy as np
import pytest

from iobs.config import parse_config
from iobs.errors import ConfigError, NonFiniteState
from iobs.ivec import IntervalVector
from iobs.lti import BoundSignals, LtiIntervalObserver, LtiPlant
from iobs.sim import Scenario, rk4_step, simulate, simulate_ct, simulate_dt, sweep
from iobs.systems import random_observable_lti

from conftest import disturbance_free

TRACE_ARRAYS = ("times", "x", "x_lo", "x_hi", "z_lo", "z_hi", "sigma_min", "contained",
                "z_contained", "violation", "z_violation", "T")


def scalar_scenario(**kw):
    plant = LtiPlant([[-1.0]], [[1.0]])
    base = dict(kind="ct-lti", plant=plant, observer=LtiIntervalObserver(), x0=[0.5],
                x0_iv=IntervalVector([0.0], [1.0]), horizon=10.0, step=1e-2)
    base.update(kw)
    return Scenario(**base)


def test_rk4_order_on_exponential():
    errs = []
    for h in (0.1, 0.05):
        y = np.array([1.0])
        for i in range(int(round(1 / h))):
            y = rk4_step(lambda t, v: v, i * h, y, h)
        errs.append(abs(y[0] - np.e))
    assert 12 < errs[0] / errs[1] < 20


def test_scalar_plant_converges():
    tr = simulate(scalar_scenario())
    assert tr.contained.all()
    assert tr.width[-1] < 1e-3 and tr.width[-1] < tr.width[0]


def test_zero_horizon():
    tr = simulate(scalar_scenario(horizon=0.0))
    assert tr.times.shape == (1,) and tr.x.shape == (1, 1)
    dt = Scenario("dt-lti", LtiPlant([[0.5]], [[1.0]], time_kind="dt"),
                  LtiIntervalObserver(time_kind="dt"), [0.5], IntervalVector([0.0], [1.0]), horizon=0)
    assert simulate(dt).times.shape == (1,)


def test_kind_dispatch_errors():
    with pytest.raises(ConfigError):
        simulate_dt(scalar_scenario())
    dt = Scenario("dt-lti", LtiPlant([[0.5]], [[1.0]], time_kind="dt"),
                  LtiIntervalObserver(time_kind="dt"), [0.5], IntervalVector([0.0], [1.0]), horizon=3)
    with pytest.raises(ConfigError):
        simulate_ct(dt)


def test_determinism(example3_doc, pendulum_doc):
    sc = parse_config(example3_doc).scenario
    a, b = simulate(sc), simulate(sc)
    for name in TRACE_ARRAYS:
        assert np.array_equal(getattr(a, name), getattr(b, name)), name
    assert a.summary() == b.summary()
    doc = copy.deepcopy(pendulum_doc)
    doc["sim"]["horizon"] = 1
    sc = parse_config(doc).scenario
    a, b = simulate(sc), simulate(sc)
    for name in TRACE_ARRAYS:
        assert np.array_equal(getattr(a, name), getattr(b, name)), name


def test_bad_disturbance_bounds_rejected():
    plant = LtiPlant([[-1.0]], [[1.0]], D=[[1.0]])
    sc = scalar_scenario(plant=plant, d=lambda t: np.array([0.2 + np.sin(t)]),
                         bounds=BoundSignals.constant([-0.5], [0.5]))
    with pytest.raises(ConfigError) as info:
        simulate(sc)
    assert info.value.path == "signals.d[0]"


def test_inverted_bounds_rejected():
    plant = LtiPlant([[-1.0]], [[1.0]], W=[[1.0]])
    sc = scalar_scenario(plant=plant, bounds=BoundSignals.constant(w_lo=[1.0], w_hi=[-1.0]))
    with pytest.raises(ConfigError) as info:
        sc.validate()
    assert info.value.path == "signals.w_bounds[0]"


def test_initial_state_outside_box():
    with pytest.raises(ConfigError) as info:
        simulate(scalar_scenario(x0=[2.0]))
    assert info.value.path == "x0.value"


def test_non_finite_state():
    sc = scalar_scenario(plant=LtiPlant([[400.0]], [[1.0]]), horizon=10.0, step=0.05,
                         observer=LtiIntervalObserver(A=[[-1.0]], B=[[1.0]]))
    with np.errstate(all="ignore"), pytest.raises(NonFiniteState) as info:
        simulate(sc)
    assert 0 < info.value.time <= 10.0


def test_summary_schema(example3_doc):
    s = simulate(parse_config(example3_doc).scenario).summary()
    assert sorted(s) == sorted([
        "kind", "n_x", "n_z", "rows", "horizon", "step", "seed", "slack", "kstar",
        "contained_after_kstar", "z_contained_all", "max_violation", "max_z_violation",
        "final_width", "final_z_width", "vec_order", "guaranteed",
    ])
    assert s["kstar"]["index"] == 2 and s["vec_order"] == "column-major"


def test_example3_run(example3_doc):
    tr = simulate(parse_config(example3_doc).scenario)
    assert tr.detection.index == 2
    assert tr.contained[2:].all() and tr.guaranteed


def test_example1_dt_analogue_exact_z_containment():
    F, H, D, W = random_observable_lti(3)
    rho = np.max(np.abs(np.linalg.eigvals(F)))
    plant = LtiPlant(F / (1.1 * rho), H, D, W, "dt")
    rng = np.random.default_rng(0)
    x0 = rng.uniform(-1, 1, 8)
    sc = Scenario("dt-lti", plant, LtiIntervalObserver(time_kind="dt"), x0,
                  IntervalVector(x0 - 1, x0 + 1), horizon=60, u=lambda k: np.ones(8),
                  d=lambda k: 0.5 * np.array([np.sin(2 * k), np.cos(k)]),
                  w=lambda k: np.array([0.3 * np.sin(k)]),
                  bounds=BoundSignals.constant([-0.5, -0.5], [0.5, 0.5], [-0.3], [0.3]))
    tr = simulate(sc)
    assert tr.z_contained.all() and tr.contained.all()


def _final_bounds(doc, step):
    d = copy.deepcopy(doc)
    d["sim"]["step"] = step
    tr = simulate(parse_config(d).scenario)
    return np.concatenate([tr.z_lo[-1], tr.z_hi[-1], tr.x[-1]])


def test_richardson_ratio(pendulum_doc):
    doc = disturbance_free(pendulum_doc)
    doc["sim"]["horizon"] = 4
    b1, b2, b3 = (_final_bounds(doc, h) for h in (0.04, 0.02, 0.01))
    ratio = np.linalg.norm(b1 - b2) / np.linalg.norm(b2 - b3)
    assert 8.0 <= ratio <= 32.0, ratio


def test_sweep_observer_parameter(example3_doc):
    sc = parse_config(example3_doc).scenario
    out = sweep(sc, "gain", [0.5, 1.0])
    assert [r["gain"] for r in out["runs"]] == [0.5, 1.0]
    assert out["smallest"] == 0.5


def test_scenario_does_not_mutate_observer(example3_doc):
    sc = parse_config(example3_doc).scenario
    simulate(sc)
    assert not hasattr(sc.observer, "target_")


def test_seed_reaches_observer():
    sc = scalar_scenario(seed=5)
    tr = simulate(dataclasses.replace(sc, horizon=0.1))
    assert tr.seed == 5
