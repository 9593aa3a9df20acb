"""Deterministic co-simulation of a plant and its interval observer.

Continuous-time runs integrate the augmented state ``[x; observer state]``
with one fixed-step RK4 instance; discrete-time runs iterate the exact
recursion. Containment is checked at grid points only.
"""

import logging
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
from sklearn.base import clone

from .errors import ConfigError, NonFiniteState
from .ivec import CT_SLACK, DT_SLACK, IntervalVector, contains_bounds, violation
from .lti import BoundSignals
from .ltv_ct import Detection, detect_tstar

logger = logging.getLogger(__name__)

KINDS = ("ct-lti", "dt-lti", "ct-ltv", "dt-ltv")
DEFAULT_STEP = 1e-3


def rk4_step(f, t, y, h):
    """One classical fourth-order Runge-Kutta step."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _const(v):
    v = np.asarray(v, dtype=float).reshape(-1)
    return lambda t: v


@dataclass
class Scenario:
    """Everything needed for one simulation run.

    ``u``, ``d`` and ``w`` are callables of time returning the truth
    signals; ``bounds`` holds the declared bounds the observer sees.
    ``horizon`` is a duration in CT and a number of steps in DT.
    """

    kind: str
    plant: object
    observer: object
    x0: np.ndarray
    x0_iv: IntervalVector
    horizon: float
    u: Callable = None
    d: Callable = None
    w: Callable = None
    bounds: BoundSignals = None
    step: float = DEFAULT_STEP
    seed: int = 0
    slack: float = None
    c_T: float = None
    name: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError("kind", f"must be one of {', '.join(KINDS)}, got {self.kind!r}")
        p = self.plant
        self.x0 = np.asarray(self.x0, dtype=float).reshape(-1)
        if self.u is None:
            self.u = _const(np.zeros(p.n_x))
        if self.d is None:
            self.d = _const(np.zeros(p.n_d))
        if self.w is None:
            self.w = _const(np.zeros(p.n_w))
        if self.bounds is None:
            self.bounds = BoundSignals.none(p.n_d, p.n_w)
        if self.slack is None:
            self.slack = CT_SLACK if self.is_ct else DT_SLACK

    @property
    def is_ct(self):
        return self.kind.startswith("ct")

    def grid(self):
        if self.is_ct:
            n = int(round(self.horizon / self.step))
            return np.arange(n + 1) * self.step
        return np.arange(int(self.horizon) + 1, dtype=float)

    def validate(self):
        """Check the initial state and truth signals against their declared bounds."""
        p = self.plant
        if self.x0.shape[0] != p.n_x or len(self.x0_iv) != p.n_x:
            raise ConfigError("x0", f"initial state and its interval must have length {p.n_x}")
        if not contains_bounds(self.x0_iv.lo, self.x0_iv.hi, self.x0):
            raise ConfigError("x0.value", "initial state lies outside [x0.lo, x0.hi]")
        if self.is_ct and not self.step > 0:
            raise ConfigError("sim.step", "step must be positive")
        if not self.horizon >= 0:
            raise ConfigError("sim.horizon", "horizon must be non-negative")
        for t in self.grid():
            b = self.bounds.at(t)
            for name, sig, lo, hi in (("d", self.d, b.d_lo, b.d_hi), ("w", self.w, b.w_lo, b.w_hi)):
                v = np.asarray(sig(t), dtype=float).reshape(-1)
                if v.shape != lo.shape or lo.shape != hi.shape:
                    raise ConfigError(f"signals.{name}", "signal and bound lengths differ")
                bad = np.flatnonzero(~(lo <= hi))
                if bad.size:
                    raise ConfigError(
                        f"signals.{name}_bounds[{bad[0]}]", f"lower bound exceeds upper bound at t={t:g}"
                    )
                bad = np.flatnonzero((v < lo) | (v > hi))
                if bad.size:
                    i = int(bad[0])
                    raise ConfigError(
                        f"signals.{name}[{i}]",
                        f"truth value {v[i]:.6g} leaves declared bounds [{lo[i]:.6g}, {hi[i]:.6g}] at t={t:g}",
                    )


@dataclass
class SimulationTrace:
    """Per-grid-point record of a run plus post-hoc summary."""

    kind: str
    times: np.ndarray
    x: np.ndarray
    x_lo: np.ndarray
    x_hi: np.ndarray
    z_lo: np.ndarray
    z_hi: np.ndarray
    sigma_min: np.ndarray
    contained: np.ndarray
    z_contained: np.ndarray
    violation: np.ndarray
    z_violation: np.ndarray
    T: np.ndarray
    detection: Detection
    slack: float
    seed: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def width(self):
        if self.x_lo.shape[1] == 0:
            return np.zeros(self.times.shape[0])
        return np.max(self.x_hi - self.x_lo, axis=1)

    @property
    def z_width(self):
        if self.z_lo.shape[1] == 0:
            return np.zeros(self.times.shape[0])
        return np.max(self.z_hi - self.z_lo, axis=1)

    @property
    def start_index(self):
        """First index with guaranteed bounds; ``None`` if t*/k* was not reached."""
        return self.detection.index if self.detection.reached else None

    @property
    def contained_after_start(self):
        i = self.start_index
        return i is not None and bool(np.all(self.contained[i:]))

    @property
    def guaranteed(self):
        return self.contained_after_start

    def summary(self):
        i = self.start_index
        post = self.violation[i:] if i is not None else self.violation[:0]
        star = "tstar" if self.kind.startswith("ct") else "kstar"
        return {
            "kind": self.kind,
            "n_x": int(self.x.shape[1]),
            "n_z": int(self.z_lo.shape[1]),
            "rows": int(self.times.shape[0]),
            "horizon": float(self.times[-1]),
            "step": self.meta.get("step"),
            "seed": int(self.seed),
            "slack": float(self.slack),
            star: self.detection.as_dict(),
            "contained_after_" + star: self.contained_after_start,
            "z_contained_all": bool(np.all(self.z_contained)),
            "max_violation": float(np.max(post)) if post.size else None,
            "max_z_violation": float(np.max(self.z_violation)),
            "final_width": float(self.width[-1]),
            "final_z_width": float(self.z_width[-1]),
            "vec_order": "column-major",
            "guaranteed": self.guaranteed,
        }


class _Recorder:
    def __init__(self, scenario, observer, n_rows):
        n_x, n_z = scenario.plant.n_x, observer.n_z_
        self.sc = scenario
        self.obs = observer
        self.x = np.empty((n_rows, n_x))
        self.x_lo = np.empty((n_rows, n_x))
        self.x_hi = np.empty((n_rows, n_x))
        self.z_lo = np.empty((n_rows, n_z))
        self.z_hi = np.empty((n_rows, n_z))
        self.sigma = np.empty(n_rows)
        self.contained = np.empty(n_rows, dtype=bool)
        self.z_contained = np.empty(n_rows, dtype=bool)
        self.viol = np.empty(n_rows)
        self.z_viol = np.empty(n_rows)
        self.T = np.empty((n_rows, n_z, n_x))

    def record(self, i, x, ostate):
        obs, slack = self.obs, self.sc.slack
        xb = obs.x_bounds(ostate)
        zlo, zhi = obs.z_bounds(ostate)
        T = obs.transform_matrix(ostate)
        z = T @ x
        self.x[i], self.x_lo[i], self.x_hi[i] = x, xb.lo, xb.hi
        self.z_lo[i], self.z_hi[i] = zlo, zhi
        self.T[i] = T
        self.sigma[i] = obs.sigma_min(ostate)
        self.contained[i] = contains_bounds(xb.lo, xb.hi, x, slack)
        self.z_contained[i] = contains_bounds(zlo, zhi, z, slack)
        self.viol[i] = violation(xb.lo, xb.hi, x)
        self.z_viol[i] = violation(zlo, zhi, z)

    def finish(self, times, extra_meta):
        sc = self.sc
        det = detect_tstar(times, self.sigma, sc.c_T)
        return SimulationTrace(
            kind=sc.kind, times=times, x=self.x, x_lo=self.x_lo, x_hi=self.x_hi,
            z_lo=self.z_lo, z_hi=self.z_hi, sigma_min=self.sigma, contained=self.contained,
            z_contained=self.z_contained, violation=self.viol, z_violation=self.z_viol,
            T=self.T, detection=det, slack=sc.slack, seed=sc.seed, meta=extra_meta,
        )


def _fitted_observer(scenario):
    obs = clone(scenario.observer)
    if "seed" in obs.get_params():
        obs.set_params(seed=scenario.seed)
    return obs.fit(scenario.plant)


def simulate_ct(scenario, validate=True):
    """Integrate plant and observer jointly with fixed-step RK4.

    Raises :class:`NonFiniteState` with the first grid time at which the
    augmented state stops being finite.
    """
    sc = scenario
    if not sc.is_ct:
        raise ConfigError("kind", f"simulate_ct needs a continuous-time scenario, got {sc.kind}")
    if validate:
        sc.validate()
    obs = _fitted_observer(sc)
    plant, n = sc.plant, sc.plant.n_x
    times = sc.grid()
    h = sc.step

    def f(t, s):
        x = s[:n]
        F, H, D, W = plant.at(t)
        u = np.asarray(sc.u(t), dtype=float).reshape(-1)
        w = np.asarray(sc.w(t), dtype=float).reshape(-1)
        d = np.asarray(sc.d(t), dtype=float).reshape(-1)
        y = H @ x + W @ w
        dx = F @ x + u + D @ d
        return np.concatenate([dx, obs.derivative(t, s[n:], y, u, sc.bounds.at(t))])

    state = np.concatenate([sc.x0, obs.initial_state(sc.x0_iv)])
    rec = _Recorder(sc, obs, times.shape[0])
    rec.record(0, state[:n], state[n:])
    for i in range(times.shape[0] - 1):
        state = rk4_step(f, times[i], state, h)
        if not np.all(np.isfinite(state)):
            raise NonFiniteState(float(times[i + 1]))
        rec.record(i + 1, state[:n], state[n:])
    return rec.finish(times, {"step": float(h), "observer": type(obs).__name__})


def simulate_dt(scenario, validate=True):
    """Iterate plant and observer recursions for ``horizon`` steps."""
    sc = scenario
    if sc.is_ct:
        raise ConfigError("kind", f"simulate_dt needs a discrete-time scenario, got {sc.kind}")
    if validate:
        sc.validate()
    obs = _fitted_observer(sc)
    plant, n = sc.plant, sc.plant.n_x
    times = sc.grid()
    x = sc.x0.copy()
    ostate = obs.initial_state(sc.x0_iv)
    rec = _Recorder(sc, obs, times.shape[0])
    rec.record(0, x, ostate)
    for k in range(times.shape[0] - 1):
        F, H, D, W = plant.at(k)
        u = np.asarray(sc.u(k), dtype=float).reshape(-1)
        w = np.asarray(sc.w(k), dtype=float).reshape(-1)
        d = np.asarray(sc.d(k), dtype=float).reshape(-1)
        y = H @ x + W @ w
        ostate = obs.next_state(k, ostate, y, u, sc.bounds.at(k))
        x = F @ x + u + D @ d
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(ostate))):
            raise NonFiniteState(float(k + 1))
        rec.record(k + 1, x, ostate)
    return rec.finish(times, {"step": None, "observer": type(obs).__name__})


def simulate(scenario, validate=True):
    if scenario.is_ct:
        return simulate_ct(scenario, validate)
    return simulate_dt(scenario, validate)


def sweep(scenario, param, values):
    """Run ``scenario`` once per value of an observer parameter.

    Returns per-value detection results and the smallest value whose run
    reached t*/k*.
    """
    rows = []
    for v in values:
        obs = clone(scenario.observer).set_params(**{param: v})
        trace = simulate(replace(scenario, observer=obs))
        det = trace.detection
        rows.append({param: v, "reached": det.reached, "time": det.time, "contained": trace.guaranteed})
    ok = [r[param] for r in rows if r["reached"]]
    return {"runs": rows, "smallest": min(ok) if ok else None}
