"""JSON scenario documents: parsing, validation and conversion to :class:`Scenario`.

Every validation failure raises :class:`ConfigError` whose ``path`` points
at the offending field, e.g. ``plant.F[1][0]``.
"""

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, InvalidInterval, IobsError
from .exprs import ExprEvalError, ExprMatrix, ExprSyntaxError
from .ivec import IntervalVector
from .lti import BoundSignals, LtiIntervalObserver, LtiPlant
from .ltv_ct import CtLtvIntervalObserver, LtvPlant
from .ltv_dt import DtLtvIntervalObserver
from .sim import DEFAULT_STEP, KINDS, Scenario

TOP_LEVEL_KEYS = {"kind", "plant", "target", "signals", "x0", "sim", "check", "output", "name"}


@dataclass
class ConfigDocument:
    kind: str
    scenario: Scenario
    raw: dict
    check: dict = field(default_factory=dict)
    output: dict = field(default_factory=dict)
    source: str = None

    @property
    def time_symbol(self):
        return "t" if self.kind.startswith("ct") else "k"

    @property
    def is_lti(self):
        return self.kind.endswith("lti")


def _require(obj, key, path):
    if not isinstance(obj, dict):
        raise ConfigError(path, "expected an object")
    if key not in obj:
        raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
    return obj[key]


def _matrix(value, path, sym, shape=None):
    if not isinstance(value, list) or not value or not all(isinstance(r, list) for r in value):
        raise ConfigError(path, "expected a non-empty array of arrays")
    width = len(value[0])
    for i, row in enumerate(value):
        if len(row) != width:
            raise ConfigError(f"{path}[{i}]", f"row has {len(row)} entries, expected {width}")
    entries = []
    for i, row in enumerate(value):
        for j, v in enumerate(row):
            entries.append(((i, j), v))
    for (i, j), v in entries:
        try:
            ExprMatrix([[v]], sym)
        except ExprSyntaxError as exc:
            raise ConfigError(f"{path}[{i}][{j}]", f"{exc.message} at byte {exc.offset} in {v!r}") from exc
        except ExprEvalError as exc:
            raise ConfigError(f"{path}[{i}][{j}]", str(exc)) from exc
        except TypeError as exc:
            raise ConfigError(f"{path}[{i}][{j}]", str(exc)) from exc
    M = ExprMatrix(value, sym)
    if shape is not None:
        for axis, (got, want) in enumerate(zip(M.shape, shape)):
            if want is not None and got != want:
                what = "rows" if axis == 0 else "columns"
                raise ConfigError(path, f"expected {want} {what}, got {got}")
    return M


def _vector(value, path, sym, n):
    if not isinstance(value, list):
        raise ConfigError(path, "expected an array")
    if len(value) != n:
        raise ConfigError(path, f"expected {n} entries, got {len(value)}")
    if n == 0:
        zero = np.zeros(0)
        return lambda t: zero
    for i, v in enumerate(value):
        try:
            ExprMatrix([[v]], sym)
        except ExprSyntaxError as exc:
            raise ConfigError(f"{path}[{i}]", f"{exc.message} at byte {exc.offset} in {v!r}") from exc
        except (ExprEvalError, TypeError) as exc:
            raise ConfigError(f"{path}[{i}]", str(exc)) from exc
    M = ExprMatrix([[v] for v in value], sym)
    if M.is_constant:
        fixed = M(0.0)[:, 0]
        return lambda t: fixed

    def signal(t):
        try:
            return M(t)[:, 0]
        except ExprEvalError as exc:
            raise ConfigError(path, f"{exc} at time {t!r}") from exc

    return signal


def _constant(M, path):
    if not M.is_constant:
        raise ConfigError(path, "time-invariant kinds need constant matrices")
    return M(0.0)


def _number_list(value, path, n=None):
    if not isinstance(value, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in value
    ):
        raise ConfigError(path, "expected an array of numbers")
    if n is not None and len(value) != n:
        raise ConfigError(path, f"expected {n} entries, got {len(value)}")
    return np.asarray(value, dtype=float)


def _bounds_pair(signals, name, sym, n):
    key = f"{name}_bounds"
    path = f"signals.{key}"
    if key not in signals:
        if n == 0:
            zero = np.zeros(0)
            return (lambda t: zero), (lambda t: zero)
        raise ConfigError(path, f"bounds are required when the plant has {n} {name}-channels")
    b = signals[key]
    return _vector(_require(b, "lo", path), f"{path}.lo", sym, n), _vector(
        _require(b, "hi", path), f"{path}.hi", sym, n
    )


def _lti_observer(target, time_kind, form, seed, n_x, n_y):
    path = "target"
    if target == "auto":
        return LtiIntervalObserver(time_kind=time_kind, form=form, seed=seed)
    if not isinstance(target, dict):
        raise ConfigError(path, 'expected "auto" or an object')
    if target.get("auto"):
        spectrum = None
        if "spectrum" in target:
            spectrum = _number_list(target["spectrum"], "target.spectrum", n_x)
        return LtiIntervalObserver(
            time_kind=time_kind, form=form, seed=seed, spectrum=spectrum
        )
    A = _constant(_matrix(_require(target, "A", path), "target.A", "t", (n_x, n_x)), "target.A")
    B = _constant(_matrix(_require(target, "B", path), "target.B", "t", (n_x, n_y)), "target.B")
    return LtiIntervalObserver(A=A, B=B, time_kind=time_kind, form=form, seed=seed)


def _ltv_observer(target, time_kind, n_x, n_y):
    path = "target"
    raw_blocks = _require(target, "blocks", path)
    if not isinstance(raw_blocks, list) or len(raw_blocks) != n_y:
        raise ConfigError("target.blocks", f"expected one block per output ({n_y})")
    blocks = []
    for i, blk in enumerate(raw_blocks):
        bp = f"target.blocks[{i}]"
        A = _constant(_matrix(_require(blk, "A", bp), f"{bp}.A", "t"), f"{bp}.A")
        if A.shape[0] != A.shape[1]:
            raise ConfigError(f"{bp}.A", "must be square")
        B_raw = _require(blk, "B", bp)
        if isinstance(B_raw, list) and B_raw and not isinstance(B_raw[0], list):
            B_raw = [[v] for v in B_raw]
        B = _constant(_matrix(B_raw, f"{bp}.B", "t", (A.shape[0], 1)), f"{bp}.B")
        blocks.append((A, B))
    n_z = sum(a.shape[0] for a, _ in blocks)
    gain = target.get("gain", 2.0 if time_kind == "ct" else 1.0)
    if isinstance(gain, bool) or not isinstance(gain, (int, float)) or not gain > 0:
        raise ConfigError("target.gain", "must be a positive number")
    T0 = None
    if target.get("T0") is not None:
        T0 = _constant(_matrix(target["T0"], "target.T0", "t", (n_z, n_x)), "target.T0")
    cls = CtLtvIntervalObserver if time_kind == "ct" else DtLtvIntervalObserver
    return cls(blocks=blocks, gain=float(gain), T0=T0)


def parse_config(doc, source=None):
    """Build a :class:`ConfigDocument` from an already decoded JSON object."""
    if not isinstance(doc, dict):
        raise ConfigError("", "top level must be a JSON object")
    unknown = sorted(set(doc) - TOP_LEVEL_KEYS)
    if unknown:
        raise ConfigError(unknown[0], "unknown top-level field")
    kind = _require(doc, "kind", "")
    if kind not in KINDS:
        raise ConfigError("kind", f"must be one of {', '.join(KINDS)}, got {kind!r}")
    time_kind = kind[:2]
    sym = "t" if time_kind == "ct" else "k"

    plant_doc = _require(doc, "plant", "")
    F = _matrix(_require(plant_doc, "F", "plant"), "plant.F", sym)
    n_x = F.shape[0]
    if F.shape != (n_x, n_x):
        raise ConfigError("plant.F", f"must be square, got {F.shape[0]}x{F.shape[1]}")
    H = _matrix(_require(plant_doc, "H", "plant"), "plant.H", sym, (None, n_x))
    n_y = H.shape[0]
    D = _matrix(plant_doc["D"], "plant.D", sym, (n_x, None)) if "D" in plant_doc else None
    W = _matrix(plant_doc["W"], "plant.W", sym, (n_y, None)) if "W" in plant_doc else None
    n_d = D.shape[1] if D is not None else 0
    n_w = W.shape[1] if W is not None else 0

    sim_doc = doc.get("sim", {})
    if not isinstance(sim_doc, dict):
        raise ConfigError("sim", "expected an object")
    horizon = _require(sim_doc, "horizon", "sim")
    if isinstance(horizon, bool) or not isinstance(horizon, (int, float)) or horizon < 0:
        raise ConfigError("sim.horizon", "must be a non-negative number")
    if time_kind == "dt" and int(horizon) != horizon:
        raise ConfigError("sim.horizon", "discrete-time horizon must be an integer number of steps")
    step = sim_doc.get("step", DEFAULT_STEP)
    if isinstance(step, bool) or not isinstance(step, (int, float)) or not step > 0:
        raise ConfigError("sim.step", "must be a positive number")
    seed = sim_doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("sim.seed", "must be an integer")
    form = sim_doc.get("observer", "z")
    if form not in ("z", "x"):
        raise ConfigError("sim.observer", 'must be "z" or "x"')

    try:
        if kind.endswith("lti"):
            plant = LtiPlant(
                _constant(F, "plant.F"),
                _constant(H, "plant.H"),
                None if D is None else _constant(D, "plant.D"),
                None if W is None else _constant(W, "plant.W"),
                time_kind,
            )
        else:
            # constant blocks become plain arrays so they are not re-evaluated every step
            F_, H_, D_, W_ = (M if M is None or not M.is_constant else M(0.0) for M in (F, H, D, W))
            plant = LtvPlant(F_, H_, D_, W_, time_kind)
    except ConfigError:
        raise
    except (IobsError, ValueError) as exc:
        raise ConfigError("plant", str(exc)) from exc

    target = _require(doc, "target", "")
    if kind.endswith("lti"):
        observer = _lti_observer(target, time_kind, form, seed, n_x, n_y)
    else:
        if not isinstance(target, dict):
            raise ConfigError("target", "expected an object with blocks and gain")
        observer = _ltv_observer(target, time_kind, n_x, n_y)

    signals = doc.get("signals", {})
    if not isinstance(signals, dict):
        raise ConfigError("signals", "expected an object")
    zeros = lambda n: [0] * n  # noqa: E731
    u = _vector(signals.get("u", zeros(n_x)), "signals.u", sym, n_x)
    d = _vector(signals.get("d", zeros(n_d)), "signals.d", sym, n_d)
    w = _vector(signals.get("w", zeros(n_w)), "signals.w", sym, n_w)
    d_lo, d_hi = _bounds_pair(signals, "d", sym, n_d)
    w_lo, w_hi = _bounds_pair(signals, "w", sym, n_w)

    x0_doc = _require(doc, "x0", "")
    x0 = _number_list(_require(x0_doc, "value", "x0"), "x0.value", n_x)
    lo = _number_list(_require(x0_doc, "lo", "x0"), "x0.lo", n_x)
    hi = _number_list(_require(x0_doc, "hi", "x0"), "x0.hi", n_x)
    try:
        x0_iv = IntervalVector(lo, hi)
    except InvalidInterval as exc:
        raise ConfigError("x0", str(exc)) from exc

    c_T = sim_doc.get("c_T")
    scenario = Scenario(
        kind=kind, plant=plant, observer=observer, x0=x0, x0_iv=x0_iv,
        horizon=float(horizon) if time_kind == "ct" else int(horizon),
        u=u, d=d, w=w, bounds=BoundSignals(d_lo, d_hi, w_lo, w_hi),
        step=float(step), seed=seed, c_T=c_T, name=str(doc.get("name", "")),
    )
    if "slack" in sim_doc:
        scenario.slack = float(sim_doc["slack"])
    scenario.validate()

    check = doc.get("check", {})
    if not isinstance(check, dict):
        raise ConfigError("check", "expected an object")
    if "m" in check:
        m = check["m"]
        if not isinstance(m, list) or len(m) != n_y or not all(isinstance(v, int) and v > 0 for v in m):
            raise ConfigError("check.m", f"expected {n_y} positive integers")
    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("output", "expected an object")
    return ConfigDocument(kind=kind, scenario=scenario, raw=doc, check=check, output=output, source=source)


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError("", f"cannot read {path}: {exc.strerror}") from exc
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return parse_config(doc, source=str(path))
