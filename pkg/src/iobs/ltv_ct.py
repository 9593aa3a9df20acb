"""Continuous-time LTV interval observers with a time-varying KKL transformation.

``T(t)`` follows ``dT/dt = A T - T F(t) + B H(t)`` from any ``T(0)``; the
bounds on ``z = T x`` are always valid, and bounds on ``x`` are recovered
through the pseudo-inverse once ``T(t)`` is uniformly left-invertible.
"""

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import matops
from ._validation import as_matrix, check_square
from .errors import BadTargetStructure, NotControllable, ShapeError
from .ivec import IntervalVector, image_bounds, interval_image
from .lti import check_time_kind, uncertainty_bounds

logger = logging.getLogger(__name__)

GUARD_FRACTION = 0.05
BURN_IN_FRACTION = 0.1
C_T_FACTOR = 0.05


class LtvPlant:
    """Matrices ``F, H, D, W`` given as callables of time.

    Used for both continuous time (real ``t``) and discrete time (integer
    ``k``). Constant arrays are accepted in place of callables.
    """

    def __init__(self, F, H, D=None, W=None, time_kind="ct"):
        self.time_kind = check_time_kind(time_kind)
        self._funcs = [_as_matrix_function(F)]
        F0 = self._funcs[0](0)
        n_x = F0.shape[0]
        if F0.shape != (n_x, n_x):
            raise ShapeError(f"F must be square, got shape {F0.shape}")
        self._funcs.append(_as_matrix_function(H, row=True))
        H0 = self._funcs[1](0)
        if H0.shape[1] != n_x:
            raise ShapeError(f"H must have {n_x} columns, got shape {H0.shape}")
        n_y = H0.shape[0]
        self._funcs.append(_as_matrix_function(np.zeros((n_x, 0)) if D is None else D))
        self._funcs.append(_as_matrix_function(np.zeros((n_y, 0)) if W is None else W))
        D0, W0 = self._funcs[2](0), self._funcs[3](0)
        if D0.shape[0] != n_x:
            raise ShapeError(f"D must have {n_x} rows, got shape {D0.shape}")
        if W0.shape[0] != n_y:
            raise ShapeError(f"W must have {n_y} rows, got shape {W0.shape}")
        self.n_x, self.n_y, self.n_d, self.n_w = n_x, n_y, D0.shape[1], W0.shape[1]
        self._cache_t = None
        self._cache = None

    def at(self, t):
        """``(F, H, D, W)`` at time ``t``; the last evaluation is cached."""
        if t != self._cache_t:
            self._cache = tuple(f(t) for f in self._funcs)
            self._cache_t = t
        return self._cache

    def F(self, t):
        return self.at(t)[0]

    def H(self, t):
        return self.at(t)[1]

    def norm_bounds(self, grid):
        """Largest ``||F||`` and ``||H||`` (spectral norm) over ``grid``."""
        cf = max(np.linalg.norm(self.at(t)[0], 2) for t in grid)
        ch = max(np.linalg.norm(self.at(t)[1], 2) for t in grid)
        return float(cf), float(ch)


def _as_matrix_function(M, row=False):
    if callable(M):
        def f(t):
            return np.atleast_2d(np.asarray(M(t), dtype=float))
        return f
    arr = np.asarray(M, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(1, -1) if row else arr.reshape(-1, 1)
    arr = as_matrix(arr)
    return lambda t: arr


def CtLtvPlant(F, H, D=None, W=None):
    return LtvPlant(F, H, D, W, "ct")


@dataclass(frozen=True)
class KklTarget:
    """Block-diagonal target ``A = gain * diag(A_1, ...)``, ``B = diag(B_1, ...)``.

    One block per output; block ``i`` has size ``m_i`` and ``n_z = sum m_i``.
    """

    blocks: tuple
    gain: float = 2.0
    time_kind: str = "ct"
    structural_tol: float = 0.0
    A_tilde: np.ndarray = field(init=False, repr=False)
    A: np.ndarray = field(init=False, repr=False)
    B: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        check_time_kind(self.time_kind)
        if not self.gain > 0:
            raise BadTargetStructure(f"gain must be positive, got {self.gain!r}")
        if len(self.blocks) == 0:
            raise BadTargetStructure("at least one target block is required")
        As, Bs = [], []
        for i, (Ai, Bi) in enumerate(self.blocks):
            Ai = check_square(Ai, f"blocks[{i}].A")
            Bi = as_matrix(Bi, f"blocks[{i}].B")
            if Bi.shape != (Ai.shape[0], 1):
                raise ShapeError(f"blocks[{i}].B must have shape {(Ai.shape[0], 1)}, got {Bi.shape}")
            if not matops.is_controllable(Ai, Bi):
                raise NotControllable(f"target block {i} is not controllable")
            As.append(Ai)
            Bs.append(Bi)
        A_tilde = linalg.block_diag(*As)
        A = self.gain * A_tilde
        cert = matops.spectral_certificate(A, self.structural_tol)
        if self.time_kind == "ct" and not (cert.is_metzler and cert.max_real_part < 0):
            raise BadTargetStructure("A = gain * A_tilde must be Hurwitz and Metzler")
        if self.time_kind == "dt" and not (cert.is_nonnegative and cert.spectral_radius < 1):
            raise BadTargetStructure("A = gain * A_tilde must be Schur and non-negative")
        object.__setattr__(self, "blocks", tuple((a, b) for a, b in zip(As, Bs)))
        object.__setattr__(self, "A_tilde", A_tilde)
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", linalg.block_diag(*Bs))

    @property
    def block_dims(self):
        return [a.shape[0] for a, _ in self.blocks]

    @property
    def n_z(self):
        return self.A.shape[0]

    def certificate(self):
        return matops.spectral_certificate(self.A, self.structural_tol)


def t_dynamics_rhs(T, F_t, H_t, A, B):
    """``A T - T F(t) + B H(t)``."""
    return A @ T - T @ F_t + B @ H_t


def observer_rhs_z_ltv(A, B, T, plant_at, z_lo, z_hi, y, u, bounds):
    """Derivatives ``(upper, lower)`` of the target-coordinate bounds."""
    _, _, D_t, W_t = plant_at
    common = B @ y + T @ u
    up, low = uncertainty_bounds(T @ D_t, B @ W_t, bounds)
    return A @ z_hi + common + up, A @ z_lo + common + low


def back_map_pinv(T, z_iv):
    """Interval image of the z-box under ``pinv(T)``.

    Always defined; it encloses ``x`` only where ``T`` is left-invertible.
    """
    return interval_image(matops.pinv(T), z_iv)


def is_left_invertible(T, c_T):
    return matops.min_singular_value(T) ** 2 >= c_T


@dataclass(frozen=True)
class Detection:
    """Outcome of a t* / k* search. ``index`` and ``time`` are None if not reached."""

    reached: bool
    index: int = None
    time: float = None
    c_T: float = None
    reason: str = ""

    def as_dict(self):
        return {
            "reached": self.reached,
            "index": self.index,
            "time": self.time,
            "c_T": self.c_T,
            "reason": self.reason,
        }


def default_c_T(sigma_min, burn_in_fraction=BURN_IN_FRACTION):
    """``(0.05 * median sigma_min after burn-in)^2``."""
    s = np.asarray(sigma_min, dtype=float)
    if s.size == 0:
        return 0.0
    start = min(int(np.floor(burn_in_fraction * s.size)), s.size - 1)
    return float((C_T_FACTOR * np.median(s[start:])) ** 2)


def detect_tstar(times, sigma_min, c_T=None, guard_fraction=GUARD_FRACTION):
    """Earliest grid time after which ``sigma_min^2 >= c_T`` holds to the end.

    The satisfying suffix must also cover a trailing guard window of
    ``guard_fraction`` of the horizon, otherwise the result is not reached.
    """
    times = np.asarray(times, dtype=float)
    s = np.asarray(sigma_min, dtype=float)
    if times.shape != s.shape or s.size == 0:
        raise ShapeError("times and sigma_min must be non-empty and of equal length")
    if c_T is None:
        c_T = default_c_T(s)
    if not c_T > 0:
        return Detection(False, c_T=float(c_T), reason="c_T is not positive")
    ok = s**2 >= c_T
    if not ok[-1]:
        return Detection(False, c_T=float(c_T), reason="condition fails at horizon end")
    bad = np.flatnonzero(~ok)
    i = int(bad[-1] + 1) if bad.size else 0
    span = times[-1] - times[0]
    if times[-1] - times[i] < guard_fraction * span:
        return Detection(False, c_T=float(c_T), reason="satisfied only inside the guard window")
    return Detection(True, index=i, time=float(times[i]), c_T=float(c_T))


@dataclass
class ObservabilityReport:
    c_o: float
    argmin: float
    lambda_min: np.ndarray
    m_list: list
    warnings: list = field(default_factory=list)

    @property
    def passed(self):
        return self.c_o > 0

    def as_dict(self):
        return {
            "c_o": self.c_o,
            "argmin": self.argmin,
            "m": list(self.m_list),
            "passed": self.passed,
            "warnings": list(self.warnings),
        }


def _obs_row(plant, i, j, t, h):
    # O_{i,1} = H_i, O_{i,j+1} = dO_{i,j}/dt + O_{i,j} F, derivative by central differences
    if j == 1:
        return plant.H(t)[i]
    prev = _obs_row(plant, i, j - 1, t, h)
    d_prev = (_obs_row(plant, i, j - 1, t + h, h) - _obs_row(plant, i, j - 1, t - h, h)) / (2 * h)
    return d_prev + prev @ plant.F(t)


def observability_gramian(plant, m_list, t, h=1e-3):
    """``sum_i O_i(t)^T O_i(t)`` with derivatives by central differences."""
    n_x = plant.n_x
    G = np.zeros((n_x, n_x))
    for i, m in enumerate(m_list):
        rows = np.array([_obs_row(plant, i, j, t, h) for j in range(1, m + 1)]).reshape(m, n_x)
        G += rows.T @ rows
    return G


def empirical_observability_check(plant, m_list, grid, h=1e-3, tol=1e-12):
    """Advisory instantaneous-observability estimate over a time grid.

    Reports ``c_o = min_t lambda_min(sum_i O_i(t)^T O_i(t))``. The
    derivatives are finite-difference approximations, so this is an
    estimate, not a proof.
    """
    m_list = [int(m) for m in m_list]
    if len(m_list) != plant.n_y:
        raise ShapeError(f"need one m_i per output ({plant.n_y}), got {len(m_list)}")
    lam = np.array([np.linalg.eigvalsh(observability_gramian(plant, m_list, t, h))[0] for t in grid])
    i = int(np.argmin(lam))
    c_o = max(float(lam[i]), 0.0)
    report = ObservabilityReport(c_o=c_o, argmin=float(grid[i]), lambda_min=lam, m_list=m_list)
    if c_o <= tol * max(1.0, float(np.max(np.abs(lam)))):
        report.c_o = 0.0
        msg = f"instantaneous observability estimate is {c_o:.3g} (min at t={grid[i]:.4g})"
        report.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return report


def vec(T):
    """Column-major flattening."""
    return T.reshape(-1, order="F")


def unvec(v, n_z, n_x):
    return v.reshape((n_z, n_x), order="F")


class CtLtvIntervalObserver(BaseEstimator):
    """Finite-time interval observer for continuous-time LTV plants.

    Parameters
    ----------
    blocks : sequence of (A_i, B_i)
        Per-output controllable pairs with ``A_i`` Hurwitz and Metzler.
    gain : float
        Scaling ``l`` of the target dynamics.
    T0 : array_like, optional
        Initial transformation; zero when omitted.
    """

    time_kind = "ct"

    def __init__(self, blocks=None, gain=2.0, T0=None):
        self.blocks = blocks
        self.gain = gain
        self.T0 = T0

    def _target(self, plant):
        if self.blocks is None:
            raise BadTargetStructure("blocks must be given for LTV observers")
        target = KklTarget(tuple(self.blocks), float(self.gain), self.time_kind)
        if len(target.blocks) != plant.n_y:
            raise ShapeError(f"need one target block per output ({plant.n_y}), got {len(target.blocks)}")
        if target.n_z < plant.n_x:
            warnings.warn("n_z < n_x: T can never be left-invertible", RuntimeWarning, stacklevel=3)
        return target

    def fit(self, plant, y=None):
        if plant.time_kind != self.time_kind:
            raise ValueError(f"plant is {plant.time_kind} but observer is {self.time_kind}")
        self.target_ = self._target(plant)
        self.plant_ = plant
        self.n_x_ = plant.n_x
        self.n_z_ = self.target_.n_z
        T0 = np.zeros((self.n_z_, self.n_x_)) if self.T0 is None else as_matrix(self.T0, "T0")
        if T0.shape != (self.n_z_, self.n_x_):
            raise ShapeError(f"T0 must have shape {(self.n_z_, self.n_x_)}, got {T0.shape}")
        self.T0_ = T0
        return self

    def initial_state(self, x0_iv):
        check_is_fitted(self, "target_")
        lo, hi = image_bounds(self.T0_, x0_iv.lo, x0_iv.hi)
        return np.concatenate([hi, lo, vec(self.T0_)])

    def split_state(self, state):
        nz = self.n_z_
        return state[:nz], state[nz:2 * nz], unvec(state[2 * nz:], nz, self.n_x_)

    def derivative(self, t, state, y, u, bounds):
        z_hi, z_lo, T = self.split_state(state)
        pa = self.plant_.at(t)
        A, B = self.target_.A, self.target_.B
        up, low = observer_rhs_z_ltv(A, B, T, pa, z_lo, z_hi, y, u, bounds)
        dT = t_dynamics_rhs(T, pa[0], pa[1], A, B)
        return np.concatenate([up, low, vec(dT)])

    def z_bounds(self, state):
        z_hi, z_lo, _ = self.split_state(state)
        return z_lo, z_hi

    def x_bounds(self, state):
        z_hi, z_lo, T = self.split_state(state)
        lo, hi = image_bounds(matops.pinv(T), z_lo, z_hi)
        return IntervalVector(lo, hi)

    def transform_matrix(self, state):
        return self.split_state(state)[2]

    def sigma_min(self, state):
        return matops.min_singular_value(self.transform_matrix(state))


def sweep_gain(scenario, gains):
    """Simulate ``scenario`` for each gain; report per-gain t* and the smallest success."""
    from .sim import sweep
    return sweep(scenario, "gain", gains)
