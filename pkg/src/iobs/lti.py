"""Interval observers for linear time-invariant plants.

The plant ``x+ = F x + u + D d``, ``y = H x + W w`` is mapped by a constant
``T`` solving ``T F = A T + B H`` into target coordinates ``z = T x`` whose
dynamics ``A`` is Metzler (CT) or non-negative (DT), where interval bounds
propagate in order. Bounds are mapped back through ``T^{-1}``.
"""

import logging
import warnings
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, NamedTuple

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import matops
from ._validation import as_matrix, as_row_matrix, check_square
from .errors import (
    BadTargetStructure,
    NearSingularSylvester,
    NotControllable,
    NotObservable,
    ShapeError,
    SpectraOverlap,
    TargetExhausted,
    TNotInvertible,
)
from .ivec import IntervalVector, image_bounds, interval_image

logger = logging.getLogger(__name__)

TIME_KINDS = ("ct", "dt")
COND_WARNING = 1e8
INVERT_TOL = 1e-12


def check_time_kind(time_kind):
    if time_kind not in TIME_KINDS:
        raise ValueError(f"time_kind must be 'ct' or 'dt', got {time_kind!r}")
    return time_kind


class Bounds(NamedTuple):
    """Disturbance and noise bounds evaluated at one time."""

    d_lo: np.ndarray
    d_hi: np.ndarray
    w_lo: np.ndarray
    w_hi: np.ndarray


def _zero_signal(n):
    z = np.zeros(n)
    return lambda t: z


@dataclass
class BoundSignals:
    """Time-indexed bounds ``d_lo <= d <= d_hi`` and ``w_lo <= w <= w_hi``.

    Each field is a callable of time returning a vector.
    """

    d_lo: Callable
    d_hi: Callable
    w_lo: Callable
    w_hi: Callable

    @classmethod
    def constant(cls, d_lo=(), d_hi=(), w_lo=(), w_hi=()):
        arrs = [np.asarray(v, dtype=float).reshape(-1) for v in (d_lo, d_hi, w_lo, w_hi)]
        return cls(*[(lambda a: (lambda t: a))(a) for a in arrs])

    @classmethod
    def none(cls, n_d=0, n_w=0):
        return cls(_zero_signal(n_d), _zero_signal(n_d), _zero_signal(n_w), _zero_signal(n_w))

    def at(self, t):
        return Bounds(
            np.asarray(self.d_lo(t), dtype=float).reshape(-1),
            np.asarray(self.d_hi(t), dtype=float).reshape(-1),
            np.asarray(self.w_lo(t), dtype=float).reshape(-1),
            np.asarray(self.w_hi(t), dtype=float).reshape(-1),
        )


def uncertainty_bounds(TD, BW, b):
    """Upper and lower enclosures of ``TD d - BW w`` given the bounds ``b``."""
    tdp, tdm = matops.split_pm(TD)
    bwp, bwm = matops.split_pm(BW)
    upper = tdp @ b.d_hi - tdm @ b.d_lo + bwm @ b.w_hi - bwp @ b.w_lo
    lower = tdp @ b.d_lo - tdm @ b.d_hi + bwm @ b.w_lo - bwp @ b.w_hi
    return upper, lower


@dataclass(frozen=True)
class LtiPlant:
    """Constant matrices of ``x+ = F x + u + D d``, ``y = H x + W w``."""

    F: np.ndarray
    H: np.ndarray
    D: np.ndarray = None
    W: np.ndarray = None
    time_kind: str = "ct"

    def __post_init__(self):
        F = check_square(self.F, "F")
        n_x = F.shape[0]
        H = as_row_matrix(self.H, "H")
        if H.shape[1] != n_x:
            raise ShapeError(f"H must have {n_x} columns, got shape {H.shape}")
        n_y = H.shape[0]
        D = np.zeros((n_x, 0)) if self.D is None else as_matrix(self.D, "D")
        W = np.zeros((n_y, 0)) if self.W is None else as_matrix(self.W, "W")
        if D.shape[0] != n_x:
            raise ShapeError(f"D must have {n_x} rows, got shape {D.shape}")
        if W.shape[0] != n_y:
            raise ShapeError(f"W must have {n_y} rows, got shape {W.shape}")
        check_time_kind(self.time_kind)
        for name, val in (("F", F), ("H", H), ("D", D), ("W", W)):
            object.__setattr__(self, name, val)

    n_x = property(lambda self: self.F.shape[0])
    n_y = property(lambda self: self.H.shape[0])
    n_d = property(lambda self: self.D.shape[1])
    n_w = property(lambda self: self.W.shape[1])

    def at(self, t):
        return self.F, self.H, self.D, self.W


@dataclass(frozen=True)
class LtiDesign:
    A: np.ndarray
    B: np.ndarray
    T: np.ndarray
    T_inv: np.ndarray
    plant: LtiPlant
    certificates: dict = field(default_factory=dict)

    @property
    def time_kind(self):
        return self.plant.time_kind

    @cached_property
    def TD(self):
        return self.T @ self.plant.D

    @cached_property
    def BW(self):
        return self.B @ self.plant.W


def _diag_spectrum(n_x, time_kind, retry):
    i = np.arange(1, n_x + 1, dtype=float)
    if time_kind == "ct":
        return -(i + 0.37 * retry)
    base = 0.1 * i if n_x <= 9 else i / (n_x + 1)
    return base * (1.0 - 0.07 * retry)


def default_pattern_B(n_x, n_y):
    """Row ``i`` carries a 1 in column ``i mod n_y``."""
    B = np.zeros((n_x, n_y))
    B[np.arange(n_x), np.arange(n_x) % n_y] = 1.0
    return B


def default_target(n_x, n_y, time_kind="ct", avoid_spectrum=None, max_retries=8, spectrum=None):
    """Pick a diagonal target pair ``(A, B)``.

    CT gives ``A = diag(-1, -2, ...)``; DT gives ``A = diag(0.1, 0.2, ...)``,
    unless ``spectrum`` supplies the diagonal. The spectrum is shifted and
    retried while it comes within the default gap tolerance of
    ``avoid_spectrum``. Diagonal ``A`` is trivially Metzler and non-negative.
    """
    if n_x < 1:
        raise ValueError("n_x must be >= 1")
    check_time_kind(time_kind)
    avoid = np.asarray([] if avoid_spectrum is None else avoid_spectrum, dtype=complex).reshape(-1)
    B = default_pattern_B(n_x, n_y)
    if spectrum is not None:
        spectrum = np.asarray(spectrum, dtype=float).reshape(-1)
        if spectrum.shape[0] != n_x or np.unique(spectrum).size != n_x:
            raise ValueError(f"spectrum hint must hold {n_x} distinct values")
    tried = []
    for retry in range(max_retries + 1):
        if spectrum is None:
            lam = _diag_spectrum(n_x, time_kind, retry)
        elif time_kind == "ct":
            lam = spectrum - 0.37 * retry
        else:
            lam = spectrum * (1.0 - 0.07 * retry)
        tried.append(retry)
        A = np.diag(lam)
        if avoid.size:
            scale = max(np.max(np.abs(lam)), np.max(np.abs(avoid)))
            if np.min(np.abs(lam[:, None] - avoid[None, :])) <= 1e-8 * (1.0 + scale):
                continue
        if matops.is_controllable(A, B):
            return A, B
    raise TargetExhausted(f"no admissible target after retries {tried}")


def _check_target(A, time_kind, tol):
    cert = matops.spectral_certificate(A, tol)
    if time_kind == "ct":
        if not cert.is_metzler:
            raise BadTargetStructure("A must be Metzler in continuous time")
        if not cert.max_real_part < 0:
            raise BadTargetStructure(f"A must be Hurwitz (max real part {cert.max_real_part:.3g})")
    else:
        if not cert.is_nonnegative:
            raise BadTargetStructure("A must be non-negative in discrete time")
        if not cert.spectral_radius < 1:
            raise BadTargetStructure(f"A must be Schur (spectral radius {cert.spectral_radius:.3g})")
    return cert


def design_lti(plant, A, B, *, seed=0, max_redraws=8, gap_tol=None, structural_tol=0.0):
    """Compute the constant transformation ``T`` with ``T F = A T + B H``.

    Parameters
    ----------
    plant : LtiPlant
    A : (n_x, n_x) array_like
        Target dynamics; Hurwitz and Metzler (CT) or Schur and non-negative (DT).
    B : (n_x, n_y) array_like
        Output injection; ``(A, B)`` must be controllable.
    seed : int
        First seed of the deterministic sequence used to redraw ``B`` when
        ``T`` comes out singular.
    max_redraws : int
        Number of redraws before :class:`TNotInvertible` is raised.

    Returns
    -------
    LtiDesign
    """
    F, H = plant.F, plant.H
    n_x, n_y = plant.n_x, plant.n_y
    if not matops.is_observable(F, H):
        raise NotObservable("the pair (F, H) is not observable")
    A = check_square(A, "A")
    if A.shape[0] != n_x:
        raise ShapeError(f"A must be {n_x}x{n_x}, got shape {A.shape}")
    B = as_matrix(B, "B")
    if B.shape != (n_x, n_y):
        raise ShapeError(f"B must have shape {(n_x, n_y)}, got {B.shape}")
    cert = _check_target(A, plant.time_kind, structural_tol)
    if not matops.is_controllable(A, B):
        raise NotControllable("the pair (A, B) is not controllable")
    if gap_tol is None:
        gap_tol = matops.default_gap_tol(A, F)
    gap = matops.spectral_gap(A, F)
    if not gap > gap_tol:
        raise SpectraOverlap(f"eig(A) and eig(F) are {gap:.3e} apart (tolerance {gap_tol:.3e})")

    rng = np.random.default_rng(seed)
    redraws = 0
    while True:
        try:
            T = matops.solve_sylvester(A, F, B @ H, gap_tol=gap_tol)
        except NearSingularSylvester as exc:
            raise SpectraOverlap(str(exc)) from exc
        s = matops.singular_values(T)
        if s[-1] > INVERT_TOL * max(s[0], 1.0):
            break
        if redraws >= max_redraws:
            raise TNotInvertible(
                f"T singular (sigma_min={s[-1]:.3e}) after {redraws} redraws of B starting at seed {seed}"
            )
        redraws += 1
        logger.info("T numerically singular; redrawing B (attempt %d)", redraws)
        while True:
            B = rng.standard_normal((n_x, n_y))
            if matops.is_controllable(A, B):
                break

    lu = linalg.lu_factor(T)
    T_inv = linalg.lu_solve(lu, np.eye(n_x))
    cond = float(s[0] / s[-1])
    if cond > COND_WARNING:
        warnings.warn(f"T is ill-conditioned (cond={cond:.3e})", RuntimeWarning, stacklevel=2)
    certificates = {
        "target": cert.as_dict(),
        "observable": True,
        "controllable": True,
        "spectral_gap": gap,
        "sylvester_residual": matops.sylvester_residual(T, A, F, B @ H),
        "sigma_min_T": float(s[-1]),
        "cond_T": cond,
        "inverse_residual": float(
            max(np.linalg.norm(T @ T_inv - np.eye(n_x)), np.linalg.norm(T_inv @ T - np.eye(n_x)))
        ),
        "B_redraws": redraws,
    }
    return LtiDesign(A=A, B=B, T=T, T_inv=T_inv, plant=plant, certificates=certificates)


def init_bounds_z(design, x0_iv):
    """Initial target-coordinate box, the image of the initial box under ``T``."""
    return interval_image(design.T, x0_iv)


def observer_rhs_z(design, z_lo, z_hi, y, u, bounds):
    """Right-hand side (CT) or next value (DT) of the z-coordinate observer.

    Returns ``(upper, lower)`` for ``(z_hi, z_lo)``.
    """
    A, B, T = design.A, design.B, design.T
    common = B @ y + T @ u
    up, low = uncertainty_bounds(design.TD, design.BW, bounds)
    return A @ z_hi + common + up, A @ z_lo + common + low


def back_map(design, z_iv):
    return interval_image(design.T_inv, z_iv)


def init_xhat(design, x0_iv):
    """Initial ``(xhat_upper, xhat_lower) = T^{-1} (z_hi_0, z_lo_0)``."""
    z0 = init_bounds_z(design, x0_iv)
    return design.T_inv @ z0.hi, design.T_inv @ z0.lo


def observer_rhs_x(design, xhat_up, xhat_low, y, u, bounds):
    """Right-hand side (CT) or next value (DT) of the x-coordinate observer.

    Returns ``(upper, lower)``. The two states are preimages of the
    z-bounds, not an interval themselves; see :func:`xhat_bounds`.
    """
    F, H = design.plant.F, design.plant.H
    T_inv = design.T_inv
    gain = T_inv @ design.B
    up, low = uncertainty_bounds(design.TD, design.BW, bounds)
    upper = F @ xhat_up + u + gain @ (y - H @ xhat_up) + T_inv @ up
    lower = F @ xhat_low + u + gain @ (y - H @ xhat_low) + T_inv @ low
    return upper, lower


def xhat_bounds(design, xhat_up, xhat_low):
    """Bounds in x from the x-form observer states."""
    z_low, z_up = design.T @ xhat_low, design.T @ xhat_up
    # ordered in exact arithmetic; min/max absorbs rounding on collapsed intervals
    lo, hi = image_bounds(design.T_inv, np.minimum(z_low, z_up), np.maximum(z_low, z_up))
    return IntervalVector(lo, hi)


class LtiIntervalObserver(BaseEstimator):
    """Interval observer for an LTI plant.

    ``fit`` runs the offline design (pick the target pair, solve the
    Sylvester equation once, invert ``T``). The fitted observer exposes a
    flat state vector so a simulator can integrate it next to the plant.

    Parameters
    ----------
    A, B : array_like or None
        Target pair. ``None`` picks :func:`default_target`.
    time_kind : {'ct', 'dt'}
    form : {'z', 'x'}
        Integrate in target coordinates or directly in plant coordinates.
    seed : int
        Seed of the redraw sequence for ``B``.
    spectrum : array_like, optional
        Diagonal of the automatically picked ``A`` when ``A`` is None.
    """

    def __init__(self, A=None, B=None, time_kind="ct", form="z", seed=0, gap_tol=None,
                 max_redraws=8, spectrum=None):
        self.A = A
        self.B = B
        self.spectrum = spectrum
        self.time_kind = time_kind
        self.form = form
        self.seed = seed
        self.gap_tol = gap_tol
        self.max_redraws = max_redraws

    def fit(self, plant, y=None):
        check_time_kind(self.time_kind)
        if self.form not in ("z", "x"):
            raise ValueError(f"form must be 'z' or 'x', got {self.form!r}")
        if plant.time_kind != self.time_kind:
            raise ValueError(f"plant is {plant.time_kind} but observer is {self.time_kind}")
        if self.A is None or self.B is None:
            A, B = default_target(
                plant.n_x, plant.n_y, self.time_kind, matops.eigvals(plant.F), spectrum=self.spectrum
            )
            A = A if self.A is None else self.A
            B = B if self.B is None else self.B
        else:
            A, B = self.A, self.B
        self.design_ = design_lti(
            plant, A, B, seed=self.seed, max_redraws=self.max_redraws, gap_tol=self.gap_tol
        )
        self.plant_ = plant
        self.n_x_ = plant.n_x
        self.n_z_ = plant.n_x
        self.sigma_min_ = self.design_.certificates["sigma_min_T"]
        return self

    def transform(self, x0_iv):
        """Map an initial box in x to the initial box in z."""
        check_is_fitted(self, "design_")
        return init_bounds_z(self.design_, x0_iv)

    def initial_state(self, x0_iv):
        check_is_fitted(self, "design_")
        if self.form == "z":
            z0 = init_bounds_z(self.design_, x0_iv)
            return np.concatenate([z0.hi, z0.lo])
        up, low = init_xhat(self.design_, x0_iv)
        return np.concatenate([up, low])

    def _advance(self, state, y, u, bounds):
        n = self.n_x_
        if self.form == "z":
            up, low = observer_rhs_z(self.design_, state[n:], state[:n], y, u, bounds)
        else:
            up, low = observer_rhs_x(self.design_, state[:n], state[n:], y, u, bounds)
        return np.concatenate([up, low])

    def derivative(self, t, state, y, u, bounds):
        return self._advance(state, y, u, bounds)

    def next_state(self, k, state, y, u, bounds):
        return self._advance(state, y, u, bounds)

    def z_bounds(self, state):
        """Target-coordinate ``(lo, hi)`` as raw arrays."""
        n = self.n_x_
        if self.form == "z":
            return state[n:], state[:n]
        T = self.design_.T
        low, up = T @ state[n:], T @ state[:n]
        return np.minimum(low, up), np.maximum(low, up)

    def x_bounds(self, state):
        n = self.n_x_
        if self.form == "z":
            lo, hi = image_bounds(self.design_.T_inv, state[n:], state[:n])
            return IntervalVector(lo, hi)
        return xhat_bounds(self.design_, state[:n], state[n:])

    def transform_matrix(self, state=None):
        return self.design_.T

    def sigma_min(self, state=None):
        return self.sigma_min_

