"""Discrete-time LTV interval observers.

``T_{k+1}`` solves ``T_{k+1} F_k = A T_k + B H_k``; the z-observer uses
``T_{k+1}`` on the input and disturbance terms of step ``k``.
"""

import warnings

import numpy as np
from scipy import linalg
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from . import matops
from ._validation import as_matrix
from .errors import BadTargetStructure, ShapeError, SingularFk
from .ivec import IntervalVector, image_bounds, interval_image
from .lti import uncertainty_bounds
from .ltv_ct import KklTarget, LtvPlant, ObservabilityReport, detect_tstar, unvec, vec

SINGULAR_RCOND = 1e-13


def DtLtvPlant(F, H, D=None, W=None):
    return LtvPlant(F, H, D, W, "dt")


def _check_invertible(F_k, k):
    s = matops.singular_values(F_k)
    if s.size == 0 or s[-1] <= SINGULAR_RCOND * max(s[0], 1.0):
        raise SingularFk(k)


def t_step(T_k, F_k, H_k, A, B, k=None):
    """Next transformation ``T_{k+1} = (A T_k + B H_k) F_k^{-1}``.

    Solved as the transposed linear system ``F_k^T T_{k+1}^T = (A T_k + B H_k)^T``.
    """
    F_k = np.asarray(F_k, dtype=float)
    _check_invertible(F_k, k)
    rhs = A @ T_k + B @ H_k
    try:
        return linalg.solve(F_k.T, rhs.T).T
    except linalg.LinAlgError as exc:
        raise SingularFk(k) from exc


def observer_step_z(A, B, T_next, plant_at, z_lo, z_hi, y, u, bounds):
    """One step of the z-observer; returns ``(upper, lower)`` at ``k+1``."""
    _, _, D_k, W_k = plant_at
    common = B @ y + T_next @ u
    up, low = uncertainty_bounds(T_next @ D_k, B @ W_k, bounds)
    return A @ z_hi + common + up, A @ z_lo + common + low


def back_map_pinv_dt(T_k, z_iv):
    return interval_image(matops.pinv(T_k), z_iv)


def uco_gramian(plant, m_list, k):
    """``sum_i sum_{j=k-m_i}^{k-1} O_ij^T O_ij`` with ``O_ij = H_{i,j} F_j^{-1} ... F_{k-1}^{-1}``."""
    n_x = plant.n_x
    G = np.zeros((n_x, n_x))
    m_max = max(m_list)
    # P_j = F_j^{-1} ... F_{k-1}^{-1}, built backwards from j = k-1
    P = np.eye(n_x)
    prods = {}
    for j in range(k - 1, k - m_max - 1, -1):
        F_j = plant.F(j)
        _check_invertible(F_j, j)
        P = np.linalg.solve(F_j, P)
        prods[j] = P
    for i, m in enumerate(m_list):
        for j in range(k - m, k):
            row = plant.H(j)[i] @ prods[j]
            G += np.outer(row, row)
    return G


def uco_check(plant, m_list, k_range, tol=1e-12):
    """Empirical uniform complete observability constant over ``k_range``.

    ``k_range`` must start at or after ``max(m_list)``.
    """
    m_list = [int(m) for m in m_list]
    if len(m_list) != plant.n_y:
        raise ShapeError(f"need one m_i per output ({plant.n_y}), got {len(m_list)}")
    ks = list(k_range)
    if not ks or ks[0] < max(m_list):
        raise ValueError(f"k_range must be non-empty and start at k >= {max(m_list)}")
    lam = np.array([np.linalg.eigvalsh(uco_gramian(plant, m_list, k))[0] for k in ks])
    i = int(np.argmin(lam))
    c_o = max(float(lam[i]), 0.0)
    report = ObservabilityReport(c_o=c_o, argmin=float(ks[i]), lambda_min=lam, m_list=m_list)
    if c_o <= tol * max(1.0, float(np.max(np.abs(lam)))):
        report.c_o = 0.0
        msg = f"UCO estimate is {c_o:.3g} (min at k={ks[i]})"
        report.warnings.append(msg)
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
    return report


def detect_kstar(sigma_min, c_T=None, guard_fraction=0.05):
    """Discrete analogue of :func:`iobs.ltv_ct.detect_tstar` on steps ``0, 1, ...``."""
    s = np.asarray(sigma_min, dtype=float)
    return detect_tstar(np.arange(s.size, dtype=float), s, c_T, guard_fraction)


class DtLtvIntervalObserver(BaseEstimator):
    """Finite-time interval observer for discrete-time LTV plants.

    Parameters
    ----------
    blocks : sequence of (A_i, B_i)
        Per-output controllable pairs with ``A_i`` Schur and non-negative.
    gain : float
        Scaling ``gamma`` of the target dynamics, usually in ``(0, 1]``.
    T0 : array_like, optional
        Initial transformation; zero when omitted.
    """

    time_kind = "dt"

    def __init__(self, blocks=None, gain=1.0, T0=None):
        self.blocks = blocks
        self.gain = gain
        self.T0 = T0

    def fit(self, plant, y=None):
        if plant.time_kind != "dt":
            raise ValueError(f"plant is {plant.time_kind} but observer is dt")
        if self.blocks is None:
            raise BadTargetStructure("blocks must be given for LTV observers")
        self.target_ = KklTarget(tuple(self.blocks), float(self.gain), "dt")
        if len(self.target_.blocks) != plant.n_y:
            raise ShapeError(f"need one target block per output ({plant.n_y}), got {len(self.target_.blocks)}")
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

    def next_state(self, k, state, y, u, bounds):
        z_hi, z_lo, T = self.split_state(state)
        pa = self.plant_.at(k)
        A, B = self.target_.A, self.target_.B
        T_next = t_step(T, pa[0], pa[1], A, B, k)
        up, low = observer_step_z(A, B, T_next, pa, z_lo, z_hi, y, u, bounds)
        return np.concatenate([up, low, vec(T_next)])

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


def sweep_gamma(scenario, gammas):
    from .sim import sweep
    return sweep(scenario, "gain", gammas)

