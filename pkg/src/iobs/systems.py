"""Seeded random test systems."""

import numpy as np

from . import matops


def random_observable_lti(seed, n_x=8, n_y=6, n_d=2, n_w=1, low=-3, high=3, margin=1.0):
    """Integer-valued random plant ``(F, H, D, W)`` with ``(F, H)`` observable.

    Entries are drawn uniformly from ``low..high``. ``F`` is then shifted by
    an integer multiple of the identity so that its eigenvalues have real
    part at most ``-margin``, which keeps long simulations bounded.
    """
    rng = np.random.default_rng(seed)
    while True:
        R = rng.integers(low, high + 1, size=(n_x, n_x)).astype(float)
        H = rng.integers(low, high + 1, size=(n_y, n_x)).astype(float)
        D = rng.integers(low, high + 1, size=(n_x, n_d)).astype(float)
        W = rng.integers(low, high + 1, size=(n_y, n_w)).astype(float)
        shift = np.ceil(matops.max_real_part(R) + margin)
        F = R - max(shift, 0.0) * np.eye(n_x)
        if matops.is_observable(F, H):
            return F, H, D, W


def random_observable_pair(rng, n_x, n_y):
    """Gaussian ``(F, H)`` redrawn until observable."""
    while True:
        F = rng.standard_normal((n_x, n_x))
        H = rng.standard_normal((n_y, n_x))
        if matops.is_observable(F, H):
            return F, H
