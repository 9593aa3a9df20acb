"""Interval vectors and the sign-split image of a box under a linear map."""

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInterval, ShapeError
from .matops import split_pm

CT_SLACK = 1e-7
DT_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class IntervalVector:
    """Box ``lo <= x <= hi`` in R^n."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float).reshape(-1)
        hi = np.asarray(self.hi, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ShapeError(f"bound lengths differ: {lo.shape[0]} vs {hi.shape[0]}")
        bad = np.flatnonzero(~(lo <= hi))
        if bad.size:
            i = int(bad[0])
            raise InvalidInterval(f"lo[{i}]={lo[i]!r} > hi[{i}]={hi[i]!r}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x):
        x = np.asarray(x, dtype=float)
        return cls(x, x.copy())

    def __len__(self):
        return self.lo.shape[0]

    @property
    def center(self):
        return 0.5 * (self.lo + self.hi)

    def __repr__(self):
        return f"IntervalVector(lo={self.lo.tolist()}, hi={self.hi.tolist()})"


def image_bounds(A, lo, hi):
    """Bounds of ``A a`` over ``lo <= a <= hi`` as a ``(lo, hi)`` pair of arrays.

    Unchecked variant of :func:`interval_image` used in inner loops.
    """
    sp = split_pm(A)
    return sp.pos @ lo - sp.neg @ hi, sp.pos @ hi - sp.neg @ lo


def interval_image(A, iv):
    """Tight interval enclosure of ``{A a : a in iv}``.

    ``lo' = A+ lo - A- hi`` and ``hi' = A+ hi - A- lo``; each bound is
    attained at a vertex of the input box.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    if A.shape[1] != len(iv):
        raise ShapeError(f"matrix has {A.shape[1]} columns but interval has length {len(iv)}")
    lo, hi = image_bounds(A, iv.lo, iv.hi)
    return IntervalVector(lo, hi)


def violation(lo, hi, x):
    """Largest amount by which ``x`` leaves ``[lo, hi]`` (0 when inside)."""
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return 0.0
    return float(np.max(np.maximum(np.maximum(lo - x, x - hi), 0.0)))


def contains(iv, x, slack=0.0):
    """True iff ``lo - s <= x <= hi + s`` with relative slack ``s = slack * (1 + |x|)``."""
    return contains_bounds(iv.lo, iv.hi, x, slack)


def contains_bounds(lo, hi, x, slack=0.0):
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.shape != np.shape(lo):
        raise ShapeError(f"point has length {x.shape[0]} but interval has length {np.shape(lo)[0]}")
    s = slack * (1.0 + np.abs(x))
    return bool(np.all(lo - s <= x) and np.all(x <= hi + s))


def width(iv):
    if len(iv) == 0:
        return 0.0
    return float(np.max(iv.hi - iv.lo))
