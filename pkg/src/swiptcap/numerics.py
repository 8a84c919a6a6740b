"""Special functions, log-domain accumulation, quadrature grids and bracketing root finding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

# Power series below this magnitude, large-argument expansion above.  At 15 the
# two agree to ~1e-14 relative.
SERIES_CUTOFF = 15.0
# Largest |z| for which exp(|z|) (and thus I0) is finite in double precision.
OVERFLOW_LIMIT = 700.0


def _as_array(z):
    arr = np.asarray(z, dtype=float)
    return arr, arr.ndim == 0


def _series_terms(half_sq: np.ndarray, start: int = 0) -> np.ndarray:
    """Sum of (z/2)^{2m}/(m!)^2 for m >= start, given (z/2)^2.

    All terms are positive, so the sum carries no cancellation error.
    """
    term = np.ones_like(half_sq)
    for m in range(1, start + 1):
        term = term * half_sq / (m * m)
    total = term.copy()
    m = start
    while True:
        m += 1
        term = term * half_sq / (m * m)
        total += term
        if np.all(term <= 1e-17 * total):
            return total


def _asymptotic_sum(z: np.ndarray) -> np.ndarray:
    """Bracket of e^z / sqrt(2 pi z) in the large-argument expansion of I0."""
    total = np.ones_like(z)
    term = np.ones_like(z)
    live = np.ones(z.shape, dtype=bool)
    for k in range(1, 60):
        nxt = term * (2 * k - 1) ** 2 / (8.0 * k * z)
        # each element stops at its smallest term; the expansion diverges past it
        live &= nxt < term
        if not np.any(live):
            break
        term = np.where(live, nxt, term)
        total += np.where(live, nxt, 0.0)
        live &= term > 1e-17 * total
    return total


def bessel_i0(z):
    """Modified Bessel function of the first kind, order zero.

    Raises ``OverflowError`` for ``|z| > 700``; use :func:`log_bessel_i0`
    there.
    """
    arr, scalar = _as_array(z)
    a = np.abs(arr)
    if not np.all(np.isfinite(a)):
        raise ValueError("bessel_i0 requires finite arguments")
    if np.any(a > OVERFLOW_LIMIT):
        raise OverflowError("I0 overflows for |z| > 700; use log_bessel_i0")
    out = np.empty_like(a)
    small = a <= SERIES_CUTOFF
    if np.any(small):
        out[small] = _series_terms((a[small] / 2.0) ** 2)
    if np.any(~small):
        big = a[~small]
        out[~small] = np.exp(big) / np.sqrt(2.0 * np.pi * big) * _asymptotic_sum(big)
    return float(out) if scalar else out


def bessel_i0m1(z):
    """I0(z) - 1 without the cancellation that hits ``bessel_i0(z) - 1`` at small z."""
    arr, scalar = _as_array(z)
    a = np.abs(arr)
    out = np.empty_like(a)
    small = a <= 1.0
    if np.any(small):
        out[small] = _series_terms((a[small] / 2.0) ** 2, start=1)
    if np.any(~small):
        out[~small] = bessel_i0(a[~small]) - 1.0
    return float(out) if scalar else out


def log_bessel_i0(z):
    """ln I0(z), finite for every finite z."""
    arr, scalar = _as_array(z)
    a = np.abs(arr)
    if not np.all(np.isfinite(a)):
        raise ValueError("log_bessel_i0 requires finite arguments")
    out = np.empty_like(a)
    tiny = a <= 1.0
    if np.any(tiny):
        out[tiny] = np.log1p(bessel_i0m1(a[tiny]))
    mid = (~tiny) & (a <= SERIES_CUTOFF)
    if np.any(mid):
        out[mid] = np.log(_series_terms((a[mid] / 2.0) ** 2))
    big = a > SERIES_CUTOFF
    if np.any(big):
        b = a[big]
        out[big] = b - 0.5 * np.log(2.0 * np.pi * b) + np.log(_asymptotic_sum(b))
    return float(out) if scalar else out


def log_sum_exp(values, weights=None) -> float:
    """ln(sum_i w_i exp(v_i)) evaluated without overflow or underflow.

    >>> log_sum_exp([0.0, math.log(3.0)], [1.0, 1.0]) == math.log(4.0)
    True
    """
    v = np.asarray(values, dtype=float)
    w = np.ones_like(v) if weights is None else np.asarray(weights, dtype=float)
    if v.shape != w.shape or v.size == 0:
        raise ValueError("values and weights must be non-empty and the same length")
    if np.any(w < 0):
        raise ValueError("weights must be nonnegative")
    keep = w > 0
    if not np.any(keep):
        raise ValueError("at least one weight must be positive")
    v, w = v[keep], w[keep]
    shifted = v + np.log(w)
    top = float(np.max(shifted))
    if not math.isfinite(top):
        return top
    return top + math.log(float(np.sum(np.exp(shifted - top))))


def bisect(f: Callable[[float], float], lo: float, hi: float, tol: float, max_iter: int = 400) -> float:
    """Root of a sign-changing function on ``[lo, hi]`` by interval halving.

    Stops once the bracket is narrower than ``tol`` (absolute) or ``f`` hits
    exactly zero.  Raises ``ValueError`` when ``f(lo)`` and ``f(hi)`` share a
    sign.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    f_lo, f_hi = f(lo), f(hi)
    if f_lo == 0.0:
        return lo
    if f_hi == 0.0:
        return hi
    if (f_lo > 0) == (f_hi > 0):
        raise ValueError(f"no sign change on [{lo}, {hi}]: f(lo)={f_lo}, f(hi)={f_hi}")
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if hi - lo <= tol or mid in (lo, hi):
            return mid
        f_mid = f(mid)
        if f_mid == 0.0:
            return mid
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class QuadratureGrid:
    """Uniform trapezoidal rule on ``[lower, upper]`` with ``count`` nodes."""

    lower: float
    upper: float
    count: int

    def __post_init__(self):
        if not (self.lower < self.upper):
            raise ValueError("QuadratureGrid needs lower < upper")
        if self.count < 3:
            raise ValueError("QuadratureGrid needs at least 3 nodes")

    @classmethod
    def covering(cls, lo: float, hi: float, margin: float, step: float) -> "QuadratureGrid":
        """Smallest grid with spacing <= ``step`` over ``[lo - margin, hi + margin]``."""
        lower, upper = lo - margin, hi + margin
        count = max(3, int(math.ceil((upper - lower) / step)) + 1)
        return cls(lower, upper, count)

    @property
    def step(self) -> float:
        return (self.upper - self.lower) / (self.count - 1)

    @property
    def nodes(self) -> np.ndarray:
        return np.linspace(self.lower, self.upper, self.count)

    @property
    def weights(self) -> np.ndarray:
        w = np.full(self.count, self.step)
        w[0] = w[-1] = 0.5 * self.step
        return w

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, np.asarray(values, dtype=float)))
