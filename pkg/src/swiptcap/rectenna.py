"""Nonlinear single-diode rectenna: EH metric, required threshold and delivered DC power.

The steady-state diode relation ties the output voltage ``v`` to the
time-averaged moment generating function of the received RF signal::

    (1 + v / (i_s R_L)) * exp(v / (eta V_T)) = E[I0(sqrt(2) B h_E X)]

with ``B = sqrt(R_ant) / (eta V_T)``.  Both sides are at least 1, and at the
tiny received powers of long links the interesting information sits in
``metric - 1``, so most routines here come with an ``*_excess`` twin that
carries ``metric - 1`` without cancellation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numerics import bessel_i0m1, bisect, log_bessel_i0, log_sum_exp


@dataclass(frozen=True)
class CircuitParams:
    """Rectenna constants, SI units throughout."""

    r_ant: float = 50.0
    i_s: float = 100e-6
    eta: float = 1.5
    v_t: float = 25.85e-3
    r_l: float = 10e3

    def __post_init__(self):
        for name in ("r_ant", "i_s", "eta", "v_t", "r_l"):
            if not getattr(self, name) > 0:
                raise ValueError(f"CircuitParams.{name} must be positive")
        if not 1.0 <= self.eta <= 2.0:
            warnings.warn(f"diode ideality factor {self.eta} outside the usual [1, 2] range")

    @property
    def b(self) -> float:
        """B = sqrt(R_ant) / (eta V_T), in 1/sqrt(W)."""
        return math.sqrt(self.r_ant) / (self.eta * self.v_t)

    @property
    def thermal_scale(self) -> float:
        return self.eta * self.v_t

    @property
    def saturation_voltage(self) -> float:
        return self.i_s * self.r_l


def log_e_req_from_power(c: CircuitParams, p_req: float) -> float:
    """ln E_req for a required load power ``p_req`` (W)."""
    if p_req < 0:
        raise ValueError("p_req must be nonnegative")
    v = math.sqrt(p_req * c.r_l)
    return math.log1p(v / c.saturation_voltage) + v / c.thermal_scale


def e_req_from_power(c: CircuitParams, p_req: float) -> float:
    """EH-metric threshold equivalent to delivering at least ``p_req`` watts.

    Raises ``OverflowError`` when the threshold is not representable; the
    logarithmic form is always available from :func:`log_e_req_from_power`.
    """
    if p_req < 0:
        raise ValueError("p_req must be nonnegative")
    v = math.sqrt(p_req * c.r_l)
    return (1.0 + math.sqrt(p_req) / (c.i_s * math.sqrt(c.r_l))) * math.exp(v / c.thermal_scale)


def e_req_excess_from_power(c: CircuitParams, p_req: float) -> float:
    """E_req - 1, accurate for tiny ``p_req``."""
    if p_req < 0:
        raise ValueError("p_req must be nonnegative")
    v = math.sqrt(p_req * c.r_l)
    t = v / c.thermal_scale
    if t > 700:
        return math.inf
    return math.expm1(t) + v / c.saturation_voltage * math.exp(t)


@dataclass(frozen=True)
class EhBudget:
    """Required DC power and its equivalent EH-metric threshold.

    ``a_r`` is the receiver peak-amplitude limit in volts (``None`` for no
    limit).
    """

    p_req: float
    e_req: float
    log_e_req: float
    e_req_excess: float
    a_r: Optional[float] = None

    def __post_init__(self):
        if self.p_req < 0:
            raise ValueError("p_req must be nonnegative")
        if self.e_req < 1.0:
            raise ValueError("e_req must be at least 1")
        if self.a_r is not None and not self.a_r > 0:
            raise ValueError("a_r must be positive when given")

    @classmethod
    def from_power(cls, c: CircuitParams, p_req: float, a_r: Optional[float] = None) -> "EhBudget":
        log_e = log_e_req_from_power(c, p_req)
        e = math.exp(log_e) if log_e < 709.0 else math.inf
        return cls(p_req, e, log_e, e_req_excess_from_power(c, p_req), a_r)

    @classmethod
    def from_metric(cls, c: CircuitParams, e_req: float, a_r: Optional[float] = None) -> "EhBudget":
        """Budget pinned to a metric threshold rather than a power."""
        if e_req < 1.0:
            raise ValueError("e_req must be at least 1")
        return cls(harvested_power(c, e_req), e_req, math.log(e_req), e_req - 1.0, a_r)

    @property
    def active(self) -> bool:
        """False when the threshold is trivially met (E_req = 1)."""
        return self.e_req_excess > 0.0


def eh_argument(c: CircuitParams, h_e: float, x):
    """sqrt(2) B h_E x, the Bessel argument for transmit amplitude ``x``."""
    return math.sqrt(2.0) * c.b * h_e * np.asarray(x, dtype=float)


def relative_eh_gain(c: CircuitParams, h_e: float, budget: EhBudget, x) -> np.ndarray:
    """(I0(sqrt(2) B h_E x) - E_req) / E_req, free of cancellation near E_req = 1."""
    z = eh_argument(c, h_e, np.atleast_1d(x))
    if budget.log_e_req < 0.5:
        return (bessel_i0m1(z) - budget.e_req_excess) / budget.e_req
    return np.expm1(log_bessel_i0(z) - budget.log_e_req)


def eh_metric(c: CircuitParams, h_e: float, dist) -> float:
    """E[I0(sqrt(2) B h_E X)] for a discrete input distribution."""
    logs = log_bessel_i0(eh_argument(c, h_e, dist.amplitudes))
    return math.exp(log_sum_exp(np.atleast_1d(logs), dist.masses))


def eh_metric_excess(c: CircuitParams, h_e: float, dist) -> float:
    """E[I0(.)] - 1, summed term by term to keep full relative precision.

    Returns ``inf`` once the metric itself overflows a double.
    """
    z = np.atleast_1d(eh_argument(c, h_e, dist.amplitudes))
    if np.max(np.abs(z)) > 700.0:
        log_m = log_sum_exp(log_bessel_i0(z), dist.masses)
        return math.expm1(log_m) if log_m < 709.0 else math.inf
    return float(np.dot(dist.masses, bessel_i0m1(z)))


def mgf_time_average_oracle(c: CircuitParams, h_e: float, x: float, samples: int = 8192) -> float:
    """Average of exp(sqrt(2) B h_E x cos(theta)) over one carrier period.

    Trapezoidal rule on a periodic integrand, i.e. the plain mean over
    ``samples`` equally spaced phases; it converges to I0 geometrically.
    """
    if samples < 64:
        raise ValueError("samples must be at least 64")
    theta = 2.0 * np.pi * np.arange(samples) / samples
    exponent = float(eh_argument(c, h_e, x)) * np.cos(theta)
    return math.exp(log_sum_exp(exponent) - math.log(samples))


def _output_voltage_from_excess(c: CircuitParams, excess: float) -> float:
    if excess < 0:
        raise ValueError("EH metric must be at least 1")
    if excess == 0.0:
        return 0.0
    s, t = c.saturation_voltage, c.thermal_scale
    if excess < 1.0:
        # (1 + v/s) e^{v/t} - 1 written without cancellation
        def f(v):
            return math.expm1(v / t) + v / s * math.exp(v / t) - excess

        # each term alone reaches `excess` at these voltages
        hi = min(t * math.log1p(excess), s * excess)
    else:
        log_m = math.log1p(excess) if math.isfinite(excess) else math.inf
        return _output_voltage_from_log(c, log_m)
    return bisect(f, 0.0, hi, tol=1e-15 * hi)


def _output_voltage_from_log(c: CircuitParams, log_metric: float) -> float:
    s, t = c.saturation_voltage, c.thermal_scale

    def f(v):
        return math.log1p(v / s) + v / t - log_metric

    hi = t * log_metric
    if log_metric < 700:
        hi = min(hi, s * math.expm1(log_metric))
    return bisect(f, 0.0, hi, tol=1e-15 * hi)


def output_voltage(c: CircuitParams, eh_metric_value: float) -> float:
    """DC output voltage solving the steady-state diode relation by bisection."""
    if eh_metric_value < 1.0:
        raise ValueError("EH metric must be at least 1")
    return _output_voltage_from_excess(c, eh_metric_value - 1.0)


def harvested_power(c: CircuitParams, eh_metric_value: float) -> float:
    """DC power (W) delivered to the load for a given EH metric value."""
    v = output_voltage(c, eh_metric_value)
    return v * v / c.r_l


def harvested_power_from_excess(c: CircuitParams, excess: float) -> float:
    """Same as :func:`harvested_power` but takes ``metric - 1``."""
    v = _output_voltage_from_excess(c, excess)
    return v * v / c.r_l


def harvested_power_from_log(c: CircuitParams, log_metric: float) -> float:
    """Same as :func:`harvested_power` but takes ``ln(metric)``; never overflows."""
    if log_metric < 0:
        raise ValueError("EH metric must be at least 1")
    if log_metric < 0.5:
        v = _output_voltage_from_excess(c, math.expm1(log_metric))
    else:
        v = _output_voltage_from_log(c, log_metric)
    return v * v / c.r_l


def max_feasible_metric_excess(c: CircuitParams, h_e: float, a: float, sigma_x2: float) -> float:
    """Largest E[I0(.)] - 1 reachable with E[X^2] <= sigma_x2 and |X| <= a.

    I0(sqrt(2) B h_E sqrt(w)) is convex and increasing in w = x^2, so the
    maximiser puts mass sigma_x2/a^2 on +-a and the rest at 0.
    """
    if not (a > 0 and sigma_x2 > 0):
        raise ValueError("a and sigma_x2 must be positive")
    peak = float(bessel_i0m1(eh_argument(c, h_e, a)))
    q = min(1.0, sigma_x2 / (a * a))
    return q * peak


def max_feasible_metric(c: CircuitParams, h_e: float, a: float, sigma_x2: float) -> float:
    """Feasibility ceiling of the EH metric under the average and peak limits."""
    return 1.0 + max_feasible_metric_excess(c, h_e, a, sigma_x2)
