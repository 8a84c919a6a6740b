"""Independent optimality certificates for solver output.

:func:`kkt_check` rebuilds the output density and information density from
scratch on a finer quadrature than the solver uses, and evaluates the
stationarity function

    Phi(x) = C - i(x; F) + lambda1 (x^2 - sigma_x^2) - lambda2 (I0(k x) - E_req) / E_req

on a probe grid at least four times denser than the solver's amplitude
grid.  An optimal input has Phi >= 0 everywhere and Phi = 0 on its
support.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import (
    marginal_information_density,
    mutual_information,
    normalized_means,
    output_log_density,
)
from .numerics import QuadratureGrid, bessel_i0m1, log_bessel_i0
from .rectenna import CircuitParams, harvested_power_from_excess, harvested_power_from_log, relative_eh_gain

CHECK_STEP = 0.01
CHECK_COVERAGE = 12.0
PROBE_DENSITY = 4


def _half_argument(c: CircuitParams, h_e: float, sigma_x2: float) -> float:
    return 0.5 * c.b**2 * h_e**2 * sigma_x2


def log_e_lim(c: CircuitParams, h_e: float, sigma_x2: float) -> float:
    """ln E[I0(.)] for a Gaussian input of power ``sigma_x2``: z/2 + ln I0(z/2)."""
    half = _half_argument(c, h_e, sigma_x2)
    return half + float(log_bessel_i0(half))


def e_lim(c: CircuitParams, h_e: float, sigma_x2: float) -> float:
    """EH metric of the Gaussian input, e^{z/2} I0(z/2) with z = B^2 h_E^2 sigma_x^2."""
    return math.exp(log_e_lim(c, h_e, sigma_x2))


def e_lim_excess(c: CircuitParams, h_e: float, sigma_x2: float) -> float:
    """e_lim - 1 without cancellation."""
    half = _half_argument(c, h_e, sigma_x2)
    if half > 700:
        return math.inf
    return math.expm1(half) + math.exp(half) * float(bessel_i0m1(half))


def p_lim(c: CircuitParams, h_e: float, sigma_x2: float) -> float:
    """Power harvested by the Gaussian input; above it the EH constraint binds."""
    ex = e_lim_excess(c, h_e, sigma_x2)
    if ex < 1.0:
        return harvested_power_from_excess(c, ex)
    return harvested_power_from_log(c, log_e_lim(c, h_e, sigma_x2))


@dataclass(frozen=True, eq=False)
class KktReport:
    max_violation: float                    # max over probes of max(0, -Phi), bits
    max_support_residual: float             # max |Phi| on the mass points, bits
    slackness: Tuple[float, float]          # lambda_j times constraint slack, bits
    capacity: float                         # I(F) recomputed on the check quadrature
    passed: bool
    probe: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    note: str = ""

    def summary(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        lines = [
            f"kkt certificate: {verdict}",
            f"  capacity (recomputed)   {self.capacity:.12f} bits",
            f"  max violation           {self.max_violation:.3e} bits",
            f"  max support residual    {self.max_support_residual:.3e} bits",
            f"  slackness (AP, EH)      {self.slackness[0]:.3e}, {self.slackness[1]:.3e}",
            f"  probe points            {self.probe.size}",
        ]
        if self.note:
            lines.append(f"  note: {self.note}")
        return "\n".join(lines)


def kkt_check(sol, spec, probe_grid: Optional[Sequence[float]] = None, tol: float = 1e-3) -> KktReport:
    """Certify a :class:`~swiptcap.solver.Solution` against its problem."""
    dist = sol.distribution
    h_i, s_n2 = spec.h_i, spec.channel.sigma_n2
    if probe_grid is None:
        span = spec.a if (math.isfinite(spec.a) and not sol.gaussian) else dist.max_amplitude()
        probe = np.linspace(-span, span, PROBE_DENSITY * (len(dist) - 1) + 1)
    else:
        probe = np.asarray(probe_grid, dtype=float)
    means = normalized_means(np.concatenate([probe, dist.amplitudes]), h_i, s_n2)
    grid = QuadratureGrid.covering(float(means.min()), float(means.max()), CHECK_COVERAGE, CHECK_STEP)
    dens = output_log_density(dist, h_i, s_n2, grid)
    cap = mutual_information(dist, dens, h_i, s_n2)

    lam1, lam2 = sol.multipliers.lambda1, sol.multipliers.lambda2
    ap_slack = dist.second_moment() - spec.sigma_x2
    eh_active = spec.budget.active
    gain_mean = (float(dist.masses @ relative_eh_gain(spec.circuit, spec.h_e, spec.budget, dist.amplitudes))
                 if eh_active else 0.0)

    if not (math.isfinite(lam1) and math.isfinite(lam2)):
        # feasible set is a single point: optimality is feasibility
        tight = abs(gain_mean) <= 1e-9 and ap_slack <= 1e-9 * spec.sigma_x2
        return KktReport(0.0, 0.0, (0.0, 0.0), cap, bool(tight), probe, np.zeros_like(probe),
                         note="EH demand equals the feasibility ceiling; multipliers unbounded")

    info = marginal_information_density(probe, dens, h_i, s_n2)
    phi = cap - info + lam1 * (probe**2 - spec.sigma_x2)
    if eh_active and lam2 != 0.0:
        phi = phi - lam2 * relative_eh_gain(spec.circuit, spec.h_e, spec.budget, probe)
    max_violation = float(max(0.0, -phi.min()))

    if sol.gaussian:
        support = probe
    else:
        support = np.array([amp for amp, _ in sol.mass_points])
    if support.size:
        s_info = marginal_information_density(support, dens, h_i, s_n2)
        s_phi = cap - s_info + lam1 * (support**2 - spec.sigma_x2)
        if eh_active and lam2 != 0.0:
            s_phi = s_phi - lam2 * relative_eh_gain(spec.circuit, spec.h_e, spec.budget, support)
        residual = float(np.max(np.abs(s_phi)))
    else:
        residual = 0.0
    slack = (abs(lam1 * ap_slack), abs(lam2 * gain_mean) if eh_active else 0.0)
    passed = max_violation <= tol and residual <= tol and max(slack) <= tol
    return KktReport(max_violation, residual, slack, cap, passed, probe, phi)


def support_refinement(spec, refinements: int = 2, tol=None) -> List:
    """Solutions on nested grids with 2^k (n - 1) + 1 points, k = 0..refinements."""
    from .solver import dual_solve

    sols = []
    for k in range(refinements + 1):
        n = (spec.grid_points - 1) * 2**k + 1
        sols.append(dual_solve(spec.replace(grid_points=n), tol))
    return sols


def support_count_stability(spec, refinements: int = 2, tol=None) -> List[int]:
    """Number of mass-point clusters at each successive grid refinement."""
    if refinements < 2:
        raise ValueError("support_count_stability needs at least 2 refinements")
    return [s.n_mass_points for s in support_refinement(spec, refinements, tol)]
