"""Capacity-achieving input under average-power, peak-amplitude and EH constraints.

The input is restricted to a fine symmetric amplitude grid, which turns the
problem into a finite-dimensional concave program over the probability
simplex with two linear moment constraints.  It is solved in two phases:

* a constrained Blahut-Arimoto warm-up.  Every step multiplies the masses
  by ``exp(s * i(x; F))`` and tilts them by ``exp(-lambda . cost(x))``, with
  the tilt fitted exactly so the new masses meet both moment constraints;
* a log-barrier Newton method that finishes the job.  Near the EH
  activation threshold the two constraints are almost collinear and the
  multiplicative iteration crawls, while Newton converges in a few dozen
  steps.

Every iterate is certified: for any ``lambda >= 0`` the quantity
``max_i (i(x_i; F) - lambda . cost_i)`` bounds the capacity from above, and
the best such ``lambda`` is found by a small linear program.  The reported
``dual_gap`` is that bound minus the achieved rate.

Constraint costs are handled internally in scaled form: the average-power
cost ``(x^2 - sigma_x^2) / sigma_x^2`` and the EH cost
``-(I0(k x) - E_req) / E_req``, each divided by its largest magnitude on the
grid.  Reported multipliers are in bits per physical unit: ``lambda1`` per
W of ``E[X^2] - sigma_x^2`` and ``lambda2`` per unit of the relative
shortfall ``(E_req - E[I0]) / E_req``.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .channel import (
    LOG2E,
    ChannelParams,
    InformationKernel,
    InputDistribution,
    normalized_means,
    shannon_capacity,
)
from .numerics import bessel_i0m1, log_bessel_i0
from .rectenna import (
    CircuitParams,
    EhBudget,
    eh_argument,
    eh_metric_excess,
    harvested_power_from_excess,
    harvested_power_from_log,
    relative_eh_gain,
)

log = logging.getLogger(__name__)

LN2 = math.log(2.0)
MASS_FLOOR = 1e-30
SUPPORT_THRESHOLD = 1e-6
POLISH_FACTOR = 1e-3
ZERO_MULTIPLIER = 1e-12
# most rate (bits) a sparser support may give up during pruning
PRUNE_RATE_LOSS = 1e-10


class SolverError(RuntimeError):
    """Base class for solver failures."""


class Infeasible(SolverError):
    """The constraint set is empty on the amplitude grid."""

    def __init__(self, message: str, max_feasible_metric: Optional[float] = None,
                 max_feasible_power: Optional[float] = None):
        super().__init__(message)
        self.max_feasible_metric = max_feasible_metric
        self.max_feasible_power = max_feasible_power


class NonConvergent(SolverError):
    """Iteration budget exhausted; ``best`` holds the last certified iterate."""

    def __init__(self, message: str, best: Optional["Solution"] = None):
        super().__init__(message)
        self.best = best


def effective_peak(a_t: Optional[float], a_r: Optional[float], h_e: float) -> float:
    """Binding amplitude limit min(A_T, A_R / (sqrt(2) h_E))."""
    limits = []
    if a_t is not None:
        limits.append(float(a_t))
    if a_r is not None:
        limits.append(float(a_r) / (math.sqrt(2.0) * h_e))
    if not limits:
        return math.inf
    return min(limits)


@dataclass(frozen=True)
class ProblemSpec:
    """One instance of the constrained capacity problem.

    ``a`` is the effective peak amplitude in volts (``inf`` is allowed only
    for the unbounded-amplitude solver).  ``grid_points`` must be odd so the
    grid contains zero.
    """

    a: float
    sigma_x2: float
    budget: EhBudget
    circuit: CircuitParams = field(default_factory=CircuitParams)
    channel: ChannelParams = field(default_factory=ChannelParams)
    grid_points: int = 201

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("peak amplitude must be positive")
        if not self.sigma_x2 > 0:
            raise ValueError("sigma_x2 must be positive")
        if self.grid_points < 3 or self.grid_points % 2 == 0:
            raise ValueError("grid_points must be odd and at least 3")

    @classmethod
    def build(cls, *, sigma_x2: float, p_req: float = 0.0, a_t: Optional[float] = None,
              a_r: Optional[float] = None, circuit: Optional[CircuitParams] = None,
              channel: Optional[ChannelParams] = None, grid_points: int = 201) -> "ProblemSpec":
        """Assemble a problem from transmit/receive limits and a power demand."""
        circuit = circuit or CircuitParams()
        channel = channel or ChannelParams()
        a = effective_peak(a_t, a_r, channel.h_e)
        budget = EhBudget.from_power(circuit, p_req, a_r)
        return cls(a, sigma_x2, budget, circuit, channel, grid_points)

    def replace(self, **changes) -> "ProblemSpec":
        return dataclasses.replace(self, **changes)

    def with_power(self, p_req: float) -> "ProblemSpec":
        return self.replace(budget=EhBudget.from_power(self.circuit, p_req, self.budget.a_r))

    @property
    def e_req(self) -> float:
        return self.budget.e_req

    @property
    def h_i(self) -> float:
        return self.channel.h_i

    @property
    def h_e(self) -> float:
        return self.channel.h_e

    def amplitude_grid(self, points: Optional[int] = None) -> np.ndarray:
        if not math.isfinite(self.a):
            raise ValueError("unbounded peak amplitude has no finite grid")
        n = points or self.grid_points
        x = np.linspace(-self.a, self.a, n)
        x[n // 2] = 0.0
        return x

    def eh_gain(self, x) -> np.ndarray:
        """Relative EH surplus (I0(k x) - E_req) / E_req at each amplitude."""
        return relative_eh_gain(self.circuit, self.h_e, self.budget, x)

    def shannon_rate(self) -> float:
        return shannon_capacity(self.sigma_x2, self.h_i, self.channel.sigma_n2)


@dataclass(frozen=True)
class Tolerances:
    gap: float = 1e-5            # certified duality gap, bits
    constraint: float = 1e-7     # relative constraint violation
    slack: float = 1e-6          # complementary slackness, bits
    max_inner: int = 20000       # Blahut-Arimoto iterations
    max_dual: int = 500          # Newton steps per multiplier fit


@dataclass(frozen=True)
class Multipliers:
    """Lagrange multipliers in bits: ``lambda1`` per W, ``lambda2`` per relative EH shortfall."""

    lambda1: float = 0.0
    lambda2: float = 0.0

    def as_tuple(self) -> Tuple[float, float]:
        return (self.lambda1, self.lambda2)


@dataclass(frozen=True, eq=False)
class Solution:
    distribution: InputDistribution
    rate: float
    multipliers: Multipliers
    achieved_ap: float
    achieved_metric: float
    achieved_metric_excess: float
    p_out: float
    kkt_residual: float
    dual_gap: float
    iterations: int
    mass_points: List[Tuple[float, float]]
    gaussian: bool = False
    ap_slackness: float = 0.0
    eh_slackness: float = 0.0

    @property
    def n_mass_points(self) -> int:
        return len(self.mass_points)


# --------------------------------------------------------------------------
# multiplier fit: min_{lam >= 0} log sum_i exp(z_i - a_i . lam)


def _tilt(z: np.ndarray, cost: np.ndarray, lam: np.ndarray):
    y = z - cost @ lam
    top = y.max()
    e = np.exp(y - top)
    total = e.sum()
    return e / total, top + math.log(total)


def _root_1d(z, col, start, tol, max_iter):
    """lam > 0 with E_q(lam)[col] = 0; the mean is decreasing in lam."""
    def mean_var(lam):
        q, _ = _tilt(z, col[:, None], np.array([lam]))
        m = float(q @ col)
        return m, float(q @ (col - m) ** 2), q

    lo, hi = 0.0, max(start, 1.0)
    m_hi, _, _ = mean_var(hi)
    grow = 0
    while m_hi > 0:
        lo, hi = hi, 4.0 * hi
        m_hi, _, _ = mean_var(hi)
        grow += 1
        if grow > 200:
            raise SolverError("multiplier fit diverged; constraint cannot be met on the grid")
    lam = min(max(start, lo), hi) if start > 0 else 0.5 * (lo + hi)
    for _ in range(max_iter):
        m, v, q = mean_var(lam)
        if abs(m) <= tol:
            return lam, q
        if m > 0:
            lo = lam
        else:
            hi = lam
        nxt = lam + m / v if v > 0 else 0.5 * (lo + hi)
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        if hi - lo <= 1e-15 * hi:
            return lam, q
        lam = nxt
    return lam, q


def _newton_2d(z, cost, start, tol, max_iter):
    """Both constraints active: solve E_q[cost] = 0 by damped Newton.

    With both constraints binding they are equalities, so any invertible
    recombination of the columns describes the same q.  The average-power
    and EH costs are nearly collinear at small received power, so the
    columns are whitened first; Newton then runs on a well-conditioned
    problem and the multipliers are mapped back.
    """
    lam = np.maximum(start, 0.0)
    q, _ = _tilt(z, cost, lam)
    g = q @ cost
    centred = cost - g
    evals, evecs = np.linalg.eigh((centred * q[:, None]).T @ centred)
    if evals.min() <= 1e-30 * max(evals.max(), 1e-300):
        return lam, q, False
    transform = evecs / np.sqrt(evals)
    white = cost @ transform
    mu = np.linalg.solve(transform, lam)
    q, phi = _tilt(z, white, mu)
    for _ in range(max_iter):
        g = q @ white
        if np.all(np.abs(g) <= tol):
            lam = transform @ mu
            return lam, q, bool(np.all(lam >= 0))
        centred = white - g
        hess = (centred * q[:, None]).T @ centred
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError:
            step = g
        if not np.all(np.isfinite(step)):
            break
        t = 1.0
        while True:
            cand = mu + t * step
            with np.errstate(invalid="ignore", over="ignore"):
                q_c, phi_c = _tilt(z, white, cand)
            if (math.isfinite(phi_c) and phi_c <= phi - 1e-4 * t * float(g @ step)) or t < 1e-10:
                break
            t *= 0.5
        if t < 1e-10:
            break
        mu, q, phi = cand, q_c, phi_c
    # rounding in z - white @ mu limits how far E_q[cost] can be driven down
    lam = transform @ mu
    return lam, q, bool(np.all(lam >= 0) and np.all(np.abs(q @ cost) <= 1e-9))


def _fit_multipliers(z: np.ndarray, cost: np.ndarray, start: np.ndarray, tol: float, max_iter: int):
    """Exact projection step: returns (lam, q) with q meeting E_q[cost] <= 0.

    Tries the active-set patterns in order; the dual is convex so the first
    consistent pattern is the answer.
    """
    m = cost.shape[1]
    zero = np.zeros(m)
    q, _ = _tilt(z, cost, zero)
    g = q @ cost
    if np.all(g <= tol):
        return zero, q
    singles = []
    for j in range(m):
        if g[j] <= tol:
            continue
        lam_j, q_j = _root_1d(z, cost[:, j], start[j], tol, max_iter)
        lam = zero.copy()
        lam[j] = lam_j
        singles.append(lam)
        g_j = q_j @ cost
        if all(g_j[k] <= tol for k in range(m) if k != j):
            return lam, q_j
    if m == 1:
        raise SolverError("single-constraint multiplier fit failed")
    guess = start if np.all(start > 0) else np.sum(singles, axis=0) if singles else np.ones(m)
    lam, q, ok = _newton_2d(z, cost, guess, tol, max_iter)
    if not ok:
        from scipy.optimize import minimize

        def fun(l):
            qq, ph = _tilt(z, cost, l)
            return ph, -(qq @ cost)

        res = minimize(fun, lam, jac=True, method="L-BFGS-B", bounds=[(0, None)] * m,
                       options={"ftol": 1e-300, "gtol": tol * 1e-2, "maxiter": 10 * max_iter})
        lam = np.maximum(res.x, 0.0)
        q, _ = _tilt(z, cost, lam)
    return lam, q


# --------------------------------------------------------------------------
# core iteration


@dataclass
class _Problem:
    """Grid-level data shared by the iterations."""

    amplitudes: np.ndarray
    kernel: InformationKernel
    cost: np.ndarray          # n x m scaled constraint costs
    scales: np.ndarray        # divisor applied to each raw column
    eh_active: bool


def _build_problem(spec: ProblemSpec, x: np.ndarray, kernel: Optional[InformationKernel] = None) -> _Problem:
    ap = (x * x - spec.sigma_x2) / spec.sigma_x2
    cols = [ap]
    if spec.budget.active:
        cols.append(-spec.eh_gain(x))
    raw = np.column_stack(cols)
    scales = np.max(np.abs(raw), axis=0)
    scales[scales == 0] = 1.0
    if kernel is None:
        kernel = InformationKernel(normalized_means(x, spec.h_i, spec.channel.sigma_n2))
    return _Problem(x, kernel, raw / scales, scales, spec.budget.active)


def _to_physical(spec: ProblemSpec, prob: _Problem, lam: np.ndarray) -> Multipliers:
    # multipliers that move the scaled bound by less than this are reported as exact zeros
    lam = np.where(np.abs(lam) <= ZERO_MULTIPLIER, 0.0, lam)
    l1 = lam[0] / prob.scales[0] / spec.sigma_x2 * LOG2E
    l2 = lam[1] / prob.scales[1] * LOG2E if prob.eh_active else 0.0
    return Multipliers(float(l1), float(l2))


def _to_internal(spec: ProblemSpec, prob: _Problem, mult: Multipliers) -> np.ndarray:
    lam = [mult.lambda1 * LN2 * spec.sigma_x2 * prob.scales[0]]
    if prob.eh_active:
        lam.append(mult.lambda2 * LN2 * prob.scales[1])
    return np.array(lam)


def _floor(q: np.ndarray) -> np.ndarray:
    q = np.maximum(q, MASS_FLOOR)
    return q / q.sum()


def _constrained_ba(prob: _Problem, p0: np.ndarray, target: float, max_iter: int, max_dual: int,
                    growth: float = 1.25, max_step: float = 50.0):
    """Multiplicative iteration with exact constraint projection.

    Stops once the certified gap drops to ``target`` bits.  Returns
    ``(p, lam_internal, gap_nats, iterations, converged)`` for the best
    certified iterate.
    """
    cost = prob.cost
    m = cost.shape[1]
    fit_tol = 1e-13
    p = _floor(p0)
    feasible = bool(np.all(p @ cost <= fit_tol))
    dens = prob.kernel.information_density(p)
    info = float(p @ dens)
    lam = np.zeros(m)
    step = 1.0
    best = (p, lam, math.inf)
    for it in range(1, max_iter + 1):
        z = np.log(p) + step * dens
        lam_fit, q = _fit_multipliers(z, cost, lam * step, fit_tol, max_dual)
        lam_b = lam_fit / step
        if feasible:
            upper = float(np.max(dens - cost @ lam_b))
            gap = upper - info
            if gap < best[2]:
                best = (p, lam_b, gap)
            if gap * LOG2E <= target:
                return p, lam_b, gap, it, True
        q = _floor(q)
        dens_q = prob.kernel.information_density(q)
        info_q = float(q @ dens_q)
        if feasible and step > 1.0 and info_q < info:
            step = 1.0
            continue
        p, dens, info, lam = q, dens_q, info_q, lam_b
        feasible = True
        step = min(step * growth, max_step)
    p, lam_b, gap = best
    return p, lam_b, gap, max_iter, False


def tightest_bound(dens: np.ndarray, cost: np.ndarray, lam0: np.ndarray, p: np.ndarray) -> Tuple[float, np.ndarray]:
    """min over lam >= 0 of max_i (dens_i - cost_i . lam), as a small LP.

    Any ``lam >= 0`` gives an upper bound on the capacity; this picks the
    best one for the current iterate.  The search runs in coordinates
    whitened under ``p`` around ``lam0``, since the raw multipliers can be
    large and nearly cancel.
    """
    from scipy.optimize import linprog

    n, m = cost.shape
    centred = cost - p @ cost
    evals, evecs = np.linalg.eigh((centred * p[:, None]).T @ centred)
    if evals.min() <= 1e-300:
        transform = np.eye(m)
    else:
        transform = evecs / np.sqrt(evals)
    base = dens - cost @ lam0
    white = cost @ transform
    a_ub = np.vstack([np.hstack([-white, -np.ones((n, 1))]),
                      np.hstack([-transform, np.zeros((m, 1))])])
    b_ub = np.concatenate([-base, lam0])
    res = linprog(np.r_[np.zeros(m), 1.0], A_ub=a_ub, b_ub=b_ub, bounds=[(None, None)] * (m + 1),
                  method="highs", options={"primal_feasibility_tolerance": 1e-10,
                                           "dual_feasibility_tolerance": 1e-10})
    candidates = [np.maximum(lam0, 0.0)]
    if res.status == 0:
        candidates.append(np.maximum(lam0 + transform @ res.x[:m], 0.0))
    bounds = [float(np.max(dens - cost @ lam)) for lam in candidates]
    k = int(np.argmin(bounds))
    return bounds[k], candidates[k]


def _restore_feasibility(p: np.ndarray, cost: np.ndarray) -> Optional[np.ndarray]:
    """Renormalise ``p`` and undo rounding drift across the constraints.

    Newton iterates satisfy the linear constraints only to rounding; the
    certificate needs an exactly feasible point, so a drifted iterate is
    tilted onto a slightly tightened constraint set.
    """
    q = p / p.sum()
    if np.all(q @ cost <= 0.0):
        return q
    try:
        with np.errstate(divide="ignore"):  # log 0 = -inf is a zero weight
            _, q = _fit_multipliers(np.log(q), cost + 1e-13, np.zeros(cost.shape[1]), 1e-15, 200)
    except SolverError:
        return None
    q = q / q.sum()
    return q if np.all(q @ cost <= 0.0) else None


def _restrict(prob: _Problem, keep: np.ndarray) -> _Problem:
    """The same problem on a subset of the amplitude grid."""
    kernel = InformationKernel(prob.kernel.means[keep])
    return _Problem(prob.amplitudes[keep], kernel, prob.cost[keep], prob.scales, prob.eh_active)


def _prune(prob: _Problem, p: np.ndarray, lam: np.ndarray, target: float,
           margins: Sequence[float] = (1e-6, 1e-5, 1e-4, 1e-3)):
    """Remove the mass an interior-point iterate leaves off the support.

    The first candidates are the local maxima of ``p`` widened by 0, 1 and
    2 grid neighbours: on fine grids the objective is nearly flat along
    directions that smear an atom over its neighbours, so an iterate can be
    optimal to the target while diffuse, and a true atom between two nodes
    needs both.  Then points whose stationarity residual exceeds a margin
    (nats) are dropped, smallest margin first.  Each candidate is
    re-solved on its points and certified on the full grid; the first that
    meets ``target`` (bits) without losing more than ``PRUNE_RATE_LOSS``
    bits of rate wins.  Returns ``(p, lam, gap)`` or None.
    """
    dens = prob.kernel.information_density(p)
    info = float(p @ dens)
    phi = info - dens + prob.cost @ lam
    padded = np.concatenate([[-np.inf], p, [-np.inf]])
    peaks = (p >= padded[:-2]) & (p >= padded[2:]) & (p >= SUPPORT_THRESHOLD)
    tried = set()
    widened = [np.convolve(peaks, np.ones(2 * w + 1), mode="same") > 0 for w in (0, 1, 2)]
    for keep in widened + [phi <= margin for margin in margins]:
        key = keep.tobytes()
        if keep.all() or keep.sum() < 1 or key in tried:
            continue
        tried.add(key)
        sub_prob = _restrict(prob, keep)
        start = _restore_feasibility(p[keep], sub_prob.cost)
        if start is None:
            continue
        sub_dens = sub_prob.kernel.information_density(start)
        sub_gap = float(np.max(sub_dens - sub_prob.cost @ lam)) - float(start @ sub_dens)
        polish = min(POLISH_FACTOR * target, 0.1 * PRUNE_RATE_LOSS)
        sub, _, _, _, _ = _interior_point(sub_prob, start, max(sub_gap, 1e-12), polish)
        q = np.zeros_like(p)
        q[keep] = sub
        q_dens = prob.kernel.information_density(q)
        upper, q_lam = tightest_bound(q_dens, prob.cost, lam, q)
        q_info = float(q @ q_dens)
        gap = upper - q_info
        # a sparser support must not cost rate: sweeps compare rates at 1e-9 bits
        if gap <= target / LOG2E and q_info >= info - PRUNE_RATE_LOSS / LOG2E:
            return q, q_lam, gap
    return None


def _prune_repeatedly(prob: _Problem, p: np.ndarray, lam: np.ndarray, gap: float, target: float,
                      passes: int = 3):
    """Prune until the support stops shrinking; a cleaner iterate exposes sharper peaks."""
    size = int(np.sum(p >= SUPPORT_THRESHOLD))
    for _ in range(passes):
        pruned = _prune(prob, p, lam, target)
        if pruned is None:
            break
        p, lam, gap = pruned
        new_size = int(np.sum(p >= SUPPORT_THRESHOLD))
        if new_size >= size:
            break
        size = new_size
    return p, lam, gap


def _barrier_value(kern, p, slack, t):
    if np.any(p <= 0) or np.any(slack <= 0):
        return math.inf, None, None
    dens = kern.information_density(p)
    info = float(p @ dens)
    return -t * info - float(np.sum(np.log(p))) - float(np.sum(np.log(slack))), dens, info


def _interior_point(prob: _Problem, p_start: np.ndarray, gap_start: float, target: float,
                    max_newton: int = 300):
    """Log-barrier Newton method on the full grid.

    Minimises ``-t I(p) - sum log p_i - sum_j log s_j`` subject to
    ``sum p = 1`` and ``cost_j . p + s_j = 0`` for a growing ``t``; a centred
    point is within ``(n + m) / t`` nats of the optimum.  The slacks are
    carried as separate variables and the Newton system is solved in the
    scaled augmented form, which keeps it well conditioned while the
    slacks shrink towards zero.  Each centred iterate is certified with
    the tightest multipliers.  Returns the same tuple as
    :func:`_constrained_ba`.
    """
    cost = prob.cost
    kern = prob.kernel
    n, m = cost.shape
    target_nats = target / LOG2E
    # strictly feasible start: re-fit the warm start against tightened constraints
    p = None
    for shift in (1e-6, 1e-8, 1e-10, 1e-12):
        try:
            with np.errstate(divide="ignore"):
                _, q = _fit_multipliers(np.log(p_start), cost + shift, np.zeros(m), 1e-14, 500)
        except SolverError:
            continue
        q = np.maximum(q, 1e-300)
        q /= q.sum()
        if np.all(q @ cost < 0):
            p = q
            break
    if p is None:
        return p_start, np.zeros(m), math.inf, 0, False
    # lift masses off the floor: mix in the uniform law while keeping half of each slack
    slack = -(p @ cost)
    excess = np.maximum(cost.mean(axis=0), 0.0)
    eps = min(1e-2, float(np.min(0.5 * slack / (slack + excess))))
    p = (1.0 - eps) * p + eps / n
    slack = -(p @ cost)
    size = n + 2 * m + 1
    iv, iw, inu, iy = slice(0, n), slice(n, n + m), n + m, slice(n + m + 1, size)
    t = (n + m) / max(gap_start, target_nats)
    best = (p, np.zeros(m), math.inf)
    steps = 0
    while steps < max_newton:
        value, dens, info = _barrier_value(kern, p, slack, t)
        last = math.inf
        while steps < max_newton:
            steps += 1
            kkt = np.zeros((size, size))
            kkt[iv, iv] = -t * kern.information_hessian(p, np.arange(n)) * np.outer(p, p)
            kkt[np.arange(n), np.arange(n)] += 1.0
            kkt[iv, inu] = kkt[inu, iv] = p
            kkt[iv, iy] = cost * p[:, None]
            kkt[iy, iv] = kkt[iv, iy].T
            kkt[iw, iw] = np.eye(m)
            kkt[iw, iy] = kkt[iy, iw] = np.diag(slack)
            rhs = np.concatenate([p * (t * dens) + 1.0, np.ones(m), [1.0 - p.sum()], -(p @ cost + slack)])
            sol = np.linalg.solve(kkt, rhs)
            v, w = sol[iv], sol[iw]
            decrement = float(rhs[iv] @ v + rhs[iw] @ w)
            # near-centred, or stuck at the rounding floor of t * I
            if decrement <= 0.25 or (decrement > 0.9 * last and decrement <= n):
                break
            last = decrement
            shrink = min(float(np.min(v)), float(np.min(w)))
            alpha = 1.0 if shrink >= 0 else min(1.0, 0.99 / -shrink)
            slope = -decrement
            while alpha > 1e-14:
                trial_p = p * (1.0 + alpha * v)
                trial_s = slack * (1.0 + alpha * w)
                t_val, t_dens, t_info = _barrier_value(kern, trial_p, trial_s, t)
                if t_val <= value + 0.25 * alpha * slope:
                    break
                alpha *= 0.5
            else:
                break
            p, slack, value, dens, info = trial_p, trial_s, t_val, t_dens, t_info
        lam0 = 1.0 / (t * slack)
        cand = _restore_feasibility(p, cost)
        if cand is not None:
            c_dens = kern.information_density(cand)
            upper, lam = tightest_bound(c_dens, cost, lam0, cand)
            gap = upper - float(cand @ c_dens)
            if gap < best[2]:
                best = (cand, lam, gap)
            if gap <= target_nats:
                return cand, lam, gap, steps, True
        if (n + m) / t < 1e-3 * target_nats:
            break
        t *= 8.0
    p, lam, gap = best
    return p, lam, gap, steps, False


def _make_solution(spec: ProblemSpec, prob: _Problem, p: np.ndarray, lam: np.ndarray,
                   gap_nats: float, iterations: int) -> Solution:
    x = prob.amplitudes
    dist = InputDistribution(x, p)
    dens = prob.kernel.information_density(p)
    rate = float(p @ dens) * LOG2E
    mult = _to_physical(spec, prob, lam)
    ap = dist.second_moment()
    excess = eh_metric_excess(spec.circuit, spec.h_e, dist)
    if excess < 1.0:
        metric = 1.0 + excess
        p_out = harvested_power_from_excess(spec.circuit, excess)
    else:
        log_terms = log_bessel_i0(eh_argument(spec.circuit, spec.h_e, x))
        top = float(np.max(log_terms))
        log_metric = top + math.log(float(p @ np.exp(log_terms - top)))
        metric = math.exp(log_metric) if log_metric < 709 else math.inf
        p_out = harvested_power_from_log(spec.circuit, log_metric)
    # Phi_i = I - i(x_i) + lam . cost_i, in bits; zero on the support, >= 0 elsewhere
    phi = (rate / LOG2E - dens + prob.cost @ lam) * LOG2E
    support = p >= SUPPORT_THRESHOLD
    kkt = max(float(np.max(np.abs(phi[support]))), float(max(0.0, -phi.min())))
    g1 = ap - spec.sigma_x2
    g2 = -float(p @ spec.eh_gain(x)) if prob.eh_active else 0.0
    return Solution(
        distribution=dist,
        rate=rate,
        multipliers=mult,
        achieved_ap=ap,
        achieved_metric=metric,
        achieved_metric_excess=excess,
        p_out=p_out,
        kkt_residual=kkt,
        dual_gap=max(gap_nats, 0.0) * LOG2E,
        iterations=iterations,
        mass_points=extract_mass_points(dist),
        ap_slackness=abs(mult.lambda1 * g1),
        eh_slackness=abs(mult.lambda2 * g2),
    )


def _symmetrize(prob: _Problem, p: np.ndarray, lam: np.ndarray, gap: float):
    """Average ``p`` with its mirror image on a symmetric grid.

    The costs are even in x, so the mirror image is feasible and equally
    good; by concavity the average is at least as good and the optimum is
    symmetric.  Both the old and the new bound are valid upper bounds on
    the capacity, so the smaller one is kept.
    """
    x = prob.amplitudes
    if not np.allclose(x, -x[::-1], rtol=0.0, atol=1e-12 * np.max(np.abs(x))):
        return p, lam, gap
    info_p = float(p @ prob.kernel.information_density(p))
    q = 0.5 * (p + p[::-1])
    dens = prob.kernel.information_density(q)
    info_q = float(q @ dens)
    upper, q_lam = tightest_bound(dens, prob.cost, lam, q)
    if info_p + gap < upper:
        upper, q_lam = info_p + gap, lam
    return q, q_lam, upper - info_q


def _solve_grid(prob: _Problem, p0: np.ndarray, tol: Tolerances):
    """Multiplicative warm-up, barrier Newton finish, plain iteration if that stalls."""
    warm = min(tol.max_inner, 50)
    p, lam, gap, its, ok = _constrained_ba(prob, p0, max(tol.gap, 1e-2), warm, tol.max_dual)
    # complementary slackness is only as good as the gap, so always polish
    if gap * LOG2E <= POLISH_FACTOR * tol.gap:
        p, lam, gap = _prune_repeatedly(prob, p, lam, gap, 0.5 * min(tol.gap, tol.slack))
        return p, lam, gap, its, True
    used = its
    # overshoot the target so the barrier residue on off-support points is small
    p2, lam2, gap2, its2, _ = _interior_point(prob, p, gap, POLISH_FACTOR * tol.gap)
    used += its2
    if gap2 < gap:
        p, lam, gap = p2, lam2, gap2
    if gap * LOG2E <= tol.gap:
        p, lam, gap = _prune_repeatedly(prob, p, lam, gap, 0.5 * min(tol.gap, tol.slack))
        return p, lam, gap, used, True
    while used < tol.max_inner:
        budget = min(tol.max_inner - used, 2000)
        p3, lam3, gap3, its3, ok = _constrained_ba(prob, p, tol.gap, budget, tol.max_dual)
        used += its3
        if gap3 < gap or ok:
            p, lam, gap = p3, lam3, gap3
        if ok:
            return p, lam, gap, used, True
    return p, lam, gap, used, False


def grid_ceiling(spec: ProblemSpec, x: np.ndarray) -> Tuple[float, float, float]:
    """Largest EH metric reachable on grid ``x`` under the average-power limit.

    Returns ``(metric_excess, log_metric, theta)`` where the maximiser puts
    ``theta`` on the largest |x| and the rest on the smallest.
    """
    w = x * x
    lo_i, hi_i = int(np.argmin(w)), int(np.argmax(w))
    z = eh_argument(spec.circuit, spec.h_e, x[[lo_i, hi_i]])
    if w[hi_i] <= spec.sigma_x2:
        theta = 1.0
    elif w[lo_i] > spec.sigma_x2:
        return -math.inf, -math.inf, math.nan
    else:
        theta = (spec.sigma_x2 - w[lo_i]) / (w[hi_i] - w[lo_i])
    ex = bessel_i0m1(z)
    excess = float((1 - theta) * ex[0] + theta * ex[1])
    lg = log_bessel_i0(z)
    top = max(lg)
    log_metric = float(top + math.log((1 - theta) * math.exp(lg[0] - top) + theta * math.exp(lg[1] - top)))
    return excess, log_metric, theta


def _ceiling_solution(spec: ProblemSpec, prob: _Problem, theta: float) -> Solution:
    """Degenerate case E_req equal to the grid ceiling: the feasible set is one point."""
    x = prob.amplitudes
    w = x * x
    p = np.zeros_like(x)
    lo_i = int(np.argmin(w))
    hi = np.flatnonzero(w == w.max())
    p[lo_i] += 1 - theta
    p[hi] += theta / hi.size
    sol = _make_solution(spec, prob, p, np.zeros(prob.cost.shape[1]), 0.0, 0)
    inf = Multipliers(math.inf, math.inf)
    return dataclasses.replace(sol, multipliers=inf, kkt_residual=0.0, dual_gap=0.0,
                               ap_slackness=0.0, eh_slackness=0.0)


def _check_feasible(spec: ProblemSpec, x: np.ndarray) -> Optional[float]:
    """Raises Infeasible; returns theta when E_req sits exactly on the ceiling."""
    w = x * x
    if w.min() > spec.sigma_x2:
        raise Infeasible(
            f"no grid amplitude satisfies E[X^2] <= {spec.sigma_x2:g} (smallest |x|^2 = {w.min():g})")
    if not spec.budget.active:
        return None
    excess, log_metric, theta = grid_ceiling(spec, x)
    b = spec.budget
    if b.log_e_req < 0.5:
        over = b.e_req_excess > excess * (1 + 1e-12)
        at = b.e_req_excess >= excess * (1 - 1e-10)
    else:
        over = b.log_e_req > log_metric + 1e-12
        at = b.log_e_req >= log_metric - 1e-10 * log_metric
    if over:
        ceiling = 1.0 + excess if excess < 1 else math.exp(min(log_metric, 709.0))
        p_max = (harvested_power_from_excess(spec.circuit, excess) if excess < 1
                 else harvested_power_from_log(spec.circuit, log_metric))
        raise Infeasible(
            f"required EH metric {b.e_req:.12g} exceeds max_feasible_metric {ceiling:.12g} "
            f"(max deliverable power {p_max:.6g} W)",
            max_feasible_metric=ceiling, max_feasible_power=p_max)
    return theta if at else None


def dual_solve(spec: ProblemSpec, tol: Optional[Tolerances] = None,
               init: Optional[InputDistribution] = None,
               amplitudes: Optional[Sequence[float]] = None) -> Solution:
    """Capacity-achieving distribution on the amplitude grid.

    ``init`` (a warm start) must live on the same grid; it is mixed with a
    sliver of the uniform distribution so no grid point starts at zero.
    Raises :class:`Infeasible` or :class:`NonConvergent`.
    """
    tol = tol or Tolerances()
    x = spec.amplitude_grid() if amplitudes is None else np.asarray(amplitudes, dtype=float)
    if np.any(np.abs(x) > spec.a * (1 + 1e-12)):
        raise ValueError("amplitudes exceed the peak limit")
    theta = _check_feasible(spec, x)
    prob = _build_problem(spec, x)
    if theta is not None:
        return _ceiling_solution(spec, prob, theta)
    p0 = np.full(x.size, 1.0 / x.size)
    if init is not None:
        if init.amplitudes.shape != x.shape or not np.allclose(init.amplitudes, x, rtol=0, atol=1e-12 * spec.a):
            raise ValueError("warm start must be on the solver's amplitude grid")
        p0 = (1 - 1e-6) * init.masses + 1e-6 * p0
    p, lam, gap, its, ok = _solve_grid(prob, p0, tol)
    if ok:
        p, lam, gap = _symmetrize(prob, p, lam, gap)
    sol = _make_solution(spec, prob, p, lam, gap, its)
    if not ok:
        raise NonConvergent(f"duality gap {sol.dual_gap:.3g} bits after {its} iterations", best=sol)
    return sol


def _penalized_newton(kern: InformationKernel, penalty: np.ndarray, p: np.ndarray, target: float,
                      max_newton: int = 300) -> Tuple[np.ndarray, float]:
    """Barrier Newton for max I(p) - penalty . p on the simplex.

    Same scaled system as :func:`_interior_point` without constraint rows.
    Returns the best iterate and its bound gap (nats).
    """
    n = p.size
    p = 0.99 * p + 0.01 / n
    dens = kern.information_density(p)
    gap = float(np.max(dens - penalty) - p @ (dens - penalty))
    best = (p, gap)
    t = n / max(gap, target)
    steps = 0

    def barrier(q):
        if np.any(q <= 0):
            return math.inf, None
        d = kern.information_density(q)
        return -t * float(q @ (d - penalty)) - float(np.sum(np.log(q))), d

    while steps < max_newton:
        value, dens = barrier(p)
        last = math.inf
        while steps < max_newton:
            steps += 1
            kkt = np.zeros((n + 1, n + 1))
            kkt[:n, :n] = -t * kern.information_hessian(p, np.arange(n)) * np.outer(p, p)
            kkt[np.arange(n), np.arange(n)] += 1.0
            kkt[:n, n] = kkt[n, :n] = p
            rhs = np.concatenate([p * (t * (dens - penalty)) + 1.0, [1.0 - p.sum()]])
            v = np.linalg.solve(kkt, rhs)[:n]
            decrement = float(rhs[:n] @ v)
            if decrement <= 0.25 or (decrement > 0.9 * last and decrement <= n):
                break
            last = decrement
            alpha = 1.0 if v.min() >= 0 else min(1.0, 0.99 / -float(v.min()))
            while alpha > 1e-14:
                trial = p * (1.0 + alpha * v)
                t_val, t_dens = barrier(trial)
                if t_val <= value - 0.25 * alpha * decrement:
                    break
                alpha *= 0.5
            else:
                break
            p, value, dens = trial, t_val, t_dens
        q = p / p.sum()
        d = kern.information_density(q)
        gap = float(np.max(d - penalty) - q @ (d - penalty))
        if gap < best[1]:
            best = (q, gap)
        if gap <= target or n / t < 1e-3 * target:
            break
        t *= 8.0
    return best


def inner_maximize(spec: ProblemSpec, mult: Multipliers, init: Optional[InputDistribution] = None,
                   tol: float = 1e-9, max_iter: int = 20000) -> Tuple[InputDistribution, float]:
    """Maximise I(F) - lambda1 (E[X^2] - sigma^2) - lambda2 (E_req - E[I0]) / E_req at fixed multipliers.

    Blahut-Arimoto with the cost folded into the update, stopped by its
    upper/lower bound gap.  Plain iteration crawls once the optimum is
    nearly flat, so after a short run a barrier Newton finish takes over.
    Returns the maximiser and the Lagrangian value (bits).
    """
    x = spec.amplitude_grid()
    prob = _build_problem(spec, x)
    lam = _to_internal(spec, prob, mult)
    penalty = prob.cost @ lam
    p = np.full(x.size, 1.0 / x.size) if init is None else _floor(init.masses)
    dens = prob.kernel.information_density(p)
    value = float(p @ (dens - penalty))
    step = 1.0
    newton_tried = False
    for it in range(max_iter):
        upper = float(np.max(dens - penalty))
        if (upper - value) * LOG2E <= tol:
            return InputDistribution(x, p), value * LOG2E
        if it == 200 and not newton_tried:
            newton_tried = True
            q = _floor(_penalized_newton(prob.kernel, penalty, p, tol / LOG2E)[0])
            dens_q = prob.kernel.information_density(q)
            value_q = float(q @ (dens_q - penalty))
            if value_q >= value:
                p, dens, value = q, dens_q, value_q
            continue
        y = np.log(p) + step * (dens - penalty)
        q = np.exp(y - y.max())
        q = _floor(q / q.sum())
        dens_q = prob.kernel.information_density(q)
        value_q = float(q @ (dens_q - penalty))
        if step > 1.0 and value_q < value:
            step = 1.0
            continue
        p, dens, value = q, dens_q, value_q
        step = min(step * 1.25, 50.0)
    raise NonConvergent(f"fixed-multiplier iteration did not reach {tol:g} bits")


def extract_mass_points(dist: InputDistribution, threshold: float = SUPPORT_THRESHOLD) -> List[Tuple[float, float]]:
    """Merge runs of adjacent grid points above ``threshold`` into (amplitude, mass) clusters."""
    keep = np.flatnonzero(dist.masses >= threshold)
    clusters: List[Tuple[float, float]] = []
    if keep.size == 0:
        return clusters
    runs = np.split(keep, np.flatnonzero(np.diff(keep) > 1) + 1)
    for run in runs:
        m = dist.masses[run]
        total = float(m.sum())
        clusters.append((float(m @ dist.amplitudes[run] / total), total))
    return clusters


def ask_amplitudes(a: float, m: int) -> np.ndarray:
    """Equally spaced M-ASK alphabet on [-a, a]."""
    if m < 2:
        raise ValueError("ASK needs at least two symbols")
    return -a + 2.0 * a * np.arange(m) / (m - 1)


def ask_rate(spec: ProblemSpec, m: int, tol: Optional[Tolerances] = None) -> Solution:
    """Optimal input law on the M-ASK alphabet under the same constraints."""
    return dual_solve(spec, tol, amplitudes=ask_amplitudes(spec.a, m))


def _gaussian_solution(spec: ProblemSpec, log_metric: float, excess: float) -> Solution:
    sd = math.sqrt(spec.sigma_x2)
    x = np.linspace(-9.0 * sd, 9.0 * sd, 1201)
    w = np.exp(-0.5 * x * x / spec.sigma_x2)
    dist = InputDistribution.normalized(x, w)
    h2 = spec.h_i**2
    lam1 = LOG2E * h2 / (2.0 * (spec.channel.sigma_n2 + h2 * spec.sigma_x2))
    p_out = (harvested_power_from_excess(spec.circuit, excess) if excess < 1
             else harvested_power_from_log(spec.circuit, log_metric))
    return Solution(
        distribution=dist,
        rate=spec.shannon_rate(),
        multipliers=Multipliers(lam1, 0.0),
        achieved_ap=spec.sigma_x2,
        achieved_metric=1.0 + excess if excess < 1 else math.exp(min(log_metric, 709.0)),
        achieved_metric_excess=excess,
        p_out=p_out,
        kkt_residual=0.0,
        dual_gap=0.0,
        iterations=0,
        mass_points=[],
        gaussian=True,
    )


def no_pp_solve(spec: ProblemSpec, tol: Optional[Tolerances] = None) -> Solution:
    """Capacity without a peak limit (``spec.a`` is ignored).

    When the Gaussian input already meets the EH demand it is optimal and
    returned in closed form (``gaussian=True``).  Otherwise the problem is
    solved on truncated grids of growing radius.  A truncated optimum at the
    Gaussian rate means the supremum is approached but never attained.  If mass still sits at the
    truncation edge after doubling the radius twice, the optimum escapes to
    infinite amplitude, no maximiser exists and :class:`NonConvergent` is
    raised with the widest truncation as ``best``.
    """
    from .certificate import e_lim_excess, log_e_lim

    tol = tol or Tolerances()
    lg = log_e_lim(spec.circuit, spec.h_e, spec.sigma_x2)
    ex = e_lim_excess(spec.circuit, spec.h_e, spec.sigma_x2)
    b = spec.budget
    inactive = (b.e_req_excess <= ex) if b.log_e_req < 0.5 else (b.log_e_req <= lg)
    if inactive:
        return _gaussian_solution(spec, lg, ex)
    shannon = spec.shannon_rate()
    sd = math.sqrt(spec.sigma_x2)
    radius = 8.0 * sd
    points = spec.grid_points
    prev: Optional[Solution] = None
    for _ in range(3):
        trial = spec.replace(a=radius, grid_points=points)
        try:
            sol = dual_solve(trial, tol)
        except Infeasible:
            sol = None
        if sol is not None:
            if sol.rate >= shannon - tol.gap:
                # only the Gaussian reaches Shannon and it misses the demand
                raise NonConvergent(
                    "truncated optima reach the Gaussian rate while the Gaussian misses the EH "
                    "demand; the unbounded problem has no maximiser", best=sol)
            edge = np.abs(sol.distribution.amplitudes) >= 0.9 * radius
            settled = float(sol.distribution.masses[edge].sum()) < 1e-10
            if settled:
                return sol
            prev = sol
        radius *= 2.0
        points = 2 * points - 1
    raise NonConvergent(
        "mass stays at the amplitude truncation edge as it grows; the unbounded problem "
        "has no maximiser at this EH demand", best=prev)
