"""Real scalar AWGN information channel and path-loss gains.

Information quantities are evaluated in noise-normalised units: the output
``u = y / sigma_n`` and the conditional means ``mu_i = x_i h_I / sigma_n``.
Mutual information only depends on these ratios, and the raw values
(``sigma_n^2`` around 1e-11 W, ``h_I`` around 1e-6) would otherwise sit
uncomfortably close to underflow.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .numerics import QuadratureGrid

SPEED_OF_LIGHT = 299_792_458.0
LOG2E = 1.0 / math.log(2.0)
# differential entropy of the standard normal, nats
_NORMAL_ENTROPY = 0.5 * math.log(2.0 * math.pi * math.e)
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)

DEFAULT_COVERAGE = 10.0
MIN_COVERAGE = 8.0
DEFAULT_STEP = 0.02


def dbm_to_watts(dbm: float) -> float:
    # one power of ten keeps whole-decade values exact: -80 dBm is exactly 1e-11 W
    return 10.0 ** ((dbm - 30.0) / 10.0)


@dataclass(frozen=True)
class ChannelParams:
    """Carrier, geometry and noise of the two links.

    ``h_i_override`` / ``h_e_override`` bypass the path-loss model with
    explicit amplitude gains.
    """

    f_c: float = 2.45e9
    alpha: float = 2.5
    d_i: float = 500.0
    d_e: float = 70.0
    sigma_n2: float = 1e-11
    h_i_override: Optional[float] = None
    h_e_override: Optional[float] = None

    def __post_init__(self):
        if not self.sigma_n2 > 0:
            raise ValueError("sigma_n2 must be positive")
        if not (self.d_i > 0 and self.d_e > 0):
            raise ValueError("distances must be positive")
        if not (self.alpha > 0 and self.f_c > 0):
            raise ValueError("alpha and f_c must be positive")
        for name in ("h_i_override", "h_e_override"):
            val = getattr(self, name)
            if val is not None and not val > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def h_i(self) -> float:
        if self.h_i_override is not None:
            return self.h_i_override
        return path_loss_gain(self, "id")

    @property
    def h_e(self) -> float:
        if self.h_e_override is not None:
            return self.h_e_override
        return path_loss_gain(self, "eh")

    @property
    def sigma_n(self) -> float:
        return math.sqrt(self.sigma_n2)

    def with_gains(self, h_i: Optional[float] = None, h_e: Optional[float] = None) -> "ChannelParams":
        return replace(self, h_i_override=h_i, h_e_override=h_e)


def path_loss_gain(params: ChannelParams, which: str) -> float:
    """Amplitude gain ``sqrt((c / (4 pi d f_c))^alpha)`` of the ``"id"`` or ``"eh"`` link."""
    if which in ("id", "I", "i"):
        d = params.d_i
    elif which in ("eh", "E", "e"):
        d = params.d_e
    else:
        raise ValueError(f"unknown receiver {which!r}; expected 'id' or 'eh'")
    ratio = SPEED_OF_LIGHT / (4.0 * math.pi * d * params.f_c)
    return ratio ** (params.alpha / 2.0)


@dataclass(frozen=True, eq=False)
class InputDistribution:
    """Probability masses on a strictly increasing amplitude grid (volts)."""

    amplitudes: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        x = np.atleast_1d(np.asarray(self.amplitudes, dtype=float))
        p = np.atleast_1d(np.asarray(self.masses, dtype=float))
        if x.shape != p.shape or x.ndim != 1 or x.size == 0:
            raise ValueError("amplitudes and masses must be equal-length 1-D arrays")
        if x.size > 1 and not np.all(np.diff(x) > 0):
            raise ValueError("amplitudes must be strictly increasing")
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValueError("masses must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-12:
            raise ValueError(f"masses sum to {p.sum()!r}, not 1")
        object.__setattr__(self, "amplitudes", x)
        object.__setattr__(self, "masses", p)

    @classmethod
    def point(cls, x: float) -> "InputDistribution":
        return cls(np.array([float(x)]), np.array([1.0]))

    @classmethod
    def uniform(cls, amplitudes) -> "InputDistribution":
        x = np.asarray(amplitudes, dtype=float)
        return cls(x, np.full(x.size, 1.0 / x.size))

    @classmethod
    def normalized(cls, amplitudes, weights) -> "InputDistribution":
        w = np.asarray(weights, dtype=float)
        return cls(amplitudes, w / w.sum())

    def __len__(self) -> int:
        return self.amplitudes.size

    def second_moment(self) -> float:
        return float(np.dot(self.masses, self.amplitudes**2))

    def max_amplitude(self) -> float:
        return float(np.max(np.abs(self.amplitudes)))

    def mix(self, other: "InputDistribution", alpha: float) -> "InputDistribution":
        """alpha * self + (1 - alpha) * other on the union of both supports."""
        x = np.union1d(self.amplitudes, other.amplitudes)
        p = np.zeros_like(x)
        p[np.searchsorted(x, self.amplitudes)] += alpha * self.masses
        p[np.searchsorted(x, other.amplitudes)] += (1.0 - alpha) * other.masses
        return InputDistribution(x, p / p.sum())

    def scaled(self, factor: float) -> "InputDistribution":
        return InputDistribution(self.amplitudes * factor, self.masses)


@dataclass(frozen=True, eq=False)
class OutputDensity:
    """ln p(u; F) sampled on a quadrature grid over the normalised output."""

    grid: QuadratureGrid
    log_density: np.ndarray
    means: np.ndarray = field(repr=False)

    def total_mass(self) -> float:
        return self.grid.integrate(np.exp(self.log_density))

    def covers(self, mu, margin: float = MIN_COVERAGE) -> bool:
        mu = np.atleast_1d(mu)
        return bool(self.grid.lower <= mu.min() - margin and self.grid.upper >= mu.max() + margin)


def normalized_means(amplitudes, h_i: float, sigma_n2: float) -> np.ndarray:
    return np.asarray(amplitudes, dtype=float) * (h_i / math.sqrt(sigma_n2))


def default_quadrature_grid(means, coverage: float = DEFAULT_COVERAGE, step: float = DEFAULT_STEP) -> QuadratureGrid:
    """Uniform grid reaching ``coverage`` noise deviations past the extreme means."""
    means = np.atleast_1d(means)
    return QuadratureGrid.covering(float(means.min()), float(means.max()), coverage, step)


def _log_normal_pdf(u, mu):
    return -0.5 * (u - mu) ** 2 - _LOG_SQRT_2PI


def output_log_density(dist: InputDistribution, h_i: float, sigma_n2: float,
                       grid: Optional[QuadratureGrid] = None) -> OutputDensity:
    """Gaussian-mixture output density of the normalised channel, in log form."""
    mu = normalized_means(dist.amplitudes, h_i, sigma_n2)
    if grid is None:
        grid = default_quadrature_grid(mu)
    if grid.lower > mu.min() - MIN_COVERAGE or grid.upper < mu.max() + MIN_COVERAGE:
        raise ValueError(
            f"quadrature grid [{grid.lower:g}, {grid.upper:g}] does not cover the "
            f"conditional means [{mu.min():g}, {mu.max():g}] by {MIN_COVERAGE} deviations"
        )
    u = grid.nodes
    keep = dist.masses > 0
    comp = _log_normal_pdf(u[None, :], mu[keep, None]) + np.log(dist.masses[keep])[:, None]
    return OutputDensity(grid, logsumexp(comp, axis=0), mu)


def marginal_information_density(x, dens: OutputDensity, h_i: float, sigma_n2: float):
    """i(x; F) in bits for one amplitude or an array of them."""
    xs = np.atleast_1d(np.asarray(x, dtype=float))
    mu = normalized_means(xs, h_i, sigma_n2)
    if not dens.covers(mu):
        raise ValueError("output density grid does not cover the requested amplitudes")
    u = dens.grid.nodes
    w = dens.grid.weights
    out = np.empty(mu.size)
    # row blocks keep the temporary matrix bounded for long probe grids
    for start in range(0, mu.size, 256):
        block = mu[start:start + 256]
        phi = np.exp(_log_normal_pdf(u[None, :], block[:, None])) * w
        out[start:start + 256] = -_NORMAL_ENTROPY - phi @ dens.log_density
    out *= LOG2E
    return float(out[0]) if np.ndim(x) == 0 else out


def mutual_information(dist: InputDistribution, dens: OutputDensity, h_i: float, sigma_n2: float) -> float:
    """I(F) = sum_i p_i i(x_i; F), bits."""
    keep = dist.masses > 0
    dens_i = marginal_information_density(dist.amplitudes[keep], dens, h_i, sigma_n2)
    return float(np.dot(dist.masses[keep], np.atleast_1d(dens_i)))


def output_entropy(dens: OutputDensity) -> float:
    """Differential entropy of the normalised output, bits."""
    p = np.exp(dens.log_density)
    return -LOG2E * dens.grid.integrate(p * dens.log_density)


def shannon_capacity(sigma_x2: float, h_i: float, sigma_n2: float) -> float:
    """0.5 log2(1 + sigma_x^2 h_I^2 / sigma_n^2)."""
    return 0.5 * math.log2(1.0 + sigma_x2 * h_i * h_i / sigma_n2)


class InformationKernel:
    """Precomputed conditional densities for repeated information evaluations.

    Serves the inner loops of the solver, where the amplitude grid is fixed
    and only the masses change.  Row entropies are taken from the same
    quadrature as the cross terms so that i(x; delta_x) is zero to rounding.
    """

    def __init__(self, means, coverage: float = DEFAULT_COVERAGE, step: float = DEFAULT_STEP):
        self.means = np.asarray(means, dtype=float)
        self.grid = default_quadrature_grid(self.means, coverage, step)
        u = self.grid.nodes
        log_phi = _log_normal_pdf(u[None, :], self.means[:, None])
        self._shift = log_phi.max(axis=0)
        self._scaled = np.exp(log_phi - self._shift)
        self._weighted = np.exp(log_phi) * self.grid.weights
        self._self_term = np.sum(self._weighted * log_phi, axis=1)

    def log_output(self, masses: np.ndarray) -> np.ndarray:
        s = masses @ self._scaled
        if s.min() > 1e-250:
            return self._shift + np.log(s)
        # mass concentrated far from some output nodes: fall back to the exact form
        log_phi = _log_normal_pdf(self.grid.nodes[None, :], self.means[:, None])
        with np.errstate(divide="ignore"):
            return logsumexp(log_phi + np.log(masses)[:, None], axis=0)

    def information_density(self, masses: np.ndarray) -> np.ndarray:
        """Vector of i(x_i; F) in nats."""
        return self._self_term - self._weighted @ self.log_output(masses)

    def information_hessian(self, masses: np.ndarray, rows: np.ndarray) -> np.ndarray:
        """d^2 I / dp_i dp_j (nats) for i, j in ``rows``: -int phi_i phi_j / p(u) du."""
        u = self.grid.nodes
        half = 0.5 * (np.log(self.grid.weights) - self.log_output(masses))
        scaled = np.exp(_log_normal_pdf(u[None, :], self.means[rows, None]) + half)
        return -(scaled @ scaled.T)
