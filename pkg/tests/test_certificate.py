import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import binary_awgn_rate, gaussian_i0_mean, mixture_information, series_i0
from swiptcap.certificate import (
    e_lim,
    e_lim_excess,
    kkt_check,
    log_e_lim,
    p_lim,
    support_count_stability,
)
from swiptcap.channel import ChannelParams, InputDistribution
from swiptcap.rectenna import CircuitParams, harvested_power
from swiptcap.solver import Multipliers, ProblemSpec, dual_solve, extract_mass_points, no_pp_solve

C = CircuitParams()
H_E = ChannelParams().h_e


def unit_spec(a, sigma_x2, grid_points=101, h_e=1e-2):
    ch = ChannelParams(sigma_n2=1.0).with_gains(h_i=1.0, h_e=h_e)
    return ProblemSpec.build(sigma_x2=sigma_x2, a_t=a, channel=ch, grid_points=grid_points)


def gaussian_metric_quadrature(h_e, sigma_x2):
    return gaussian_i0_mean(math.sqrt(2.0) * C.b * h_e, sigma_x2)


def with_distribution(sol, dist):
    return dataclasses.replace(sol, distribution=dist, mass_points=extract_mass_points(dist))


# ---------------------------------------------------------------- e_lim


def test_e_lim_zero_power():
    assert e_lim(C, H_E, 1e-30) == pytest.approx(1.0, abs=1e-15)
    assert e_lim_excess(C, H_E, 0.0) == 0.0


def test_e_lim_unit_half_argument():
    sigma_x2 = 2.0 / (C.b * H_E) ** 2
    assert e_lim(C, H_E, sigma_x2) == pytest.approx(math.e * series_i0(1.0), rel=1e-14)
    assert e_lim(C, H_E, sigma_x2) == pytest.approx(3.4415238691253345, rel=1e-14)


@pytest.mark.parametrize("h_e,sigma_x2", [(H_E, 10.0), (1e-3, 1.0), (1e-3, 20.0), (5e-3, 3.0), (1e-2, 1.0)])
def test_e_lim_matches_quadrature(h_e, sigma_x2):
    assert e_lim(C, h_e, sigma_x2) == pytest.approx(gaussian_metric_quadrature(h_e, sigma_x2), rel=1e-8)


def test_e_lim_excess_precision_at_default_link():
    half = 0.5 * C.b**2 * H_E**2 * 10.0
    # e^h I0(h) - 1 = h + 3h^2/4 + 5h^3/12 + O(h^4)
    assert e_lim_excess(C, H_E, 10.0) == pytest.approx(half + 0.75 * half**2 + (5 / 12) * half**3, rel=1e-9)


def test_log_e_lim_finite_where_e_lim_overflows():
    lg = log_e_lim(C, 1.0, 1e3)
    assert math.isfinite(lg) and lg > 700
    assert math.isinf(e_lim_excess(C, 1.0, 1e3))


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.floats(1.01, 3.0))
def test_e_lim_increasing_in_power(sigma_x2, factor):
    assert e_lim_excess(C, 1e-3, sigma_x2 * factor) > e_lim_excess(C, 1e-3, sigma_x2)


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-6, 1e-2), st.floats(1.01, 3.0))
def test_e_lim_increasing_in_gain(h_e, factor):
    assert e_lim_excess(C, h_e * factor, 1.0) > e_lim_excess(C, h_e, 1.0)


def test_p_lim_consistent_with_harvested_power():
    assert p_lim(C, 1e-3, 5.0) == pytest.approx(harvested_power(C, e_lim(C, 1e-3, 5.0)), rel=1e-9)
    # default link at sigma_x2 = 10 W: femtowatt scale
    assert p_lim(C, H_E, 10.0) == pytest.approx(2.0066667866553074e-16, rel=1e-9)


# ---------------------------------------------------------------- kkt_check


@pytest.fixture(scope="module")
def three_atom():
    spec = unit_spec(2.0, 100.0)
    return spec, dual_solve(spec)


@pytest.fixture(scope="module")
def binary():
    spec = unit_spec(1.0, 100.0)
    return spec, dual_solve(spec)


def test_low_snr_three_atom_passes(three_atom):
    spec, sol = three_atom
    assert [a for a, _ in sol.mass_points] == [-2.0, 0.0, 2.0]
    assert sol.dual_gap <= 1e-5
    report = kkt_check(sol, spec, tol=1e-3)
    assert report.passed
    assert report.max_violation <= 1e-5 and report.max_support_residual <= 1e-5
    assert report.probe.size >= 4 * (spec.grid_points - 1) + 1
    assert report.capacity == pytest.approx(sol.rate, abs=1e-6)


def test_mass_moved_off_support_fails(three_atom):
    spec, sol = three_atom
    x = sol.distribution.amplitudes
    p = sol.distribution.masses.copy()
    top = int(np.argmax(p))
    off = int(np.argmin(np.abs(x - 1.0)))  # x = 1 carries no mass at the optimum
    assert p[off] < 1e-9
    p[top] -= 0.01
    p[off] += 0.01
    report = kkt_check(with_distribution(sol, InputDistribution(x, p)), spec, tol=1e-3)
    assert not report.passed
    assert report.max_support_residual > 1e-3


def test_single_atom_where_binary_is_optimal_fails(binary):
    spec, sol = binary
    assert [a for a, _ in sol.mass_points] == [-1.0, 1.0]
    x = sol.distribution.amplitudes
    p = np.zeros_like(x)
    p[x.size // 2] = 1.0
    fake = dataclasses.replace(with_distribution(sol, InputDistribution(x, p)),
                               multipliers=Multipliers(0.0, 0.0))
    report = kkt_check(fake, spec, tol=1e-3)
    assert not report.passed
    assert report.max_violation > 1e-3
    # the worst violation is at the peak amplitude
    assert abs(report.probe[np.argmin(report.phi)]) == pytest.approx(1.0)


def test_gaussian_branch_phi_vanishes():
    spec = unit_spec(1.0, 1.0).replace(a=math.inf)
    sol = no_pp_solve(spec)
    assert sol.gaussian and sol.multipliers.lambda2 == 0.0
    assert sol.multipliers.lambda1 == pytest.approx(math.log2(math.e) / 4.0, rel=1e-12)
    report = kkt_check(sol, spec, tol=1e-6)
    assert np.max(np.abs(report.phi)) <= 1e-6
    assert report.passed


def test_report_summary_lists_verdict(binary):
    spec, sol = binary
    text = kkt_check(sol, spec).summary()
    assert text.startswith("kkt certificate: PASS")
    assert "max violation" in text


def test_custom_probe_grid_is_used(binary):
    spec, sol = binary
    probe = np.linspace(-1.0, 1.0, 1601)
    report = kkt_check(sol, spec, probe_grid=probe)
    assert report.probe.size == 1601 and report.passed


# ---------------------------------------------------------------- support stability


def test_support_count_binary_regime():
    assert support_count_stability(unit_spec(1.0, 100.0), refinements=2) == [2, 2, 2]


def test_support_count_stable_at_larger_peak():
    counts = support_count_stability(unit_spec(4.0, 100.0, grid_points=81), refinements=2)
    assert len(set(counts)) == 1
    assert counts[0] >= 4


def test_binary_beats_three_atoms_at_unit_peak():
    # brute force over symmetric {-1, 0, 1} laws: the centre atom never helps at A = 1
    binary_rate = binary_awgn_rate(1.0)
    for q in np.linspace(0.02, 0.5, 25):
        assert mixture_information([-1.0, 0.0, 1.0], [(1 - q) / 2, q, (1 - q) / 2]) < binary_rate


def test_support_count_needs_two_refinements():
    with pytest.raises(ValueError):
        support_count_stability(unit_spec(1.0, 100.0), refinements=1)
