import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import binary_awgn_rate, mixture_information, path_loss_gain_decimal
from swiptcap.channel import (
    SPEED_OF_LIGHT,
    ChannelParams,
    InformationKernel,
    InputDistribution,
    default_quadrature_grid,
    dbm_to_watts,
    marginal_information_density,
    mutual_information,
    normalized_means,
    output_log_density,
    path_loss_gain,
    shannon_capacity,
)
from swiptcap.numerics import QuadratureGrid

UNIT = dict(h_i=1.0, sigma_n2=1.0)


def info(dist, h_i=1.0, sigma_n2=1.0, step=None):
    mu = normalized_means(dist.amplitudes, h_i, sigma_n2)
    grid = default_quadrature_grid(mu) if step is None else default_quadrature_grid(mu, step=step)
    dens = output_log_density(dist, h_i, sigma_n2, grid)
    return mutual_information(dist, dens, h_i, sigma_n2)


def test_default_gains_match_decimal_oracle():
    ch = ChannelParams()
    assert ch.h_e == pytest.approx(path_loss_gain_decimal(70.0, 2.45e9, 2.5), rel=1e-14)
    assert ch.h_i == pytest.approx(path_loss_gain_decimal(500.0, 2.45e9, 2.5), rel=1e-14)
    # frozen values of the default geometry
    assert ch.h_e == pytest.approx(1.5107e-5, rel=1e-4)
    assert ch.h_i == pytest.approx(1.2937e-6, rel=1e-4)


def test_path_loss_unit_ratio():
    d = SPEED_OF_LIGHT / (4 * math.pi * 1e9)
    ch = ChannelParams(f_c=1e9, alpha=2.0, d_i=d, d_e=d)
    assert path_loss_gain(ch, "id") == pytest.approx(1.0, rel=1e-15)


def test_path_loss_distance_doubling():
    ch = ChannelParams()
    far = ChannelParams(d_e=140.0)
    assert far.h_e**2 == pytest.approx(ch.h_e**2 * 2 ** -2.5, rel=1e-14)
    with pytest.raises(ValueError):
        path_loss_gain(ch, "x")


def test_noise_conversion_and_overrides():
    assert dbm_to_watts(-80.0) == pytest.approx(1e-11, rel=1e-15)
    ch = ChannelParams().with_gains(h_i=2.0, h_e=3.0)
    assert (ch.h_i, ch.h_e) == (2.0, 3.0)
    with pytest.raises(ValueError):
        ChannelParams(sigma_n2=0.0)
    with pytest.raises(ValueError):
        ChannelParams(h_e_override=-1.0)


def test_distribution_validation():
    with pytest.raises(ValueError):
        InputDistribution(np.array([1.0, 0.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        InputDistribution(np.array([0.0, 1.0]), np.array([0.5, 0.6]))
    with pytest.raises(ValueError):
        InputDistribution(np.array([0.0, 1.0]), np.array([1.5, -0.5]))


def test_output_density_single_atom_is_standard_normal():
    d = InputDistribution.point(0.0)
    dens = output_log_density(d, **UNIT)
    u = dens.grid.nodes
    np.testing.assert_allclose(dens.log_density, -0.5 * u * u - 0.5 * math.log(2 * math.pi), atol=1e-13)


def test_output_density_degenerate_merge():
    d = InputDistribution(np.array([-1.0, 1.0]), np.array([0.5, 0.5]))
    dens = output_log_density(d, h_i=1e-20, sigma_n2=1.0)
    u = dens.grid.nodes
    np.testing.assert_allclose(dens.log_density, -0.5 * u * u - 0.5 * math.log(2 * math.pi), atol=1e-13)


def test_output_density_two_atoms_at_origin():
    d = InputDistribution(np.array([-5.0, 5.0]), np.array([0.5, 0.5]))
    grid = QuadratureGrid(-20.0, 20.0, 4001)  # node 2000 is u = 0
    dens = output_log_density(d, grid=grid, **UNIT)
    direct = 2 * 0.5 * math.exp(-12.5) / math.sqrt(2 * math.pi)
    assert math.exp(dens.log_density[2000]) == pytest.approx(direct, rel=1e-13)


def test_output_density_coverage_error():
    d = InputDistribution.point(0.0)
    with pytest.raises(ValueError):
        output_log_density(d, grid=QuadratureGrid(-2.0, 2.0, 101), **UNIT)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-20.0, 20.0), min_size=1, max_size=6, unique=True),
       st.lists(st.floats(0.01, 1.0), min_size=6, max_size=6))
def test_output_density_normalised_and_dominates_components(xs, ws):
    xs = np.sort(np.asarray(xs))
    d = InputDistribution.normalized(xs, ws[:xs.size])
    dens = output_log_density(d, **UNIT)
    assert dens.total_mass() == pytest.approx(1.0, abs=1e-6)
    u = dens.grid.nodes
    for x, p in zip(d.amplitudes, d.masses):
        comp = math.log(p) - 0.5 * (u - x) ** 2 - 0.5 * math.log(2 * math.pi)
        assert np.all(dens.log_density >= comp - 1e-12)


def test_information_density_self_is_zero():
    d = InputDistribution.point(3.0)
    dens = output_log_density(d, **UNIT)
    assert marginal_information_density(3.0, dens, **UNIT) == pytest.approx(0.0, abs=1e-10)
    assert info(d) == pytest.approx(0.0, abs=1e-10)


def test_information_density_near_noiseless_binary():
    d = InputDistribution(np.array([-5.0, 5.0]), np.array([0.5, 0.5]))
    dens = output_log_density(d, **UNIT)
    val = marginal_information_density(5.0, dens, **UNIT)
    assert 1.0 - 1e-5 < val <= 1.0 + 1e-9
    assert val == pytest.approx(binary_awgn_rate(5.0), abs=1e-9)


@given(st.floats(0.0, 4.0))
@settings(max_examples=20, deadline=None)
def test_information_density_symmetric(x):
    d = InputDistribution(np.array([-2.0, 0.0, 2.0]), np.array([0.3, 0.4, 0.3]))
    dens = output_log_density(d, **UNIT)
    assert marginal_information_density(x, dens, **UNIT) == pytest.approx(
        marginal_information_density(-x, dens, **UNIT), abs=1e-10)


@pytest.mark.parametrize("mu", [0.25, 0.5, 1.0, 1.5, 2.5])
def test_binary_information_matches_quadrature_oracle(mu):
    d = InputDistribution(np.array([-mu, mu]), np.array([0.5, 0.5]))
    assert info(d) == pytest.approx(binary_awgn_rate(mu), abs=1e-8)


def test_mixture_information_matches_adaptive_quadrature():
    x = np.array([-3.0, -0.7, 0.4, 2.5])
    p = np.array([0.1, 0.35, 0.25, 0.3])
    assert info(InputDistribution(x, p)) == pytest.approx(mixture_information(x, p), abs=1e-8)


def test_snr_scale_invariance():
    x = np.array([-2.0, 0.5, 3.0])
    p = np.array([0.2, 0.5, 0.3])
    base = info(InputDistribution(x, p), h_i=1.0, sigma_n2=1.0)
    k = 1e-6
    scaled = info(InputDistribution(x * k, p), h_i=1.0, sigma_n2=k * k)
    assert scaled == pytest.approx(base, abs=1e-10)


def test_shannon_examples():
    assert shannon_capacity(1.0, 1.0, 1.0) == 0.5
    assert shannon_capacity(3.0, 1.0, 1.0) == 1.0
    assert shannon_capacity(0.0, 1.0, 1.0) == 0.0


laws = st.integers(1, 6).flatmap(lambda n: st.tuples(
    st.lists(st.floats(-4.0, 4.0), min_size=n, max_size=n, unique=True),
    st.lists(st.floats(0.05, 1.0), min_size=n, max_size=n)))


def _law(pair):
    xs, ws = pair
    order = np.argsort(xs)
    return InputDistribution.normalized(np.asarray(xs)[order], np.asarray(ws)[order])


@settings(max_examples=30, deadline=None)
@given(laws)
def test_information_bounds(pair):
    d = _law(pair)
    val = info(d)
    assert val >= -1e-10
    assert val <= shannon_capacity(d.second_moment(), 1.0, 1.0) + 1e-6


@settings(max_examples=15, deadline=None)
@given(laws)
def test_step_halving_gate(pair):
    d = _law(pair)
    assert abs(info(d) - info(d, step=0.01)) <= 1e-6


@settings(max_examples=20, deadline=None)
@given(laws, laws, st.floats(0.0, 1.0))
def test_mixture_concavity(a, b, alpha):
    f1, f2 = _law(a), _law(b)
    mixed = f1.mix(f2, alpha)
    assert info(mixed) >= alpha * info(f1) + (1 - alpha) * info(f2) - 1e-9


def test_kernel_agrees_with_direct_evaluation():
    x = np.linspace(-3.0, 3.0, 13)
    p = np.random.default_rng(0).dirichlet(np.ones(x.size))
    kern = InformationKernel(x)
    d = InputDistribution(x, p)
    dens = output_log_density(d, **UNIT)
    direct = marginal_information_density(x, dens, **UNIT)
    np.testing.assert_allclose(kern.information_density(p) / math.log(2), direct, atol=1e-9)
