"""
Tests for the sphere geometry module.
"""

import os
import sys
import math

import numpy as np
import pytest
from scipy import integrate, special, stats

# Add the parent directory to the path to import config and modules
sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from modules.errors_module import DomainError
from modules.rng_stats_module import SeedPath, derive_stream
from modules.sphere_module import (MarginalConvention, SphereSection, ball_volume, coordinate_correlation,
                                   coordinate_ks_profile, coordinate_marginal_density, marginal_exponent,
                                   nested_first_coordinates, parse_convention, radius_concentration, sample_sphere,
                                   sample_sphere_batch, wallis)


def _wallis_gamma(n):
    return math.sqrt(math.pi) / 2 * math.exp(special.gammaln((n + 1) / 2) - special.gammaln(n / 2 + 1))


def test_wallis_base_values():
    assert wallis(0) == pytest.approx(math.pi / 2, rel=1e-15)
    assert wallis(1) == 1.0
    assert wallis(10) == pytest.approx(63 * math.pi / 512, rel=1e-14)


def test_wallis_matches_numerical_integral():
    value, _ = integrate.quad(lambda t: math.cos(t) ** 10, 0, math.pi / 2, epsabs=1e-14, epsrel=1e-14)
    assert wallis(10) == pytest.approx(value, rel=1e-12)


@pytest.mark.parametrize("n", range(2, 61))
def test_wallis_recursion_and_gamma_oracle(n):
    assert n * wallis(n) == pytest.approx((n - 1) * wallis(n - 2), rel=1e-12)
    assert wallis(n) == pytest.approx(_wallis_gamma(n), rel=1e-12)


def test_wallis_rejects_negative():
    with pytest.raises(DomainError):
        wallis(-1)


@pytest.mark.parametrize("n", range(1, 31))
def test_ball_volume_gamma_oracle(n):
    closed_form = math.exp(n / 2 * math.log(math.pi) - special.gammaln(n / 2 + 1))
    assert ball_volume(n) == pytest.approx(closed_form, rel=1e-10)


def test_ball_volume_known_values():
    assert ball_volume(1) == 2.0
    assert ball_volume(2) == pytest.approx(math.pi)
    assert ball_volume(3) == pytest.approx(4 * math.pi / 3)
    assert ball_volume(12) == pytest.approx(math.pi ** 6 / 720, rel=1e-10)


def test_section_validation():
    with pytest.raises(DomainError):
        SphereSection(0, 1.0)
    with pytest.raises(DomainError):
        SphereSection(3, -1.0)
    assert SphereSection(4, 0.5).euclidean_radius == pytest.approx(1.0)


def test_parse_convention():
    assert parse_convention("slice-volume") is MarginalConvention.SLICE_VOLUME
    assert parse_convention(" Surface-Measure ") is MarginalConvention.SURFACE_MEASURE
    assert parse_convention("paper-slice") is MarginalConvention.SLICE_VOLUME
    assert MarginalConvention.PAPER_SLICE is MarginalConvention.SLICE_VOLUME
    assert len(list(MarginalConvention)) == 2
    with pytest.raises(DomainError):
        parse_convention("slice")


def test_sample_sphere_norm():
    point = sample_sphere(3, 2.0, seed=8)
    assert point.shape == (3,)
    assert np.linalg.norm(point) == pytest.approx(2.0, rel=1e-12)


def test_sample_sphere_zero_sphere():
    values = sample_sphere_batch(1, 5.0, 200, derive_stream(SeedPath(1)))
    np.testing.assert_allclose(np.abs(values), 5.0, rtol=1e-12)


def test_sample_sphere_batch_norms_and_symmetry():
    n = 50
    points = sample_sphere_batch(n, 1.0, 100_000, derive_stream(SeedPath(21)))
    np.testing.assert_allclose(np.linalg.norm(points, axis=1), 1.0, rtol=1e-12)
    assert abs(points[:, 0].mean()) < 3 / math.sqrt(100_000) / math.sqrt(n)


@pytest.mark.parametrize("convention", list(MarginalConvention))
@pytest.mark.parametrize("n", [3, 10, 57])
def test_marginal_density_normalized_and_even(convention, n):
    section = SphereSection(n, 1.3)
    half = section.euclidean_radius
    total, _ = integrate.quad(lambda z: coordinate_marginal_density(section, z, convention), -half, half,
                              epsabs=1e-12, epsrel=1e-12, limit=200)
    assert total == pytest.approx(1.0, abs=1e-9)
    z = np.linspace(-half, half, 11)
    np.testing.assert_allclose(coordinate_marginal_density(section, z, convention),
                               coordinate_marginal_density(section, -z, convention))


def test_surface_marginal_in_three_dimensions_is_uniform():
    section = SphereSection(3, 1.0)
    expected = 1 / (2 * math.sqrt(3))
    assert coordinate_marginal_density(section, 0.5, "surface-measure") == pytest.approx(expected)
    assert coordinate_marginal_density(section, 1.7, "surface-measure") == pytest.approx(expected)


def test_marginal_density_outside_support_is_zero():
    section = SphereSection(5, 1.0)
    assert coordinate_marginal_density(section, 3.0, "slice-volume") == 0.0


def test_surface_marginal_needs_three_dimensions():
    with pytest.raises(DomainError):
        coordinate_marginal_density(SphereSection(2, 1.0), 0.1, MarginalConvention.SURFACE_MEASURE)


@pytest.mark.parametrize("convention", list(MarginalConvention))
def test_marginal_density_approaches_normal(convention):
    z = np.linspace(-4, 4, 161)
    gaps = [np.max(np.abs(coordinate_marginal_density(SphereSection(n, 1.0), z, convention) - stats.norm.pdf(z)))
            for n in (10, 40, 400)]
    assert gaps[0] > gaps[1] > gaps[2]
    assert gaps[2] < 0.01


def _coordinate_cdf(n, convention):
    # (z/sqrt(n) + 1)/2 is Beta(e + 1, e + 1) for the density exponent e
    shape = marginal_exponent(n, convention) + 1.0
    return lambda z: stats.beta.cdf((np.asarray(z) / math.sqrt(n) + 1.0) / 2.0, shape, shape)


@pytest.mark.parametrize("convention", list(MarginalConvention))
def test_coordinate_cdf_matches_the_density(convention):
    n = 4
    section = SphereSection(n, 1.0)
    cdf = _coordinate_cdf(n, convention)
    for z in (-1.5, -0.2, 0.7, 1.9):
        expected = integrate.quad(lambda t: coordinate_marginal_density(section, t, convention), -2.0, z)[0]
        assert cdf(z) == pytest.approx(expected, abs=1e-10)


@pytest.mark.parametrize("n", [3, 4])
def test_sampled_coordinates_follow_surface_measure_not_slice(n):
    points = sample_sphere_batch(n, math.sqrt(n), 100_000, derive_stream(SeedPath(99)))
    sample = points[:, 0]
    surface = stats.kstest(sample, _coordinate_cdf(n, MarginalConvention.SURFACE_MEASURE)).pvalue
    slice_ = stats.kstest(sample, _coordinate_cdf(n, MarginalConvention.SLICE_VOLUME)).pvalue
    assert surface > 1e-3
    assert slice_ < 1e-3


def test_radius_concentration():
    mean, std = radius_concentration(100, 20_000, seed=5)
    assert mean == pytest.approx(1.0, abs=0.01)
    assert std == pytest.approx(math.sqrt(2 / 100), rel=0.05)


@pytest.mark.parametrize("stratified_head", [True, False])
def test_nested_first_coordinates_are_uniform_sphere_coordinates(stratified_head):
    dims = [1, 3, 6]
    coords = nested_first_coordinates(dims, 50_000, derive_stream(SeedPath(3)), stratified_head)
    assert coords.shape == (3, 50_000)
    np.testing.assert_allclose(np.abs(coords[0]), 1.0)
    for n, row in zip(dims[1:], coords[1:]):
        assert np.all(np.abs(row) <= math.sqrt(n) + 1e-12)
        assert np.mean(row ** 2) == pytest.approx(1.0, abs=0.02)
        assert stats.kstest(row, _coordinate_cdf(n, MarginalConvention.SURFACE_MEASURE)).pvalue > 1e-3


def test_nested_first_coordinates_share_the_gaussian_vector():
    coords = nested_first_coordinates([2, 50], 1000, derive_stream(SeedPath(8)), stratified_head=False)
    stream = derive_stream(SeedPath(8))
    head = stream.standard_normal(1000)
    tail = stream.standard_normal((1000, 49))
    vectors = np.column_stack([head, tail])
    np.testing.assert_allclose(coords[0], math.sqrt(2) * head / np.linalg.norm(vectors[:, :2], axis=1), rtol=1e-12)
    np.testing.assert_allclose(coords[1], math.sqrt(50) * head / np.linalg.norm(vectors, axis=1), rtol=1e-12)


@pytest.mark.slow
def test_coordinate_ks_profile_decreases():
    distances = [d for _, d in coordinate_ks_profile([4, 25, 100, 400], 100_000, seed=2718)]
    assert distances[0] > distances[1] > distances[2]
    assert distances[-1] < 0.02
    # the gap between n = 100 and n = 400 is about 1e-3, so resolve it with more points
    distances = [d for _, d in coordinate_ks_profile([4, 25, 100, 400], 400_000, seed=2718)]
    assert all(a > b for a, b in zip(distances, distances[1:]))


def test_coordinate_ks_profile_without_stratification():
    profile = coordinate_ks_profile([4, 25, 400], 100_000, seed=2718, stratified_head=False)
    distances = [d for _, d in profile]
    assert distances[0] > 0.025
    assert distances[0] > distances[1]
    assert distances[2] < 0.02


def test_coordinate_correlation_is_small():
    assert coordinate_correlation(50, 3, 20_000, seed=4) < 0.03
    with pytest.raises(DomainError):
        coordinate_correlation(5, 6, 100, seed=4)
