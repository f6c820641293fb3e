"""
Tests for section means, Gaussian limits, convergence reports and field integrals.
"""

import os
import sys
import math

import numpy as np
import pytest

# Add the parent directory to the path to import config and modules
sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from modules.errors_module import BudgetError, DomainError, EvaluationError
from modules.functionals_module import IntegralCylinder, PointCylinder, VolterraSeries
from modules.gateaux_module import (EstimateMethod, MeanEstimate, concentration_profile, convergence_report,
                                    field_convergence, field_integral, gaussian_limit_mean,
                                    gaussian_limit_monte_carlo, section_mean_monte_carlo,
                                    section_mean_quadrature)
from modules.sphere_module import MarginalConvention, SphereSection

SLICE = MarginalConvention.SLICE_VOLUME
SURFACE = MarginalConvention.SURFACE_MEASURE

V2 = PointCylinder(lambda v: v ** 2, (0.5,))
V4 = PointCylinder(lambda v: v ** 4, (0.5,))
COS = PointCylinder(np.cos, (0.5,))
INT_SQUARE = IntegralCylinder(1, lambda v, a: v ** 2)


@pytest.mark.parametrize("n", [10, 100, 1000])
@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_second_moment_by_convention(n, R):
    section = SphereSection(n, R)
    assert section_mean_quadrature(V2, section, SURFACE).value == pytest.approx(R ** 2, rel=1e-10)
    assert section_mean_quadrature(V2, section, SLICE).value == pytest.approx(n * R ** 2 / (n + 2), rel=1e-10)


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_fourth_moment_by_convention(n):
    R = 1.3
    section = SphereSection(n, R)
    surface = section_mean_quadrature(V4, section, SURFACE).value
    slice_ = section_mean_quadrature(V4, section, SLICE).value
    assert surface == pytest.approx(3 * n * R ** 4 / (n + 2), rel=1e-10)
    assert slice_ == pytest.approx(3 * n ** 2 * R ** 4 / ((n + 2) * (n + 4)), rel=1e-10)


def test_quadrature_estimate_is_deterministic():
    estimate = section_mean_quadrature(COS, SphereSection(50, 1.0))
    assert estimate.std_error == 0.0
    assert estimate.method is EstimateMethod.QUADRATURE
    assert estimate.n == 50


def test_scale_equivariance():
    R = 1.7
    g = np.cosh
    scaled = section_mean_quadrature(PointCylinder(g, (0.2,)), SphereSection(40, R)).value
    unit = section_mean_quadrature(PointCylinder(lambda v: g(R * v), (0.2,)), SphereSection(40, 1.0)).value
    assert scaled == pytest.approx(unit, rel=1e-12)


def test_quadrature_rejects_other_functionals():
    with pytest.raises(DomainError):
        section_mean_quadrature(INT_SQUARE, SphereSection(10, 1.0))
    with pytest.raises(DomainError):
        section_mean_quadrature(PointCylinder(lambda u, v: u * v, (0.1, 0.9)), SphereSection(10, 1.0))
    with pytest.raises(DomainError):
        section_mean_quadrature(V2, SphereSection(10, 1.0), order=1)
    with pytest.raises(DomainError):
        section_mean_quadrature(V2, SphereSection(2, 1.0), SURFACE)


def test_quadrature_reports_non_finite_integrand():
    func = PointCylinder(lambda v: np.where(v > 0.5, np.nan, v), (0.5,))
    with pytest.raises(EvaluationError):
        section_mean_quadrature(func, SphereSection(10, 1.0))


def test_mean_estimate_validation():
    with pytest.raises(DomainError):
        MeanEstimate(1.0, 0.1, 5, EstimateMethod.QUADRATURE)
    with pytest.raises(DomainError):
        MeanEstimate(1.0, -0.1, 5, EstimateMethod.MONTE_CARLO)


def test_monte_carlo_agrees_with_surface_quadrature():
    section = SphereSection(200, 1.0)
    estimate = section_mean_monte_carlo(V4, section, 100_000, seed=12)
    exact = section_mean_quadrature(V4, section, SURFACE).value
    assert abs(estimate.value - exact) <= 4 * estimate.std_error
    assert estimate.samples == 100_000


@pytest.mark.parametrize("n", [10, 100, 1000])
def test_integral_of_square_is_constant_on_sections(n):
    estimate = section_mean_monte_carlo(INT_SQUARE, SphereSection(n, 1.4), 200, seed=n)
    assert estimate.value == pytest.approx(1.4 ** 2, rel=1e-12)
    assert estimate.std_error <= 1e-12


@pytest.mark.parametrize("workers", [2, 8])
def test_monte_carlo_independent_of_workers(workers):
    section = SphereSection(30, 1.0)
    serial = section_mean_monte_carlo(COS, section, 25_000, seed=5, workers=1)
    parallel = section_mean_monte_carlo(COS, section, 25_000, seed=5, workers=workers)
    assert serial.value == pytest.approx(parallel.value, rel=1e-14)
    assert serial.std_error == pytest.approx(parallel.std_error, rel=1e-12)


def test_monte_carlo_needs_two_samples():
    with pytest.raises(DomainError):
        section_mean_monte_carlo(V2, SphereSection(10, 1.0), 1, seed=1)


@pytest.mark.parametrize("R", [0.5, 1.0, 2.0])
def test_gaussian_limits(R):
    assert gaussian_limit_mean(V2, R) == pytest.approx(R ** 2, rel=1e-12)
    assert gaussian_limit_mean(V4, R) == pytest.approx(3 * R ** 4, rel=1e-12)
    assert gaussian_limit_mean(COS, R) == pytest.approx(math.exp(-R ** 2 / 2), rel=1e-10)


def test_gaussian_limit_of_product_at_distinct_points():
    func = PointCylinder(lambda u, v: u * v, (0.2, 0.7))
    assert abs(gaussian_limit_mean(func, 1.0)) <= 1e-12


def test_gaussian_limit_of_integral_cylinders():
    assert gaussian_limit_mean(INT_SQUARE, 1.5) == pytest.approx(1.5 ** 2, rel=1e-12)
    weighted = IntegralCylinder(1, lambda v, a: a * v ** 2)
    assert gaussian_limit_mean(weighted, 1.0) == pytest.approx(0.5, rel=1e-12)
    double = IntegralCylinder(2, lambda u, v, a, b: u ** 2 * v ** 2)
    assert gaussian_limit_mean(double, 1.2, hermite_order=10, alpha_quadrature_order=8) == pytest.approx(
        1.2 ** 4, rel=1e-12)


def test_gaussian_limit_of_volterra_series_is_its_constant():
    series = VolterraSeries((lambda t: np.ones_like(t), lambda s, t: np.ones_like(s)), constant=0.75)
    assert gaussian_limit_mean(series, 2.0) == 0.75
    estimate = gaussian_limit_monte_carlo(series, 2.0, 100, seed=1)
    assert estimate.value == 0.75
    assert estimate.n is None


def test_gaussian_limit_rejections():
    with pytest.raises(DomainError):
        gaussian_limit_mean(PointCylinder(lambda u, v: u * v, (0.3, 0.3)), 1.0)
    with pytest.raises(BudgetError):
        gaussian_limit_mean(PointCylinder(lambda *v: sum(v), (0.1, 0.2, 0.3, 0.4, 0.5)), 1.0)
    with pytest.raises(BudgetError):
        gaussian_limit_mean(IntegralCylinder(3, lambda u, v, w, a, b, c: u * v * w), 1.0)
    with pytest.raises(DomainError):
        gaussian_limit_mean(V2, 0.0)


def test_gaussian_limit_monte_carlo_shares_coincident_points():
    func = PointCylinder(lambda u, v: u * v, (0.3, 0.3))
    estimate = gaussian_limit_monte_carlo(func, 1.5, 100_000, seed=8)
    assert abs(estimate.value - 1.5 ** 2) <= 4 * estimate.std_error


def test_gaussian_limit_monte_carlo_matches_quadrature():
    estimate = gaussian_limit_monte_carlo(COS, 1.0, 100_000, seed=9)
    assert abs(estimate.value - math.exp(-0.5)) <= 4 * estimate.std_error


@pytest.mark.parametrize("convention", [SURFACE, SLICE])
def test_fourth_moment_converges_like_one_over_n(convention):
    report = convergence_report(V4, 1.0, [10, 30, 100, 300, 1000], convention)
    assert report.limit == pytest.approx(3.0, rel=1e-12)
    assert not report.degenerate
    assert -1.2 <= report.exponent <= -0.8
    assert report.r_squared >= 0.98
    errors = [row.abs_error for row in report.rows]
    assert all(a > b for a, b in zip(errors, errors[1:]))


def test_second_moment_under_surface_measure_is_degenerate():
    report = convergence_report(V2, 1.0, [10, 30, 100, 300, 1000], SURFACE)
    assert report.degenerate
    assert report.exponent is None
    assert all(row.abs_error <= 1e-9 for row in report.rows)


def test_second_moment_under_slice_converges():
    report = convergence_report(V2, 1.0, [10, 30, 100, 300, 1000], SLICE)
    assert -1.2 <= report.exponent <= -0.8


def test_convergence_report_validation():
    with pytest.raises(DomainError):
        convergence_report(V2, 1.0, [10, 10, 100])
    with pytest.raises(DomainError):
        convergence_report(INT_SQUARE, 1.0, [10, 30, 100], SLICE, samples_or_order=100)


def test_monte_carlo_convergence_of_constant_functional_is_degenerate():
    report = convergence_report(INT_SQUARE, 1.0, [10, 30, 100], SURFACE, samples_or_order=200, seed=4)
    assert report.method is EstimateMethod.MONTE_CARLO
    assert report.degenerate


@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_field_integral_of_point_value_by_quadrature(n):
    estimate = field_integral(PointCylinder(lambda v: v, (0.6,)), n, 1000, seed=1)
    assert estimate.method is EstimateMethod.QUADRATURE
    assert estimate.value == pytest.approx(0.5, abs=1e-12)


@pytest.mark.parametrize("n", [10, 100])
def test_field_integral_of_point_value_by_monte_carlo(n):
    estimate = field_integral(PointCylinder(lambda v: v, (0.6,)), n, 100_000, seed=n)
    assert abs(estimate.value - 0.5) <= 4 * estimate.std_error


def test_field_integral_of_linear_functional():
    series = VolterraSeries((lambda t: np.ones_like(t),))
    for n, estimate in field_convergence(series, [2, 10, 100], 50_000, seed=6):
        assert abs(estimate.value - 0.5) <= 4 * estimate.std_error


def test_field_integral_of_squared_mean():
    series = VolterraSeries((lambda t: np.zeros_like(t), lambda s, t: np.ones_like(s)))
    results = field_convergence(series, [2, 10, 100], 100_000, seed=7)
    for n, estimate in results:
        assert abs(estimate.value - (0.25 + 1 / (12 * n))) <= 4 * estimate.std_error
    values = [estimate.value for _, estimate in results]
    assert values[0] > values[1] > values[2]


def test_concentration_of_integral_functional():
    func = IntegralCylinder(1, lambda v, a: np.cos(v))
    profile = concentration_profile(func, 1.0, [10, 1000], 4000, seed=3)
    spreads = [estimate.spread for _, estimate in profile]
    assert spreads[1] < spreads[0] / 5
