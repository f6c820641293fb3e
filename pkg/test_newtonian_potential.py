"""
Tests for layer potentials and Green's decomposition on the ball.
"""

import os
import sys
import math

import numpy as np
import pytest

# Add the parent directory to the path to import config and modules
sys.path.append(os.path.dirname(os.path.abspath(__file__)))
from modules.errors_module import DomainError, EvaluationError
from modules.potential_module import (HARMONIC_FIELDS, BoundarySpec, FieldSample, angular_rule, double_layer,
                                      field_value, green_reconstruct, green_terms, named_field,
                                      single_layer, volume_term)

ONE = lambda q: np.ones(q.shape[0])  # noqa: E731
ZERO = lambda q: np.zeros(q.shape[0])  # noqa: E731


@pytest.fixture
def unit_ball():
    return BoundarySpec.sphere(1.0)


def test_angular_rule_integrates_polynomials():
    directions, weights = angular_rule(8, 16)
    assert math.fsum(weights) == pytest.approx(4 * math.pi, rel=1e-14)
    np.testing.assert_allclose(np.linalg.norm(directions, axis=1), 1.0, rtol=1e-14)
    assert math.fsum(weights * directions[:, 2] ** 2) == pytest.approx(4 * math.pi / 3, rel=1e-13)
    assert abs(math.fsum(weights * directions[:, 0] * directions[:, 1])) < 1e-13
    with pytest.raises(DomainError):
        angular_rule(1, 16)


def test_boundary_spec_validation():
    boundary = BoundarySpec.sphere(2.0, 6, 12)
    assert math.fsum(boundary.weights) == pytest.approx(16 * math.pi, rel=1e-12)
    with pytest.raises(DomainError):
        BoundarySpec.sphere(0.0)
    with pytest.raises(DomainError):
        BoundarySpec(1.0, boundary.points, boundary.normals, boundary.weights)


def test_single_layer_of_unit_density(unit_ball):
    assert single_layer(unit_ball, ONE, [0, 0, 0]) == pytest.approx(1.0, abs=1e-12)
    assert single_layer(unit_ball, ONE, [0, 2.0, 0], inside=False) == pytest.approx(0.5, abs=1e-10)
    assert single_layer(unit_ball, ZERO, [0.3, 0, 0]) == 0.0


@pytest.mark.parametrize("P", [[0, 0, 0], [0.3, -0.2, 0.1], [0.0, 0.0, 0.6]])
def test_double_layer_of_unit_moment_inside(unit_ball, P):
    assert double_layer(unit_ball, ONE, P, inside=True) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("P", [[2.0, 0, 0], [1.5, 1.5, -1.0]])
def test_double_layer_of_unit_moment_outside(unit_ball, P):
    assert abs(double_layer(unit_ball, ONE, P, inside=False)) <= 1e-6


def test_layers_reject_boundary_points(unit_ball):
    with pytest.raises(DomainError):
        single_layer(unit_ball, ONE, [1.0, 0, 0])
    with pytest.raises(DomainError):
        double_layer(unit_ball, ONE, [0, 0, -1.0])


def test_layers_check_the_expected_side(unit_ball):
    with pytest.raises(DomainError):
        single_layer(unit_ball, ONE, [2.0, 0, 0], inside=True)
    with pytest.raises(DomainError):
        double_layer(unit_ball, ONE, [0.1, 0, 0], inside=False)


def test_layers_report_non_finite_densities(unit_ball):
    with pytest.raises(EvaluationError):
        single_layer(unit_ball, lambda q: np.where(q[:, 2] > 0.5, np.nan, 1.0), [0, 0, 0])


def test_constant_field_reconstructs_to_one(unit_ball):
    for P in ([0, 0, 0], [0.2, 0.1, -0.3], [0.0, 0.5, 0.5]):
        assert green_reconstruct(unit_ball, named_field("one"), P) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("name", HARMONIC_FIELDS)
@pytest.mark.parametrize("P", [[0.0, 0.0, 0.0], [0.2, 0.0, 0.0], [0.3, 0.1, -0.2], [0.0, -0.25, 0.4]])
def test_harmonic_fields_reconstruct(unit_ball, name, P):
    assert green_reconstruct(unit_ball, named_field(name), P) == pytest.approx(field_value(name, P), abs=1e-4)


@pytest.mark.parametrize("radius", [0.5, 3.0])
def test_reconstruction_on_other_radii(radius):
    boundary = BoundarySpec.sphere(radius)
    P = [0.1 * radius, 0.2 * radius, -0.1 * radius]
    assert green_reconstruct(boundary, named_field("xy"), P) == pytest.approx(field_value("xy", P), abs=1e-4)


def test_terms_add_up(unit_ball):
    terms = green_terms(unit_ball, named_field("x2-y2"), [0.3, 0.1, 0.0])
    assert terms.total == pytest.approx(terms.single + terms.double + terms.volume, abs=1e-12)
    assert terms.volume == 0.0
    assert not terms.near_boundary


@pytest.mark.parametrize("P", [[0.0, 0.0, 0.0], [0.3, 0.0, 0.0], [0.2, -0.4, 0.1], [0.0, 0.0, 0.8]])
def test_radius_squared_needs_the_volume_term(unit_ball, P):
    terms = green_terms(unit_ball, named_field("r2"), P)
    p2 = float(np.dot(P, P))
    assert terms.total == pytest.approx(p2, abs=1e-3)
    assert terms.volume == pytest.approx(-3.0 + p2, abs=1e-8)
    without_volume = FieldSample(named_field("r2").U, named_field("r2").dU_dnu)
    assert green_reconstruct(unit_ball, without_volume, P) == pytest.approx(3.0, abs=1e-5)


def test_volume_term_of_constant_laplacian_at_the_centre(unit_ball):
    assert volume_term(unit_ball, lambda q: np.full(q.shape[0], 6.0), [0, 0, 0]) == pytest.approx(-3.0, abs=1e-10)


def test_surface_rule_refinement_reduces_the_error():
    P = [0.0, 0.0, 0.8]
    errors = []
    for polar, azimuth in [(4, 8), (8, 16), (16, 32)]:
        boundary = BoundarySpec.sphere(1.0, polar, azimuth)
        errors.append(abs(green_reconstruct(boundary, named_field("z"), P) - 0.8))
    assert errors[0] > errors[1] > errors[2]


def test_points_near_the_boundary_are_flagged(unit_ball):
    terms = green_terms(unit_ball, named_field("x"), [0.95, 0.0, 0.0])
    assert terms.near_boundary


def test_reconstruction_needs_an_interior_point(unit_ball):
    with pytest.raises(DomainError):
        green_reconstruct(unit_ball, named_field("x"), [1.2, 0, 0])
    with pytest.raises(DomainError):
        green_reconstruct(unit_ball, named_field("x"), [0, 1.0, 0])
    with pytest.raises(DomainError):
        green_reconstruct(unit_ball, named_field("x"), [0, 1.0])


def test_unknown_field_name():
    with pytest.raises(DomainError):
        named_field("x3")
