"""
Newtonian potential module.
Green's three-term decomposition on a ball in 3-space: single-layer,
double-layer and volume potentials by product quadrature.
"""

import os
import sys
import math
import logging
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, Optional, Tuple

import numpy as np
from scipy import special

# Add the parent directory to the path to import config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import DomainError, EvaluationError

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'potential_module.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

FOUR_PI = 4.0 * math.pi
BOUNDARY_TOLERANCE = 1e-12

PointFunction = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=32)
def angular_rule(polar_order: int, azimuth_order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Product rule on the unit sphere: Gauss-Legendre in cos(theta) times the
    trapezoid rule in phi. Weights sum to 4 pi.
    """
    if polar_order < 2 or azimuth_order < 3:
        raise DomainError(f"Need polar_order >= 2 and azimuth_order >= 3, got {polar_order}, {azimuth_order}")
    u, u_weights = special.roots_legendre(polar_order)
    phi = 2.0 * math.pi * np.arange(azimuth_order) / azimuth_order
    uu, pp = np.meshgrid(u, phi, indexing="ij")
    sine = np.sqrt(1.0 - uu ** 2)
    directions = np.stack([sine * np.cos(pp), sine * np.sin(pp), uu], axis=-1).reshape(-1, 3)
    weights = np.repeat(u_weights * (2.0 * math.pi / azimuth_order), azimuth_order)
    directions.flags.writeable = False
    weights.flags.writeable = False
    return directions, weights


@dataclass(frozen=True, eq=False)
class BoundarySpec:
    """
    A sphere of radius a centred at the origin with a surface quadrature.

    points, normals and weights describe the nodes Q, the outward normals
    Q/a and the area weights.
    """
    radius: float
    points: np.ndarray = field(repr=False)
    normals: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    polar_order: int = config.GREEN_POLAR_ORDER
    azimuth_order: int = config.GREEN_AZIMUTH_ORDER

    def __post_init__(self):
        if not self.radius > 0:
            raise DomainError(f"Boundary radius must be positive, got {self.radius}")
        area = FOUR_PI * self.radius ** 2
        if abs(math.fsum(self.weights) - area) > 1e-8 * area:
            raise DomainError("Boundary weights do not add up to the sphere area")
        if np.max(np.abs(np.linalg.norm(self.points, axis=1) - self.radius)) > 1e-12 * max(1.0, self.radius):
            raise DomainError("Boundary nodes must lie on the sphere")
        if np.max(np.abs(self.normals - self.points / self.radius)) > 1e-12:
            raise DomainError("Boundary normals must be Q/a")

    @classmethod
    def sphere(cls, radius: float, polar_order: int = config.GREEN_POLAR_ORDER,
               azimuth_order: int = config.GREEN_AZIMUTH_ORDER) -> "BoundarySpec":
        directions, weights = angular_rule(polar_order, azimuth_order)
        return cls(float(radius), radius * directions, directions, radius ** 2 * weights,
                   polar_order, azimuth_order)


@dataclass(frozen=True)
class FieldSample:
    """
    A field U on the closed ball with its normal derivative on the sphere and,
    optionally, its Laplacian. Callables take (m, 3) point arrays.
    """
    U: PointFunction
    dU_dnu: PointFunction
    laplacian: Optional[PointFunction] = None


@dataclass(frozen=True)
class GreenTerms:
    single: float
    double: float
    volume: float
    total: float
    near_boundary: bool


def _point(P) -> np.ndarray:
    P = np.asarray(P, dtype=float).ravel()
    if P.shape != (3,) or not np.all(np.isfinite(P)):
        raise DomainError(f"P must be a finite point in 3-space, got {P}")
    return P


def _check_position(boundary: BoundarySpec, P: np.ndarray, inside: Optional[bool]) -> float:
    distance = float(np.linalg.norm(P))
    if abs(distance - boundary.radius) <= BOUNDARY_TOLERANCE * boundary.radius:
        raise DomainError(f"P = {P.tolist()} lies on the boundary; the kernel is singular there")
    if inside is not None and bool(inside) != (distance < boundary.radius):
        raise DomainError(f"P = {P.tolist()} is {'outside' if inside else 'inside'} the sphere of radius "
                          f"{boundary.radius}, contrary to inside={inside}")
    return distance


def _values(func: PointFunction, points: np.ndarray, what: str) -> np.ndarray:
    try:
        values = np.broadcast_to(np.asarray(func(points), dtype=float), (points.shape[0],))
    except Exception as e:
        logger.error(f"Error evaluating {what}: {str(e)}")
        raise EvaluationError(f"{what} failed: {e}") from e
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise EvaluationError(f"Non-finite {what}", int(bad[0]))
    return values


def single_layer(boundary: BoundarySpec, density: PointFunction, P, inside: Optional[bool] = None) -> float:
    """
    Single-layer potential (1/4 pi) of density(Q)/|P - Q| over the sphere.

    Args:
        boundary: Sphere and surface rule
        density: Surface density
        P: Evaluation point, not on the sphere
        inside: Expected side of P, checked when given

    Returns:
        The potential at P
    """
    P = _point(P)
    _check_position(boundary, P, inside)
    sigma = _values(density, boundary.points, "single-layer density")
    r = np.linalg.norm(P - boundary.points, axis=1)
    return math.fsum(boundary.weights * sigma / r) / FOUR_PI


def double_layer(boundary: BoundarySpec, moment: PointFunction, P, inside: Optional[bool] = None) -> float:
    """
    Double-layer potential -(1/4 pi) of moment(Q) times the outward normal
    derivative in Q of 1/|P - Q|. A unit moment gives 1 inside and 0 outside.
    """
    P = _point(P)
    _check_position(boundary, P, inside)
    mu = _values(moment, boundary.points, "double-layer moment")
    offset = P - boundary.points
    r = np.linalg.norm(offset, axis=1)
    kernel = np.einsum("ij,ij->i", offset, boundary.normals) / r ** 3
    return -math.fsum(boundary.weights * mu * kernel) / FOUR_PI


def _frame(direction: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing direction to an orthonormal frame."""
    helper = np.eye(3)[int(np.argmin(np.abs(direction)))]
    first = np.cross(direction, helper)
    first /= np.linalg.norm(first)
    return first, np.cross(direction, first)


def volume_term(boundary: BoundarySpec, laplacian: PointFunction, P, shells: int = config.GREEN_VOLUME_SHELLS) -> float:
    """
    Volume potential -(1/4 pi) of laplacian(Q)/|P - Q| over the ball.

    Radial Gauss-Legendre on [0, |P|] and [|P|, a], shells/2 nodes each. On
    each sphere of radius rho the polar angle about P is parametrized by the
    distance s = |P - Q|, which cancels the kernel: the angular integral
    becomes (1/(rho |P|)) times the integral over s in [|rho - |P||, rho + |P|].
    """
    P = _point(P)
    p = _check_position(boundary, P, True)
    a = boundary.radius
    half = max(1, shells // 2)
    roots, weights = special.roots_legendre(half)
    s_roots, s_weights = special.roots_legendre(boundary.polar_order)
    phi = 2.0 * math.pi * np.arange(boundary.azimuth_order) / boundary.azimuth_order
    phi_weight = 2.0 * math.pi / boundary.azimuth_order

    if p < 1e-14 * a:
        # P at the centre: the kernel is 1/rho on each shell
        rho = (roots + 1.0) * a / 2.0
        rho_w = weights * a / 2.0
        directions, angular_w = angular_rule(boundary.polar_order, boundary.azimuth_order)
        total = []
        for r_node, r_weight in zip(rho, rho_w):
            lap = _values(laplacian, r_node * directions, "Laplacian")
            total.append(r_weight * r_node * math.fsum(angular_w * lap))
        return -math.fsum(total) / FOUR_PI

    axis = P / p
    e1, e2 = _frame(axis)
    panels = [(0.0, p), (p, a)]
    total = []
    for lo, hi in panels:
        if hi <= lo:
            continue
        rho = lo + (roots + 1.0) * (hi - lo) / 2.0
        rho_w = weights * (hi - lo) / 2.0
        for r_node, r_weight in zip(rho, rho_w):
            s_lo, s_hi = abs(r_node - p), r_node + p
            s = s_lo + (s_roots + 1.0) * (s_hi - s_lo) / 2.0
            s_w = s_weights * (s_hi - s_lo) / 2.0
            u = np.clip((r_node ** 2 + p ** 2 - s ** 2) / (2.0 * r_node * p), -1.0, 1.0)
            sine = np.sqrt(1.0 - u ** 2)
            uu, pp = np.meshgrid(u, phi, indexing="ij")
            ss = np.meshgrid(sine, phi, indexing="ij")[0]
            points = r_node * (uu[..., None] * axis
                               + ss[..., None] * (np.cos(pp)[..., None] * e1 + np.sin(pp)[..., None] * e2))
            lap = _values(laplacian, points.reshape(-1, 3), "Laplacian").reshape(uu.shape)
            shell = math.fsum((s_w[:, None] * lap).ravel()) * phi_weight / (r_node * p)
            total.append(r_weight * r_node ** 2 * shell)
    return -math.fsum(total) / FOUR_PI


def green_terms(boundary: BoundarySpec, field_sample: FieldSample, P,
                shells: int = config.GREEN_VOLUME_SHELLS) -> GreenTerms:
    """
    The three terms of Green's representation of U at an interior point.

    Args:
        boundary: Sphere and surface rule
        field_sample: U, its normal derivative and optionally its Laplacian
        P: Interior point
        shells: Radial nodes for the volume term

    Returns:
        GreenTerms; volume is 0 when no Laplacian is given (U harmonic)
    """
    P = _point(P)
    distance = float(np.linalg.norm(P))
    if distance >= boundary.radius * (1.0 - BOUNDARY_TOLERANCE):
        raise DomainError(f"P = {P.tolist()} must lie strictly inside the sphere of radius {boundary.radius}")
    near = distance > config.NEAR_BOUNDARY_FRACTION * boundary.radius
    if near:
        logger.warning(f"P = {P.tolist()} is within {1 - config.NEAR_BOUNDARY_FRACTION:.0%} of the boundary; "
                       f"the surface rule loses accuracy there")
    single = single_layer(boundary, field_sample.dU_dnu, P, inside=True)
    double = double_layer(boundary, field_sample.U, P, inside=True)
    volume = 0.0
    if field_sample.laplacian is not None:
        volume = volume_term(boundary, field_sample.laplacian, P, shells)
    total = single + double + volume
    logger.info(f"Green terms at P={P.tolist()}: single={single:.12g} double={double:.12g} "
                f"volume={volume:.12g} total={total:.12g}")
    return GreenTerms(single, double, volume, total, near)


def green_reconstruct(boundary: BoundarySpec, field_sample: FieldSample, P) -> float:
    """U(P) rebuilt from boundary data, plus the volume term when a Laplacian is given."""
    return green_terms(boundary, field_sample, P).total


def _gradient_field(U, gradient, laplacian=None) -> FieldSample:
    def normal_derivative(q):
        return np.einsum("ij,ij->i", gradient(q), q) / np.linalg.norm(q, axis=1)
    return FieldSample(U, normal_derivative, laplacian)


def _columns(*parts):
    return lambda q: np.stack([np.broadcast_to(part(q), (q.shape[0],)) for part in parts], axis=1)


_ZERO = lambda q: np.zeros(q.shape[0])  # noqa: E731
_X = lambda q: q[:, 0]  # noqa: E731
_Y = lambda q: q[:, 1]  # noqa: E731
_Z = lambda q: q[:, 2]  # noqa: E731

FIELDS: Dict[str, FieldSample] = {
    "one": _gradient_field(lambda q: np.ones(q.shape[0]), _columns(_ZERO, _ZERO, _ZERO)),
    "x": _gradient_field(_X, _columns(lambda q: np.ones(q.shape[0]), _ZERO, _ZERO)),
    "y": _gradient_field(_Y, _columns(_ZERO, lambda q: np.ones(q.shape[0]), _ZERO)),
    "z": _gradient_field(_Z, _columns(_ZERO, _ZERO, lambda q: np.ones(q.shape[0]))),
    "xy": _gradient_field(lambda q: q[:, 0] * q[:, 1], _columns(_Y, _X, _ZERO)),
    "x2-y2": _gradient_field(lambda q: q[:, 0] ** 2 - q[:, 1] ** 2,
                             _columns(lambda q: 2 * q[:, 0], lambda q: -2 * q[:, 1], _ZERO)),
    "2z2-x2-y2": _gradient_field(lambda q: 2 * q[:, 2] ** 2 - q[:, 0] ** 2 - q[:, 1] ** 2,
                                 _columns(lambda q: -2 * q[:, 0], lambda q: -2 * q[:, 1], lambda q: 4 * q[:, 2])),
    "r2": _gradient_field(lambda q: np.einsum("ij,ij->i", q, q), lambda q: 2.0 * q,
                          lambda q: np.full(q.shape[0], 6.0)),
}

HARMONIC_FIELDS = ("one", "x", "y", "z", "xy", "x2-y2", "2z2-x2-y2")


def named_field(name: str) -> FieldSample:
    """Built-in test field by name."""
    try:
        return FIELDS[name]
    except KeyError:
        raise DomainError(f"Unknown field '{name}'; expected one of {sorted(FIELDS)}") from None


def field_value(name: str, P) -> float:
    """Exact value of a built-in field at P."""
    return float(named_field(name).U(_point(P)[None, :])[0])
