"""
Gateaux integral module.
Mean values of functionals over the n-th sections of the L2 sphere, their
Gaussian limits, convergence studies and the field integral over 0 <= f <= 1.
"""

import os
import sys
import math
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy import special

# Add the parent directory to the path to import config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import BudgetError, DomainError, EvaluationError
from modules.functionals_module import (Functional, IntegralCylinder, PointCylinder,
                                        VolterraSeries, evaluate_rows)
from modules.rng_stats_module import (RunningMoments, SeedPath, loglog_fit, merge_moments,
                                      run_chunks, sweep_seed)
from modules.sphere_module import (MarginalConvention, SphereSection, marginal_exponent,
                                   parse_convention, sample_sphere_batch)

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'gateaux_module.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

MAX_LIMIT_ARITY = 4
QUADRATURE_TOLERANCE = 1e-9


class EstimateMethod(Enum):
    QUADRATURE = "quadrature"
    MONTE_CARLO = "monte-carlo"


@dataclass(frozen=True)
class MeanEstimate:
    """
    A mean value of a functional.

    n is the section or field size, None for a limiting value. spread is the
    sample standard deviation of U for Monte Carlo estimates.
    """
    value: float
    std_error: float
    n: Optional[int]
    method: EstimateMethod
    samples: int = 0
    spread: float = 0.0

    def __post_init__(self):
        if self.std_error < 0:
            raise DomainError(f"std_error must be nonnegative, got {self.std_error}")
        if self.method is EstimateMethod.QUADRATURE and self.std_error != 0:
            raise DomainError("Quadrature estimates carry no standard error")


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    mean: float
    abs_error: float
    std_error: float = 0.0


@dataclass(frozen=True)
class ConvergenceReport:
    """
    Section means along n, the Gaussian limit and the fitted decay of |mean - limit|.

    exponent, intercept and r_squared are None when the errors are all within
    tolerance (degenerate fit).
    """
    rows: Tuple[ConvergenceRow, ...]
    limit: float
    exponent: Optional[float]
    intercept: Optional[float]
    r_squared: Optional[float]
    degenerate: bool
    method: EstimateMethod


@lru_cache(maxsize=64)
def _legendre(order: int) -> Tuple[np.ndarray, np.ndarray]:
    return special.roots_legendre(order)


@lru_cache(maxsize=64)
def _hermite(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for expectations under N(0,1)."""
    nodes, weights = hermgauss(order)
    return nodes * math.sqrt(2.0), weights / math.sqrt(math.pi)


def _check_order(name: str, order: int) -> None:
    if int(order) != order or order < 2:
        raise DomainError(f"{name} must be an integer >= 2, got {order}")


def _finite(values: np.ndarray, what: str) -> np.ndarray:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        logger.error(f"Non-finite {what} at node {int(bad[0])}")
        raise EvaluationError(f"Non-finite {what}", int(bad[0]))
    return values


def theta_half_width(power: int) -> float:
    """Half-width of the theta window outside which cos^power drops below THETA_CUTOFF."""
    if power <= 0:
        return math.pi / 2
    return min(math.pi / 2, math.acos(config.THETA_CUTOFF ** (1.0 / power)))


def theta_mean(g: Callable[[np.ndarray], np.ndarray], half_width: float, power: int, order: int) -> float:
    """
    Mean of g(L sin(theta)) against cos^power(theta) on [-pi/2, pi/2].

    Gauss-Legendre on the window where cos^power is not negligible.
    """
    roots, weights = _legendre(order)
    window = theta_half_width(power)
    theta = window * roots
    weight = weights * np.cos(theta) ** power
    values = _finite(np.broadcast_to(np.asarray(g(half_width * np.sin(theta)), dtype=float), theta.shape),
                     "integrand value")
    return math.fsum(weight * values) / math.fsum(weight)


def section_mean_quadrature(
    func: PointCylinder,
    section: SphereSection,
    convention: Union[str, MarginalConvention] = MarginalConvention.SURFACE_MEASURE,
    order: int = config.LEGENDRE_ORDER,
) -> MeanEstimate:
    """
    Mean of U(x) = g(x(alpha)) over the n-th section by one-dimensional quadrature.

    The slice convention weights theta by cos^n, the surface measure by
    cos^(n-2); both come from z = R sqrt(n) sin(theta).

    Args:
        func: Point cylinder with a single point
        section: Section (n, R)
        convention: Marginal convention
        order: Gauss-Legendre order

    Returns:
        Deterministic MeanEstimate
    """
    if not isinstance(func, PointCylinder) or func.arity != 1:
        raise DomainError("Section-mean quadrature needs a point cylinder with one point")
    _check_order("order", order)
    convention = parse_convention(convention)
    power = int(round(2 * marginal_exponent(section.n, convention) + 1))
    try:
        value = theta_mean(func.g, section.euclidean_radius, power, order)
    except EvaluationError:
        raise
    except Exception as e:
        logger.error(f"Error evaluating section mean: {str(e)}")
        raise EvaluationError(f"Section-mean integrand failed: {e}") from e
    logger.info(f"Section mean n={section.n} R={section.R} {convention.value}: {value:.12g}")
    return MeanEstimate(value, 0.0, section.n, EstimateMethod.QUADRATURE)


def _mc_chunk_size(n: int) -> int:
    return max(1, min(config.MC_CHUNK_SIZE, config.MC_MAX_CHUNK_ELEMENTS // max(n, 1)))


def _moments_estimate(parts: Sequence[RunningMoments], n: Optional[int]) -> MeanEstimate:
    merged = merge_moments(parts)
    return MeanEstimate(merged.mean, merged.std_error, n, EstimateMethod.MONTE_CARLO,
                        merged.count, math.sqrt(merged.variance))


def section_mean_monte_carlo(
    func: Functional,
    section: SphereSection,
    samples: int,
    seed: int,
    workers: Optional[int] = None,
) -> MeanEstimate:
    """
    Mean of U over the n-th section under the uniform surface measure.

    Args:
        func: Any functional
        section: Section (n, R)
        samples: Number of uniform points, at least 2
        seed: Root seed; chunk i uses the stream (seed, i)
        workers: Threads running chunks

    Returns:
        MeanEstimate with std_error = sample std / sqrt(samples)
    """
    if samples < 2:
        raise DomainError(f"Monte Carlo needs at least 2 samples, got {samples}")
    n, radius = section.n, section.euclidean_radius

    def task(stream, start, count):
        points = sample_sphere_batch(n, radius, count, stream)
        return RunningMoments.from_values(evaluate_rows(func, points, start))

    parts = run_chunks(task, SeedPath(seed), samples, _mc_chunk_size(n), workers, desc="Section samples")
    estimate = _moments_estimate(parts, n)
    logger.info(f"Monte Carlo section mean n={n} R={section.R}: {estimate.value:.10g} +/- {estimate.std_error:.3g}")
    return estimate


def _point_limit(func: PointCylinder, R: float, hermite_order: int) -> float:
    p = func.arity
    if len(set(func.alphas)) < p:
        raise DomainError("Coincident points make the coordinates dependent; "
                          "use gaussian_limit_monte_carlo for this functional")
    if p > MAX_LIMIT_ARITY or hermite_order ** p > config.QUADRATURE_BUDGET:
        raise BudgetError(f"A {p}-point Gaussian quadrature exceeds the budget; use gaussian_limit_monte_carlo")
    nodes, weights = _hermite(hermite_order)
    mesh = [m.ravel() for m in np.meshgrid(*([nodes] * p), indexing="ij")]
    mesh_weights = np.prod([w.ravel() for w in np.meshgrid(*([weights] * p), indexing="ij")], axis=0)
    values = _finite(np.broadcast_to(np.asarray(func.g(*(R * m for m in mesh)), dtype=float), mesh_weights.shape),
                     "limit integrand")
    return math.fsum(mesh_weights * values)


def _integral_limit(func: IntegralCylinder, R: float, hermite_order: int, alpha_order: int) -> float:
    p = func.arity
    if p > MAX_LIMIT_ARITY or (alpha_order * hermite_order) ** p > config.QUADRATURE_BUDGET:
        raise BudgetError(f"A {p}-fold alpha and Gaussian quadrature exceeds the budget; "
                          "use gaussian_limit_monte_carlo")
    psi, psi_w = _hermite(hermite_order)
    roots, alpha_w = _legendre(alpha_order)
    alphas, alpha_w = (roots + 1.0) / 2.0, alpha_w / 2.0
    psi_combos = np.indices((hermite_order,) * p).reshape(p, -1)
    alpha_combos = np.indices((alpha_order,) * p).reshape(p, -1)
    psi_weights = np.prod(psi_w[psi_combos], axis=0)
    alpha_weights = np.prod(alpha_w[alpha_combos], axis=0)
    x_args = [R * psi[c][None, :] for c in psi_combos]
    block = max(1, config.MC_MAX_CHUNK_ELEMENTS // psi_combos.shape[1])
    partial = []
    for start in range(0, alpha_combos.shape[1], block):
        stop = start + block
        a_args = [alphas[c[start:stop]][:, None] for c in alpha_combos]
        values = np.broadcast_to(np.asarray(func.f(*x_args, *a_args), dtype=float),
                                 (a_args[0].shape[0], psi_combos.shape[1]))
        partial.append(float(alpha_weights[start:stop] @ _finite(values, "limit integrand") @ psi_weights))
    return math.fsum(partial)


def gaussian_limit_mean(
    func: Functional,
    R: float,
    hermite_order: int = config.HERMITE_ORDER,
    alpha_quadrature_order: int = config.ALPHA_QUADRATURE_ORDER,
) -> float:
    """
    Limit of the section means as n goes to infinity.

    Point cylinders: expectation of g(R psi_1, ..., R psi_p) under independent
    standard normals, by tensor Gauss-Hermite. Integral cylinders: the alpha
    integrals by Gauss-Legendre around the same Gaussian expectation. Volterra
    series: the constant term, since every white-noise average vanishes.

    Args:
        func: Functional
        R: Radius of the L2 sphere
        hermite_order: Gauss-Hermite nodes per Gaussian variable
        alpha_quadrature_order: Gauss-Legendre nodes per alpha variable

    Returns:
        The limiting mean value
    """
    if not R > 0:
        raise DomainError(f"R must be positive, got {R}")
    _check_order("hermite_order", hermite_order)
    _check_order("alpha_quadrature_order", alpha_quadrature_order)
    try:
        if isinstance(func, PointCylinder):
            value = _point_limit(func, R, hermite_order)
        elif isinstance(func, IntegralCylinder):
            value = _integral_limit(func, R, hermite_order, alpha_quadrature_order)
        elif isinstance(func, VolterraSeries):
            value = float(func.constant)
        else:
            raise DomainError(f"No Gaussian limit rule for {type(func).__name__}")
    except (BudgetError, DomainError, EvaluationError):
        raise
    except Exception as e:
        logger.error(f"Error computing Gaussian limit: {str(e)}")
        raise EvaluationError(f"Gaussian-limit integrand failed: {e}") from e
    logger.info(f"Gaussian limit of {type(func).__name__} at R={R}: {value:.12g}")
    return value


def gaussian_limit_monte_carlo(
    func: Functional,
    R: float,
    samples: int,
    seed: int,
    workers: Optional[int] = None,
) -> MeanEstimate:
    """
    Monte Carlo version of the Gaussian limit.

    Distinct points get independent N(0, R^2) values, coincident points share
    one; integral cylinders also draw their alphas uniformly.
    """
    if not R > 0 or samples < 2:
        raise DomainError(f"Need R > 0 and samples >= 2, got R={R}, samples={samples}")
    if isinstance(func, VolterraSeries):
        return MeanEstimate(float(func.constant), 0.0, None, EstimateMethod.QUADRATURE)

    if isinstance(func, PointCylinder):
        _, labels = np.unique(np.array(func.alphas), return_inverse=True)

        def integrand(stream, count):
            gaussians = R * stream.standard_normal((count, int(labels.max()) + 1))
            return func.g(*(gaussians[:, label] for label in labels))
    elif isinstance(func, IntegralCylinder):
        def integrand(stream, count):
            gaussians = R * stream.standard_normal((count, func.arity))
            alphas = stream.random((count, func.arity))
            return func.f(*(gaussians[:, k] for k in range(func.arity)),
                          *(alphas[:, k] for k in range(func.arity)))
    else:
        raise DomainError(f"No Gaussian limit rule for {type(func).__name__}")

    def task(stream, start, count):
        try:
            values = np.broadcast_to(np.asarray(integrand(stream, count), dtype=float), (count,))
        except Exception as e:
            raise EvaluationError(f"Gaussian-limit integrand failed: {e}", start) from e
        bad = np.flatnonzero(~np.isfinite(values))
        if bad.size:
            raise EvaluationError("Non-finite Gaussian-limit integrand", start + int(bad[0]))
        return RunningMoments.from_values(values)

    parts = run_chunks(task, SeedPath(seed), samples, config.MC_CHUNK_SIZE, workers, desc="Limit samples")
    return _moments_estimate(parts, None)


def _validated_n_list(n_list: Sequence[int]) -> List[int]:
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise DomainError("n_list must not be empty")
    if any(b <= a for a, b in zip(n_list, n_list[1:])) or n_list[0] < 1:
        raise DomainError(f"n_list must be positive and strictly increasing, got {n_list}")
    return n_list


def convergence_report(
    func: Functional,
    R: float,
    n_list: Sequence[int],
    convention: Union[str, MarginalConvention] = MarginalConvention.SURFACE_MEASURE,
    samples_or_order: Optional[int] = None,
    seed: int = config.DEFAULT_SEED,
    workers: Optional[int] = None,
) -> ConvergenceReport:
    """
    Section means along n_list against the Gaussian limit, with a log-log fit.

    Single-point cylinders use quadrature (samples_or_order is the Legendre
    order); other functionals use surface-measure Monte Carlo
    (samples_or_order is the sample count, seed i-th n uses (seed, i)).
    The fit is skipped and flagged when every error is within tolerance.
    """
    n_list = _validated_n_list(n_list)
    convention = parse_convention(convention)
    quadrature = isinstance(func, PointCylinder) and func.arity == 1
    if quadrature:
        limit = gaussian_limit_mean(func, R)
    else:
        if convention is not MarginalConvention.SURFACE_MEASURE:
            raise DomainError("Monte Carlo section means realize the surface measure only")
        try:
            limit = gaussian_limit_mean(func, R)
        except (BudgetError, DomainError):
            limit = gaussian_limit_monte_carlo(func, R, samples_or_order or config.MC_CHUNK_SIZE * 10, seed).value

    rows = []
    within_tolerance = []
    for index, n in enumerate(n_list):
        section = SphereSection(n, R)
        if quadrature:
            estimate = section_mean_quadrature(func, section, convention, samples_or_order or config.LEGENDRE_ORDER)
            tolerance = QUADRATURE_TOLERANCE * max(1.0, abs(limit))
        else:
            estimate = section_mean_monte_carlo(func, section, samples_or_order or config.MC_CHUNK_SIZE * 10,
                                                sweep_seed(seed, index), workers)
            tolerance = max(3.0 * estimate.std_error, 1e-12 * max(1.0, abs(limit)))
        error = abs(estimate.value - limit)
        rows.append(ConvergenceRow(n, estimate.value, error, estimate.std_error))
        within_tolerance.append(error <= tolerance)

    method = EstimateMethod.QUADRATURE if quadrature else EstimateMethod.MONTE_CARLO
    positive = [(row.n, row.abs_error) for row in rows if row.abs_error > 0]
    if all(within_tolerance) or len(positive) < 3:
        logger.warning(f"Convergence fit skipped: errors within tolerance for all n in {n_list}")
        return ConvergenceReport(tuple(rows), limit, None, None, None, True, method)
    fit = loglog_fit(positive)
    logger.info(f"Convergence exponent {fit.exponent:.4f} (R^2 = {fit.r_squared:.4f}) over n = {n_list}")
    return ConvergenceReport(tuple(rows), limit, fit.exponent, fit.intercept, fit.r_squared, False, method)


def field_integral(
    func: Functional,
    n: int,
    samples: int,
    seed: int,
    order: int = config.FIELD_QUADRATURE_ORDER,
    workers: Optional[int] = None,
) -> MeanEstimate:
    """
    The n-fold average I_n of U over step functions with values in [0,1].

    Point cylinders on at most four cells use tensor Gauss-Legendre; every
    other case averages U over independent uniform cell values.

    Args:
        func: Functional
        n: Number of cells
        samples: Monte Carlo sample count
        seed: Root seed
        order: Gauss-Legendre nodes per cell value for the quadrature path
        workers: Threads running chunks
    """
    if int(n) != n or n < 1:
        raise DomainError(f"n must be a positive integer, got {n}")
    n = int(n)
    if isinstance(func, PointCylinder) and n <= 4:
        roots, weights = _legendre(order)
        nodes, weights = (roots + 1.0) / 2.0, weights / 2.0
        grid = np.stack([m.ravel() for m in np.meshgrid(*([nodes] * n), indexing="ij")], axis=1)
        grid_weights = np.prod([w.ravel() for w in np.meshgrid(*([weights] * n), indexing="ij")], axis=0)
        value = math.fsum(grid_weights * evaluate_rows(func, grid))
        logger.info(f"Field integral n={n} by {order}^{n}-node quadrature: {value:.12g}")
        return MeanEstimate(value, 0.0, n, EstimateMethod.QUADRATURE)

    if samples < 2:
        raise DomainError(f"Monte Carlo needs at least 2 samples, got {samples}")

    def task(stream, start, count):
        return RunningMoments.from_values(evaluate_rows(func, stream.random((count, n)), start))

    parts = run_chunks(task, SeedPath(seed), samples, _mc_chunk_size(n), workers, desc="Field samples")
    estimate = _moments_estimate(parts, n)
    logger.info(f"Field integral n={n}: {estimate.value:.10g} +/- {estimate.std_error:.3g}")
    return estimate


def field_convergence(func: Functional, n_list: Sequence[int], samples: int, seed: int,
                      workers: Optional[int] = None) -> List[Tuple[int, MeanEstimate]]:
    """Field integrals along a refinement sequence; the i-th n uses seed path (seed, i)."""
    return [(n, field_integral(func, n, samples, sweep_seed(seed, i), workers=workers))
            for i, n in enumerate(_validated_n_list(n_list))]


def concentration_profile(func: Functional, R: float, n_list: Sequence[int], samples: int, seed: int,
                          workers: Optional[int] = None) -> List[Tuple[int, MeanEstimate]]:
    """
    Monte Carlo section means with the spread of U over each section.

    Integral functionals concentrate: their spread shrinks as n grows.
    """
    return [(n, section_mean_monte_carlo(func, SphereSection(n, R), samples, sweep_seed(seed, i), workers))
            for i, n in enumerate(_validated_n_list(n_list))]