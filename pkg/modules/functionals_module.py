"""
Functionals module.
Step functions on equal partitions of [0,1], the three families of functionals
averaged by the experiments, and the Gateaux directional differential.
"""

import os
import sys
import logging
import threading
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np
from scipy import special

# Add the parent directory to the path to import config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import BudgetError, DomainError, EvaluationError
from modules.sphere_module import SphereSection

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'functionals_module.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


def cell_index(alphas, n: int) -> np.ndarray:
    """
    Cell holding each alpha on the partition of [0,1] into n equal cells.

    Cells are half-open [(i-1)/n, i/n); alpha = 1 belongs to the last cell.
    """
    alphas = np.asarray(alphas, dtype=float)
    if np.any(alphas < 0.0) or np.any(alphas > 1.0):
        raise DomainError(f"Points must lie in [0,1], got {alphas}")
    return np.minimum(np.floor(alphas * n).astype(int), n - 1)


@lru_cache(maxsize=256)
def cell_nodes(n: int, order: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Gauss-Legendre nodes inside every cell of the n-partition.

    Returns:
        (node positions, owning cell of each node, weights summing to 1)
    """
    roots, weights = special.roots_legendre(order)
    cells = np.repeat(np.arange(n), order)
    positions = (cells + np.tile((roots + 1.0) / 2.0, n)) / n
    node_weights = np.tile(weights / 2.0, n) / n
    for array in (cells, positions, node_weights):
        array.setflags(write=False)
    return positions, cells, node_weights


@dataclass(frozen=True, eq=False)
class StepFunction:
    """
    x(alpha) = values[i] on the i-th of n equal cells of [0,1], with x(1) = values[-1].
    """
    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).ravel()
        if values.size < 1:
            raise DomainError("A step function needs at least one cell")
        if not np.all(np.isfinite(values)):
            raise DomainError("Step function values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @classmethod
    def from_callable(cls, x: Callable[[np.ndarray], np.ndarray], n: int, order: int = 4) -> "StepFunction":
        """Project a continuous function onto the n-partition by cell averages."""
        positions, cells, weights = cell_nodes(n, order)
        averages = np.bincount(cells, weights=np.asarray(x(positions), dtype=float) * weights, minlength=n) * n
        return cls(averages)

    def __call__(self, alpha):
        return self.values[cell_index(alpha, self.n)]

    def refine(self, factor: int) -> "StepFunction":
        """The same function written on the partition into n*factor cells."""
        return StepFunction(np.repeat(self.values, factor))

    def combine(self, other: "StepFunction", scale: float) -> "StepFunction":
        """Return self + scale * other."""
        if other.n != self.n:
            raise DomainError(f"Partition sizes differ: {self.n} and {other.n}")
        return StepFunction(self.values + scale * other.values)

    def squared_norm(self) -> float:
        """L2 norm squared, (1/n) sum x_i^2."""
        return float(np.dot(self.values, self.values) / self.n)

    def on_section(self, section: SphereSection, rtol: float = 1e-9) -> bool:
        if section.n != self.n:
            return False
        target = section.n * section.R ** 2
        return abs(float(np.dot(self.values, self.values)) - target) <= rtol * target


class Functional(ABC):
    """A real-valued map on step functions, evaluated row-wise on value matrices."""

    @property
    @abstractmethod
    def arity(self) -> int:
        """Number of point values or integration variables the functional uses."""

    @abstractmethod
    def evaluate_batch(self, values: np.ndarray) -> np.ndarray:
        """
        Evaluate on many step functions at once.

        Args:
            values: Array of shape (m, n), one step function per row

        Returns:
            Array of shape (m,)
        """

    def evaluate(self, x: StepFunction) -> float:
        return evaluate(self, x)


def _as_rows(result, rows: int) -> np.ndarray:
    return np.array(np.broadcast_to(np.asarray(result, dtype=float), (rows,)))


@dataclass(frozen=True, eq=False)
class PointCylinder(Functional):
    """U(x) = g(x(alpha_1), ..., x(alpha_p)); g takes p array arguments."""
    g: Callable[..., np.ndarray]
    alphas: Tuple[float, ...]

    def __post_init__(self):
        alphas = tuple(float(a) for a in np.atleast_1d(self.alphas))
        if len(alphas) < 1:
            raise DomainError("A point cylinder needs at least one point")
        cell_index(alphas, 1)
        object.__setattr__(self, "alphas", alphas)

    @property
    def arity(self) -> int:
        return len(self.alphas)

    def evaluate_batch(self, values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(values)
        columns = cell_index(self.alphas, values.shape[1])
        return _as_rows(self.g(*(values[:, c] for c in columns)), values.shape[0])


@dataclass(frozen=True, eq=False)
class IntegralCylinder(Functional):
    """
    U(x) = integral over [0,1]^p of f(x(a_1), ..., x(a_p), a_1, ..., a_p).

    f takes 2p array arguments. On a step function x is constant on every
    cell, so only the explicit dependence on the a_i needs quadrature:
    cell_order Gauss-Legendre nodes per cell. An integrand without explicit
    a_i dependence is exact with cell_order=1.
    """
    p: int
    f: Callable[..., np.ndarray]
    cell_order: int = config.CELL_QUADRATURE_ORDER

    def __post_init__(self):
        if int(self.p) != self.p or self.p < 1:
            raise DomainError(f"Integral cylinder order must be a positive integer, got {self.p}")
        if self.cell_order < 1:
            raise DomainError(f"cell_order must be positive, got {self.cell_order}")

    @property
    def arity(self) -> int:
        return int(self.p)

    def evaluate_batch(self, values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(values)
        rows, n = values.shape
        positions, cells, weights = cell_nodes(n, self.cell_order)
        if self.p == 1:
            out = np.empty(rows)
            block = max(1, config.MC_MAX_CHUNK_ELEMENTS // cells.size)
            for start in range(0, rows, block):
                chunk = values[start:start + block]
                integrand = np.broadcast_to(np.asarray(self.f(chunk[:, cells], positions[None, :]), dtype=float),
                                            (chunk.shape[0], cells.size))
                out[start:start + chunk.shape[0]] = integrand @ weights
            return out

        combos_count = cells.size ** self.p
        if combos_count > config.QUADRATURE_BUDGET:
            raise BudgetError(f"{combos_count} cell combinations exceed the budget of {config.QUADRATURE_BUDGET}; "
                              "use a coarser partition")
        combos = np.indices((cells.size,) * self.p).reshape(self.p, -1)
        combo_weights = np.prod(weights[combos], axis=0)
        alpha_args = [positions[c][None, :] for c in combos]
        out = np.empty(rows)
        block = max(1, config.MC_MAX_CHUNK_ELEMENTS // combos.shape[1])
        for start in range(0, rows, block):
            chunk = values[start:start + block]
            x_args = [chunk[:, cells[c]] for c in combos]
            integrand = np.broadcast_to(np.asarray(self.f(*x_args, *alpha_args), dtype=float),
                                        (chunk.shape[0], combos.shape[1]))
            out[start:start + chunk.shape[0]] = integrand @ combo_weights
        return out


def _cell_integrals(kernel: Callable[..., np.ndarray], degree: int, n: int, order: int) -> np.ndarray:
    """
    Integral of a kernel over every product of cells, shape (n,) * degree.

    The first axis is processed in blocks of cells to bound memory.
    """
    positions, _, weights = cell_nodes(n, order)
    out = np.empty((n,) * degree)
    per_cell = order * positions.size ** (degree - 1)
    block = max(1, config.MC_MAX_CHUNK_ELEMENTS // per_cell)
    for start in range(0, n, block):
        stop = min(n, start + block)
        first = slice(start * order, stop * order)
        axes = [positions[first]] + [positions] * (degree - 1)
        mesh = np.meshgrid(*axes, indexing="ij")
        values = np.array(np.broadcast_to(np.asarray(kernel(*mesh), dtype=float), mesh[0].shape))
        for axis, axis_weights in enumerate([weights[first]] + [weights] * (degree - 1)):
            shape = [1] * degree
            shape[axis] = -1
            values *= axis_weights.reshape(shape)
        split = []
        for size in (stop - start,) + (n,) * (degree - 1):
            split += [size, order]
        out[start:stop] = values.reshape(split).sum(axis=tuple(range(1, 2 * degree, 2)))
    return out


@dataclass(frozen=True, eq=False)
class VolterraSeries(Functional):
    """
    U(x) = K_0 + sum_j integral of K_j(t_1..t_j) x(t_1)...x(t_j) dt_1...dt_j.

    kernels[j-1] is K_j and takes j array arguments. The series is truncated
    at len(kernels). On the n-partition each K_j is integrated over every
    product of cells with cell_order Gauss-Legendre nodes per cell and axis,
    so U_j(x) is a finite sum over cell values.

    The fields are fixed after construction. The per-partition cache of
    integrated kernels is the only mutable state and is filled under a lock.
    """
    kernels: Tuple[Callable[..., np.ndarray], ...]
    constant: float = 0.0
    cell_order: int = config.CELL_QUADRATURE_ORDER
    _grids: Dict[int, List[np.ndarray]] = field(default_factory=dict, init=False, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, init=False, repr=False)

    def __post_init__(self):
        kernels = tuple(self.kernels)
        if len(kernels) < 1:
            raise DomainError("A Volterra series needs at least one kernel")
        if self.cell_order < 1:
            raise DomainError(f"cell_order must be positive, got {self.cell_order}")
        object.__setattr__(self, "kernels", kernels)

    @property
    def arity(self) -> int:
        return len(self.kernels)

    def kernel_grids(self, n: int) -> List[np.ndarray]:
        """Kernels integrated over the products of cells, cached per partition size."""
        with self._lock:
            grids = self._grids.get(n)
            if grids is not None:
                return grids
            grids = []
            for degree, kernel in enumerate(self.kernels, start=1):
                size = n ** degree
                calls = (n * self.cell_order) ** degree
                if size > config.QUADRATURE_BUDGET or calls > config.KERNEL_EVALUATION_BUDGET:
                    raise BudgetError(f"Kernel of degree {degree} on n={n} needs {size} cell products and "
                                      f"{calls} kernel calls, over the budgets of {config.QUADRATURE_BUDGET} "
                                      f"and {config.KERNEL_EVALUATION_BUDGET}")
                grids.append(_cell_integrals(kernel, degree, n, self.cell_order))
            self._grids[n] = grids
            logger.debug(f"Integrated {len(grids)} kernels over cells for n={n}")
            return grids

    def term_batch(self, values: np.ndarray) -> List[np.ndarray]:
        """Values of each homogeneous term U_j, j = 1..m, for every row."""
        values = np.atleast_2d(values)
        terms = []
        for grid in self.kernel_grids(values.shape[1]):
            reduced = np.tensordot(values, grid, axes=([1], [0]))
            while reduced.ndim > 1:
                reduced = np.einsum("mi...,mi->m...", reduced, values)
            terms.append(reduced)
        return terms

    def evaluate_batch(self, values: np.ndarray) -> np.ndarray:
        values = np.atleast_2d(values)
        return self.constant + np.sum(self.term_batch(values), axis=0)


def kernel_from_grid(grid) -> Callable[..., np.ndarray]:
    """
    A cell-constant kernel from a numeric grid.

    A grid of shape (m_1, ..., m_j) defines K(t_1..t_j) = grid[i_1, ..., i_j]
    where i_k is the cell of t_k in the m_k-partition of [0,1].
    """
    grid = np.array(grid, dtype=float)
    if grid.ndim < 1 or grid.size == 0:
        raise DomainError("A kernel grid needs at least one value")

    def kernel(*ts):
        if len(ts) != grid.ndim:
            raise DomainError(f"Kernel of degree {grid.ndim} called with {len(ts)} arguments")
        index = tuple(cell_index(t, size) for t, size in zip(np.broadcast_arrays(*ts), grid.shape))
        return grid[index]

    return kernel


def evaluate_rows(func: Functional, values: np.ndarray, offset: int = 0) -> np.ndarray:
    """
    Evaluate a functional on every row and check the results are finite.

    Args:
        func: Functional to evaluate
        values: Array (m, n) of step-function values
        offset: Index of the first row within the whole run, used in errors
    """
    try:
        results = func.evaluate_batch(values)
    except (BudgetError, DomainError):
        raise
    except Exception as e:
        logger.error(f"Functional evaluation failed: {str(e)}")
        raise EvaluationError(f"Functional evaluation failed: {e}", offset) from e
    bad = np.flatnonzero(~np.isfinite(results))
    if bad.size:
        logger.error(f"Non-finite functional value at row {offset + int(bad[0])}")
        raise EvaluationError("Functional returned a non-finite value", offset + int(bad[0]))
    return results


def evaluate(func: Functional, x: StepFunction) -> float:
    """
    Value of a functional on a step function.

    Point cylinders read cell values; integral cylinders and Volterra series
    reduce their integrals to finite sums over the cells.
    """
    return float(evaluate_rows(func, x.values[None, :])[0])


def default_epsilon(x: StepFunction) -> float:
    return 1e-4 * (1.0 + float(np.max(np.abs(x.values))))


def gateaux_differential(func: Functional, x: StepFunction, h: StepFunction, epsilon: Optional[float] = None) -> float:
    """
    Directional derivative of U at x in direction h.

    Central differences at epsilon and epsilon/2 combined by one Richardson step.

    Args:
        func: Functional U
        x: Base point
        h: Direction, on the same partition as x
        epsilon: Step size (default 1e-4 * (1 + max|x|))

    Returns:
        (4 D(epsilon/2) - D(epsilon)) / 3 with D(e) = [U(x + e h) - U(x - e h)] / (2e)
    """
    if x.n != h.n:
        raise DomainError(f"Partition sizes differ: x has {x.n} cells, h has {h.n}")
    epsilon = default_epsilon(x) if epsilon is None else float(epsilon)
    if not epsilon > 0:
        raise DomainError(f"epsilon must be positive, got {epsilon}")
    steps = np.array([epsilon, -epsilon, epsilon / 2, -epsilon / 2])
    values = evaluate_rows(func, x.values[None, :] + steps[:, None] * h.values[None, :])
    coarse = (values[0] - values[1]) / (2 * epsilon)
    fine = (values[2] - values[3]) / epsilon
    return float((4 * fine - coarse) / 3)


def homogeneous_components(series: VolterraSeries, x: StepFunction) -> List[float]:
    """Degree-graded terms [U_0(x), U_1(x), ...] of a Volterra series."""
    return [float(series.constant)] + [float(term[0]) for term in series.term_batch(x.values[None, :])]


def homogeneity_defect(func: Functional, x: StepFunction, degree: int, lam: float) -> float:
    """|U(lam x) - lam^degree U(x)|, zero for functionals homogeneous of that degree."""
    scaled = StepFunction(lam * x.values)
    return abs(evaluate(func, scaled) - lam ** degree * evaluate(func, x))
