"""
Natural density module.
Cesaro means and natural densities of integer sets, streamed over blocks of
integers so that horizons of 10^8 run in constant memory.
"""

import os
import sys
import math
import logging
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np

# Add the parent directory to the path to import config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import DomainError, EvaluationError

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'density_module.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class DensityEstimate:
    """
    A Cesaro mean over 1..N.

    count is the exact number of hits when the input is a set indicator and
    None for general sequences.
    """
    N: int
    value: float
    trace: Tuple[Tuple[int, float], ...] = ()
    count: Optional[int] = None

    def __post_init__(self):
        if any(b[0] <= a[0] for a, b in zip(self.trace, self.trace[1:])):
            raise DomainError("Trace checkpoints must be increasing")
        if self.count is not None and not 0 <= self.count <= self.N:
            raise DomainError(f"Count {self.count} outside [0, {self.N}]")


@dataclass(frozen=True)
class DensityDiagnostic:
    points: Tuple[Tuple[int, float], ...]
    oscillation: float


@dataclass(frozen=True)
class IntegerPredicate:
    """A named predicate on positive integers that accepts int64 arrays."""
    name: str
    test: Callable[[np.ndarray], np.ndarray]

    def __call__(self, k):
        return self.test(k)


def geometric_checkpoints(N: int, checkpoints: int) -> List[int]:
    """Roughly geometric checkpoints in [1, N], always ending at N."""
    if checkpoints < 1:
        raise DomainError(f"checkpoints must be positive, got {checkpoints}")
    points = {int(round(N ** (i / checkpoints))) for i in range(1, checkpoints + 1)}
    points.add(N)
    return sorted(p for p in points if 1 <= p <= N)


def _elementwise(func: Callable, block: np.ndarray, dtype) -> np.ndarray:
    values = np.empty(block.size, dtype=dtype)
    for i, k in enumerate(block):
        try:
            values[i] = func(int(k))
        except Exception as e:
            logger.error(f"Sequence evaluation failed at k={int(k)}: {str(e)}")
            raise EvaluationError(f"Evaluation failed: {e}", int(k)) from e
    return values


def _evaluate_block(func: Callable, block: np.ndarray, dtype) -> np.ndarray:
    """
    Evaluate func on a block of integers, vectorized when func accepts arrays.

    Callables that fail on arrays or return something of the wrong shape are
    re-run one integer at a time, so a genuine failure is reported with its k.
    """
    try:
        values = np.asarray(func(block))
        if values.shape == block.shape:
            return values.astype(dtype, copy=False)
    except Exception:
        pass
    return _elementwise(func, block, dtype)


def _stream(func: Callable, N: int, stops: Sequence[int], dtype, block_size: int) -> List:
    """
    Running sums of func over 1..N, read off at each stop.

    Integer indicators are summed exactly; real sequences with math.fsum.
    """
    if int(N) != N or N < 1:
        raise DomainError(f"N must be a positive integer, got {N}")
    if block_size < 1:
        raise DomainError(f"block_size must be positive, got {block_size}")
    stops = sorted(set(int(s) for s in stops))
    exact = dtype is bool
    totals = []
    running = 0 if exact else []
    stop_index = 0
    for lo in range(1, int(N) + 1, block_size):
        hi = min(lo + block_size - 1, int(N))
        block = np.arange(lo, hi + 1, dtype=np.int64)
        values = _evaluate_block(func, block, dtype)
        if not exact:
            bad = np.flatnonzero(~np.isfinite(values))
            if bad.size:
                k = int(block[bad[0]])
                logger.error(f"Non-finite sequence value at k={k}")
                raise EvaluationError("Non-finite sequence value", k)
        while stop_index < len(stops) and stops[stop_index] <= hi:
            head = values[:stops[stop_index] - lo + 1]
            totals.append(running + int(np.count_nonzero(head)) if exact
                          else math.fsum(running + [math.fsum(head)]))
            stop_index += 1
        if exact:
            running += int(np.count_nonzero(values))
        else:
            running.append(math.fsum(values))
    return totals


def density(
    predicate: Callable,
    N: int,
    checkpoints: int = config.DENSITY_CHECKPOINTS,
    block_size: int = config.DENSITY_BLOCK_SIZE,
) -> DensityEstimate:
    """
    Proportion of k in 1..N satisfying the predicate.

    Args:
        predicate: Callable on integers; int64 arrays are tried first
        N: Horizon
        checkpoints: Number of geometric trace checkpoints
        block_size: Integers per streamed block

    Returns:
        DensityEstimate with the exact count and a running-ratio trace
    """
    stops = geometric_checkpoints(int(N), checkpoints)
    counts = _stream(predicate, N, stops, bool, block_size)
    trace = tuple((s, c / s) for s, c in zip(stops, counts))
    count = counts[-1]
    logger.info(f"Density of {getattr(predicate, 'name', 'predicate')} at N={N}: {count}/{N}")
    return DensityEstimate(int(N), count / N, trace, count)


def cesaro_mean(
    f: Callable,
    N: int,
    checkpoints: int = config.DENSITY_CHECKPOINTS,
    block_size: int = config.DENSITY_BLOCK_SIZE,
) -> DensityEstimate:
    """(1/N) times the sum of f(k) for k = 1..N, with compensated summation."""
    stops = geometric_checkpoints(int(N), checkpoints)
    sums = _stream(f, N, stops, float, block_size)
    trace = tuple((s, total / s) for s, total in zip(stops, sums))
    return DensityEstimate(int(N), sums[-1] / N, trace)


def convergence_diagnostic(predicate: Callable, N_list: Sequence[int],
                           block_size: int = config.DENSITY_BLOCK_SIZE) -> DensityDiagnostic:
    """
    Densities along N_list and their oscillation over the tail half.

    A single streamed pass up to max(N_list) yields every density. The
    oscillation is the largest gap between two tail densities; it stays
    bounded away from zero when the density does not exist.
    """
    N_list = [int(N) for N in N_list]
    if not N_list or any(b <= a for a, b in zip(N_list, N_list[1:])) or N_list[0] < 1:
        raise DomainError(f"N_list must be positive and strictly increasing, got {N_list}")
    counts = _stream(predicate, N_list[-1], N_list, bool, block_size)
    points = tuple((N, c / N) for N, c in zip(N_list, counts))
    tail = [value for _, value in points[len(points) // 2:]]
    oscillation = max(tail) - min(tail)
    logger.info(f"Density oscillation of {getattr(predicate, 'name', 'predicate')} over {N_list}: {oscillation:.6f}")
    return DensityDiagnostic(points, oscillation)


def integer_sqrt(k: np.ndarray) -> np.ndarray:
    """Floor of the square root of nonnegative int64 values."""
    k = np.asarray(k, dtype=np.int64)
    root = np.floor(np.sqrt(k.astype(float))).astype(np.int64)
    root -= (root * root > k)
    root += ((root + 1) * (root + 1) <= k)
    return root


def _is_square(k):
    k = np.asarray(k, dtype=np.int64)
    root = integer_sqrt(k)
    return root * root == k


def _primes_up_to(limit: int) -> np.ndarray:
    if limit < 2:
        return np.array([], dtype=np.int64)
    sieve = np.ones(limit + 1, dtype=bool)
    sieve[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if sieve[p]:
            sieve[p * p::p] = False
    return np.flatnonzero(sieve).astype(np.int64)


def _is_squarefree(k):
    k = np.atleast_1d(np.asarray(k, dtype=np.int64))
    lo, hi = int(k.min()), int(k.max())
    if hi - lo + 1 != k.size or np.any(np.diff(k) != 1):
        return np.array([all(int(v) % (p * p) for p in _primes_up_to(math.isqrt(int(v)))) for v in k])
    # contiguous blocks: strike multiples of p^2
    mask = np.ones(k.size, dtype=bool)
    for p in _primes_up_to(math.isqrt(hi)):
        square = int(p) * int(p)
        start = -(-lo // square) * square
        mask[start - lo::square] = False
    return mask


def _leading_digit(k):
    k = np.asarray(k, dtype=np.int64)
    exponent = np.floor(np.log10(np.maximum(k, 1).astype(float))).astype(np.int64)
    power = 10 ** exponent
    power = np.where(power > k, power // 10, power)
    power = np.where(power * 10 <= k, power * 10, power)
    return k // power


def parse_predicate(name: str) -> IntegerPredicate:
    """
    Built-in predicates by name: even, odd, all, none, multiple:<m>, square,
    squarefree, leading-digit:<d>.
    """
    key, _, arg = str(name).strip().lower().partition(":")
    try:
        if key == "even":
            return IntegerPredicate("even", lambda k: np.asarray(k) % 2 == 0)
        if key == "odd":
            return IntegerPredicate("odd", lambda k: np.asarray(k) % 2 == 1)
        if key == "all":
            return IntegerPredicate("all", lambda k: np.ones(np.shape(k), dtype=bool))
        if key == "none":
            return IntegerPredicate("none", lambda k: np.zeros(np.shape(k), dtype=bool))
        if key == "multiple":
            m = int(arg)
            if m < 1:
                raise ValueError("m must be positive")
            return IntegerPredicate(f"multiple:{m}", lambda k: np.asarray(k) % m == 0)
        if key == "square":
            return IntegerPredicate("square", _is_square)
        if key == "squarefree":
            return IntegerPredicate("squarefree", _is_squarefree)
        if key == "leading-digit":
            d = int(arg)
            if not 1 <= d <= 9:
                raise ValueError("digit must lie in 1..9")
            return IntegerPredicate(f"leading-digit:{d}", lambda k: _leading_digit(k) == d)
    except ValueError as e:
        raise DomainError(f"Bad predicate '{name}': {e}") from None
    raise DomainError(f"Unknown predicate '{name}'; expected even, odd, all, none, multiple:<m>, "
                      f"square, squarefree or leading-digit:<d>")
