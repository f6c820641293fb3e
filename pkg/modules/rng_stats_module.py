"""
Random streams and statistics module.
Derives reproducible sub-streams from a root seed, runs Monte Carlo chunks in
parallel and provides the small statistics toolkit used by the experiments.
"""

import os
import sys
import math
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple, TypeVar

import numpy as np
import scipy.stats
from tqdm.auto import tqdm

# Add the parent directory to the path to import config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import DomainError

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'rng_stats_module.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

_MASK64 = 2**64 - 1

T = TypeVar("T")


@dataclass(frozen=True)
class SeedPath:
    """
    Address of a random stream: a root seed plus a path of split indices.

    The same path always yields the same stream; sibling paths yield
    streams that behave as independent.
    """
    root: int
    path: Tuple[int, ...] = ()

    def __post_init__(self):
        if any(int(i) < 0 for i in self.path):
            raise DomainError(f"Split indices must be nonnegative, got {self.path}")
        object.__setattr__(self, "path", tuple(int(i) for i in self.path))

    def child(self, *indices: int) -> "SeedPath":
        """Return the path extended by the given split indices."""
        return SeedPath(self.root, self.path + tuple(indices))


def derive_stream(seed_path: SeedPath) -> np.random.Generator:
    """
    Build the random stream addressed by a seed path.

    The root seed keys a BLAKE2b hash of the path; the digest seeds a PCG64
    generator. Gaussian draws use numpy's ziggurat sampler.

    Args:
        seed_path: Root seed and split indices

    Returns:
        A numpy Generator owned by the caller
    """
    key = (int(seed_path.root) & _MASK64).to_bytes(8, "little")
    message = len(seed_path.path).to_bytes(8, "little") + b"".join(
        i.to_bytes(8, "little") for i in seed_path.path
    )
    digest = hashlib.blake2b(message, key=key, digest_size=32).digest()
    entropy = int.from_bytes(digest, "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


@dataclass
class RunningMoments:
    """Count, mean and sum of squared deviations, mergeable across chunks."""
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_values(cls, values: np.ndarray) -> "RunningMoments":
        values = np.asarray(values, dtype=float).ravel()
        if values.size == 0:
            return cls()
        mean = math.fsum(values) / values.size
        m2 = math.fsum((values - mean) ** 2)
        return cls(int(values.size), mean, m2)

    def push(self, value: float) -> None:
        """Welford update with a single value."""
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        """Return the accumulator of the union of both samples."""
        if other.count == 0:
            return RunningMoments(self.count, self.mean, self.m2)
        if self.count == 0:
            return RunningMoments(other.count, other.mean, other.m2)
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return RunningMoments(count, mean, m2)

    @property
    def variance(self) -> float:
        if self.count < 2:
            return 0.0
        return max(self.m2, 0.0) / (self.count - 1)

    @property
    def std_error(self) -> float:
        if self.count < 2:
            return 0.0
        return math.sqrt(self.variance / self.count)


def chunk_bounds(total: int, chunk_size: int) -> List[Tuple[int, int]]:
    """Split range(total) into consecutive (start, count) chunks of a fixed size."""
    if total < 0 or chunk_size < 1:
        raise DomainError(f"Invalid chunking: total={total}, chunk_size={chunk_size}")
    return [(start, min(chunk_size, total - start)) for start in range(0, total, chunk_size)]


def run_chunks(
    task: Callable[[np.random.Generator, int, int], T],
    seed_path: SeedPath,
    total: int,
    chunk_size: int = config.MC_CHUNK_SIZE,
    workers: int = None,
    desc: str = "Chunks",
) -> List[T]:
    """
    Run a replication task over fixed-size chunks, each with its own stream.

    Chunk i uses the stream of seed_path.child(i), so results depend only on
    (seed_path, total, chunk_size) and never on the number of workers.

    Args:
        task: Callable (stream, start, count) -> chunk result
        seed_path: Parent seed path of the run
        total: Number of replications
        chunk_size: Replications per chunk
        workers: Threads to use (default from config)
        desc: Progress bar label

    Returns:
        Chunk results in chunk order
    """
    workers = workers or config.MC_WORKERS
    bounds = chunk_bounds(total, chunk_size)

    def _run(item):
        index, (start, count) = item
        return task(derive_stream(seed_path.child(index)), start, count)

    items = list(enumerate(bounds))
    if workers <= 1:
        iterator = tqdm(items, desc=desc, disable=not config.SHOW_PROGRESS)
        results = [_run(item) for item in iterator]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(tqdm(pool.map(_run, items), total=len(items), desc=desc,
                                disable=not config.SHOW_PROGRESS))
    logger.debug(f"Ran {len(bounds)} chunks of up to {chunk_size} replications with {workers} worker(s)")
    return results


def merge_moments(parts: Sequence[RunningMoments]) -> RunningMoments:
    """Merge accumulators left to right."""
    merged = RunningMoments()
    for part in parts:
        merged = merged.merge(part)
    return merged


def ks_distance(samples: Sequence[float], cdf: Callable[[np.ndarray], np.ndarray]) -> float:
    """
    Kolmogorov-Smirnov distance between an empirical sample and a distribution.

    Args:
        samples: Observations
        cdf: Vectorized cumulative distribution function

    Returns:
        sup over the sorted sample of max(i/m - F(x_i), F(x_i) - (i-1)/m)
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size == 0:
        raise DomainError("KS distance needs at least one sample")
    return float(scipy.stats.kstest(samples, cdf).statistic)


@dataclass(frozen=True)
class LogLogFit:
    exponent: float
    intercept: float
    r_squared: float


def loglog_fit(points: Sequence[Tuple[float, float]]) -> LogLogFit:
    """
    Least-squares line through (log n, log error).

    Args:
        points: (n, error) pairs, at least three, all positive

    Returns:
        Fitted exponent, intercept and coefficient of determination
    """
    if len(points) < 3:
        raise DomainError(f"A log-log fit needs at least 3 points, got {len(points)}")
    xs = np.array([p[0] for p in points], dtype=float)
    ys = np.array([p[1] for p in points], dtype=float)
    if np.any(xs <= 0) or np.any(ys <= 0):
        raise DomainError("A log-log fit needs positive abscissae and values")
    result = scipy.stats.linregress(np.log(xs), np.log(ys))
    return LogLogFit(float(result.slope), float(result.intercept), float(result.rvalue ** 2))


def sweep_seed(seed: int, index: int) -> int:
    """Root seed for the index-th step of a parameter sweep."""
    return (int(seed) * 1_000_003 + int(index)) & (2**63 - 1)
