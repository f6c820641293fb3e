"""
Brownian passage module.
First passage of n-dimensional Brownian motion from the origin through the
sphere of a given radius, exit-point marginals, and Wiener paths built from
the Schauder system.
"""

import os
import sys
import math
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.stats

# Add the parent directory to the path to import config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import DomainError, EvaluationError
from modules.rng_stats_module import (RunningMoments, SeedPath, derive_stream, ks_distance,
                                      run_chunks, sweep_seed)

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'passage_module.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

ENGINES = ("radial", "full")
MIN_KS_SAMPLES = 100

# Split index of the passage streams under the run seed
_TIME_STREAMS = 0


@dataclass(frozen=True)
class BrownianConfig:
    """
    Simulation settings for Brownian motion issued from the origin.

    Attributes:
        n: Dimension
        dt: Time step
        horizon: Paths still inside the sphere at this time are censored
        seed: Root seed
        engine: "radial" moves the first coordinate and the squared radius
            of the other n-1 exactly in law; "full" moves all n coordinates
    """
    n: int
    dt: float = config.PASSAGE_DT
    horizon: float = config.PASSAGE_HORIZON
    seed: int = config.DEFAULT_SEED
    engine: str = config.PASSAGE_ENGINE

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"Dimension must be a positive integer, got {self.n}")
        if not self.dt > 0:
            raise DomainError(f"dt must be positive, got {self.dt}")
        if not self.horizon >= self.dt:
            raise DomainError(f"horizon must be at least dt, got horizon={self.horizon}, dt={self.dt}")
        if self.engine not in ENGINES:
            raise DomainError(f"Unknown engine '{self.engine}'; expected one of {ENGINES}")

    @property
    def steps(self) -> int:
        return int(math.ceil(self.horizon / self.dt - 1e-9))


@dataclass(frozen=True, eq=False)
class PassageStats:
    replications: int
    mean_T: float
    var_T: float
    censored: int
    exit_first_coordinates: np.ndarray
    dimension: int
    radius: float
    passage_times: np.ndarray = field(repr=False)
    exit_norms: np.ndarray = field(repr=False)

    def __post_init__(self):
        if self.censored > self.replications:
            raise DomainError("More censored paths than replications")
        if self.var_T < 0:
            raise DomainError("Negative variance")


def _radial_chunk(cfg: BrownianConfig, radius: float, stream: np.random.Generator,
                  count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Passage times and exit points from the first coordinate and the radius of the rest.

    The first coordinate takes Gaussian increments. The other n-1 coordinates
    enter only through their squared radius s, and splitting their increment
    along and across the current position gives
    s <- (sqrt(s) + sqrt(dt) Z)^2 + dt chi^2_{n-2}, exact in law. The exit
    point is interpolated at the rho^2 crossing and re-projected to the sphere.
    """
    r2 = radius * radius
    others = cfg.n - 1
    times = np.full(count, np.nan)
    first = np.full(count, np.nan)
    norms = np.full(count, np.nan)
    head = np.zeros(count)
    rest = np.zeros(count)
    active = np.arange(count)
    sqrt_dt = math.sqrt(cfg.dt)
    for step in range(cfg.steps):
        if active.size == 0:
            break
        head_old = head[active]
        rest_old = rest[active]
        head_new = head_old + sqrt_dt * stream.standard_normal(active.size)
        if others:
            rest_new = (np.sqrt(rest_old) + sqrt_dt * stream.standard_normal(active.size)) ** 2
            if others > 1:
                rest_new += cfg.dt * stream.chisquare(others - 1, active.size)
        else:
            rest_new = rest_old
        old = head_old ** 2 + rest_old
        new = head_new ** 2 + rest_new
        crossed = new >= r2
        if np.any(crossed):
            hit = active[crossed]
            fraction = (r2 - old[crossed]) / (new[crossed] - old[crossed])
            times[hit] = (step + fraction) * cfg.dt
            exit_head = head_old[crossed] + fraction * (head_new[crossed] - head_old[crossed])
            exit_rest = rest_old[crossed] + fraction * (rest_new[crossed] - rest_old[crossed])
            scale = radius / np.sqrt(exit_head ** 2 + exit_rest)
            first[hit] = exit_head * scale
            norms[hit] = np.sqrt((exit_head * scale) ** 2 + exit_rest * scale ** 2)
        head[active] = head_new
        rest[active] = rest_new
        active = active[~crossed]
    return times, first, norms


def _full_chunk(cfg: BrownianConfig, radius: float, stream: np.random.Generator,
                count: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Passage times and re-projected exit points from the n coordinates."""
    r2 = radius * radius
    times = np.full(count, np.nan)
    first = np.full(count, np.nan)
    norms = np.full(count, np.nan)
    position = np.zeros((count, cfg.n))
    active = np.arange(count)
    sqrt_dt = math.sqrt(cfg.dt)
    for step in range(cfg.steps):
        if active.size == 0:
            break
        before = position[active]
        after = before + sqrt_dt * stream.standard_normal(before.shape)
        old = np.einsum("ij,ij->i", before, before)
        new = np.einsum("ij,ij->i", after, after)
        crossed = new >= r2
        if np.any(crossed):
            hit = active[crossed]
            fraction = (r2 - old[crossed]) / (new[crossed] - old[crossed])
            times[hit] = (step + fraction) * cfg.dt
            exits = before[crossed] + fraction[:, None] * (after[crossed] - before[crossed])
            exits *= (radius / np.linalg.norm(exits, axis=1))[:, None]
            first[hit] = exits[:, 0]
            norms[hit] = np.linalg.norm(exits, axis=1)
        position[active] = after
        active = active[~crossed]
    return times, first, norms


def first_passage_stats(cfg: BrownianConfig, radius: float, replications: int,
                        workers: Optional[int] = None) -> PassageStats:
    """
    Simulate first passages through the sphere of the given radius.

    Replications run in chunks of PASSAGE_CHUNK_SIZE, chunk i on stream
    (seed, 0, i). Both engines record the crossing time and the exit point
    of every simulated path.

    Args:
        cfg: Dimension, time step, horizon, seed and engine
        radius: Sphere radius
        replications: Number of paths, at least 2
        workers: Threads running chunks

    Returns:
        PassageStats over the uncensored paths
    """
    if not radius > 0:
        raise DomainError(f"radius must be positive, got {radius}")
    if replications < 2:
        raise DomainError(f"Need at least 2 replications, got {replications}")
    root = SeedPath(cfg.seed, (_TIME_STREAMS,))
    logger.info(f"Passage run: n={cfg.n} radius={radius} dt={cfg.dt} horizon={cfg.horizon} "
                f"engine={cfg.engine} replications={replications}")

    if cfg.engine == "radial":
        def task(stream, start, count):
            return _radial_chunk(cfg, radius, stream, count)

        chunk_size = config.PASSAGE_CHUNK_SIZE
    else:
        def task(stream, start, count):
            return _full_chunk(cfg, radius, stream, count)

        chunk_size = max(1, min(config.PASSAGE_CHUNK_SIZE, config.MC_MAX_CHUNK_ELEMENTS // cfg.n))
    parts = run_chunks(task, root, replications, chunk_size, workers, desc="Passage chunks")
    times, first, norms = (np.concatenate(column) for column in zip(*parts))

    reached = np.isfinite(times)
    censored = int(replications - np.count_nonzero(reached))
    if censored == replications:
        logger.error(f"Every path censored at horizon {cfg.horizon}")
        raise EvaluationError(f"All {replications} paths were censored at horizon {cfg.horizon}")
    if censored:
        logger.warning(f"{censored} of {replications} paths censored at horizon {cfg.horizon}")

    moments = RunningMoments.from_values(times[reached])
    stats = PassageStats(
        replications=replications,
        mean_T=moments.mean,
        var_T=moments.variance,
        censored=censored,
        exit_first_coordinates=first[reached],
        dimension=cfg.n,
        radius=float(radius),
        passage_times=times[reached],
        exit_norms=norms[reached],
    )
    logger.info(f"Passage n={cfg.n}: mean_T={stats.mean_T:.6f} var_T={stats.var_T:.6f} censored={censored}")
    return stats


def exit_marginal_ks(stats: PassageStats) -> float:
    """
    KS distance between the scaled first exit coordinate and N(0,1).

    Coordinates are rescaled to the sphere of radius sqrt(n) first.
    """
    samples = np.asarray(stats.exit_first_coordinates, dtype=float)
    if samples.size < MIN_KS_SAMPLES:
        raise DomainError(f"Need at least {MIN_KS_SAMPLES} exit points, got {samples.size}")
    if stats.dimension == 1:
        logger.warning("n = 1: the exit coordinate takes the values -1 and +1 only, KS stays near 0.34")
    scaled = samples * (math.sqrt(stats.dimension) / stats.radius)
    return ks_distance(scaled, scipy.stats.norm.cdf)


def schauder_matrix(modes: int, grid: int) -> np.ndarray:
    """
    Integrals from 0 to t of the first `modes` Haar functions at `grid` points.

    Row 0 is t (phi_1 = 1); row k >= 1 with k = 2^j + i is the tent of height
    2^(-j/2 - 1) over [i 2^-j, (i+1) 2^-j].
    """
    if modes < 1 or grid < 2:
        raise DomainError(f"Need modes >= 1 and grid >= 2, got modes={modes}, grid={grid}")
    t = np.linspace(0.0, 1.0, grid)
    matrix = np.empty((modes, grid))
    matrix[0] = t
    for k in range(1, modes):
        level = int(math.floor(math.log2(k)))
        offset = k - 2 ** level
        width = 2.0 ** -level
        middle = (offset + 0.5) * width
        matrix[k] = np.maximum(0.0, 2.0 ** (level / 2) * (width / 2 - np.abs(t - middle)))
    return matrix


def sample_wiener_paths(modes: int, grid: int, samples: int, seed: int,
                        workers: Optional[int] = None) -> np.ndarray:
    """Wiener partial sums on a uniform grid of [0,1], one row per sample."""
    matrix = schauder_matrix(modes, grid)

    def task(stream, start, count):
        return stream.standard_normal((count, modes)) @ matrix

    chunk_size = max(1, min(config.MC_CHUNK_SIZE, config.MC_MAX_CHUNK_ELEMENTS // max(grid, modes)))
    return np.vstack(run_chunks(task, SeedPath(seed), samples, chunk_size, workers, desc="Wiener paths"))


def sample_wiener_path(modes: int, grid: int, seed: int) -> np.ndarray:
    """
    One Wiener partial sum W(t) = sum of xi_k times the integral of phi_k up to t.

    Args:
        modes: Number of Schauder terms
        grid: Number of uniform grid points on [0,1], endpoints included
        seed: Root seed

    Returns:
        Array of W at the grid points; W(0) = 0 and W(1) = xi_1
    """
    matrix = schauder_matrix(modes, grid)
    return derive_stream(SeedPath(seed)).standard_normal(modes) @ matrix


def quadratic_variation_curve(mode_list: Sequence[int], grid: int, samples: int, seed: int,
                              workers: Optional[int] = None) -> List[Tuple[int, float]]:
    """
    Mean quadratic variation of the partial sums over the grid, for each mode count.

    With 2^J modes the partial sum interpolates the path at the dyadic points
    of level J, so the curve rises towards 1 once the modes resolve the grid.
    """
    curve = []
    for index, modes in enumerate(mode_list):
        paths = sample_wiener_paths(int(modes), grid, samples, sweep_seed(seed, index), workers)
        variation = float(np.mean(np.sum(np.diff(paths, axis=1) ** 2, axis=1)))
        logger.info(f"Quadratic variation with {modes} modes on {grid} points: {variation:.6f}")
        curve.append((int(modes), variation))
    return curve
