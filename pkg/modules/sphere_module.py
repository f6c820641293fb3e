"""
Sphere geometry module.
Wallis integrals, unit-ball volumes, coordinate marginals and uniform sampling
on high-dimensional spheres.
"""

import os
import sys
import math
import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import List, Sequence, Tuple, Union

import numpy as np
import scipy.stats

# Add the parent directory to the path to import config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import DomainError
from modules.rng_stats_module import SeedPath, derive_stream, ks_distance

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'sphere_module.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SphereSection:
    """
    The n-th section of the L2 sphere of radius R: step functions on n equal
    cells whose values satisfy x_1^2 + ... + x_n^2 = n R^2.
    """
    n: int
    R: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DomainError(f"Section size must be a positive integer, got {self.n}")
        if not self.R > 0:
            raise DomainError(f"Section radius must be positive, got {self.R}")

    @property
    def euclidean_radius(self) -> float:
        """Radius R*sqrt(n) of the coordinate sphere."""
        return self.R * math.sqrt(self.n)


class MarginalConvention(Enum):
    """
    Law of one coordinate of the n-th section.

    SLICE_VOLUME weights a hyperplane slice by its (n-1)-ball volume;
    PAPER_SLICE is another name for it. SURFACE_MEASURE is the marginal of a
    uniform point on the sphere.
    """
    SLICE_VOLUME = "slice-volume"
    PAPER_SLICE = "slice-volume"
    SURFACE_MEASURE = "surface-measure"


_CONVENTION_ALIASES = {"paper-slice": MarginalConvention.SLICE_VOLUME}


def parse_convention(value: Union[str, MarginalConvention]) -> MarginalConvention:
    if isinstance(value, MarginalConvention):
        return value
    try:
        text = str(value).strip().lower()
        return _CONVENTION_ALIASES.get(text) or MarginalConvention(text)
    except ValueError:
        raise DomainError(f"Unknown marginal convention '{value}'; expected one of "
                          f"{[c.value for c in MarginalConvention]}") from None


@lru_cache(maxsize=None)
def wallis(n: int) -> float:
    """
    Wallis integral W_n of cos^n over [0, pi/2].

    Computed by W_n = ((n-1)/n) W_{n-2} from W_0 = pi/2 and W_1 = 1.
    """
    if int(n) != n or n < 0:
        raise DomainError(f"Wallis index must be a nonnegative integer, got {n}")
    n = int(n)
    value = math.pi / 2 if n % 2 == 0 else 1.0
    for k in range(2 if n % 2 == 0 else 3, n + 1, 2):
        value *= (k - 1) / k
    return value


@lru_cache(maxsize=None)
def ball_volume(n: int) -> float:
    """Volume of the unit ball in dimension n, by V_n = 2 V_{n-1} W_n with V_1 = 2."""
    if int(n) != n or n < 1:
        raise DomainError(f"Dimension must be a positive integer, got {n}")
    volume = 2.0
    for k in range(2, int(n) + 1):
        volume = 2.0 * volume * wallis(k)
    return volume


def sample_sphere_batch(n: int, r: float, size: int, stream: np.random.Generator) -> np.ndarray:
    """
    Draw `size` points uniformly on the sphere of radius r in n dimensions.

    Rows are normalized standard Gaussian vectors scaled by r; the
    probability-zero all-zero rows are redrawn.
    """
    if n < 1 or not r > 0:
        raise DomainError(f"Need n >= 1 and r > 0, got n={n}, r={r}")
    gaussians = stream.standard_normal((size, n))
    norms = np.linalg.norm(gaussians, axis=1)
    zero = norms == 0.0
    while np.any(zero):
        gaussians[zero] = stream.standard_normal((int(zero.sum()), n))
        norms[zero] = np.linalg.norm(gaussians[zero], axis=1)
        zero = norms == 0.0
    return gaussians * (r / norms)[:, None]


def sample_sphere(n: int, r: float, seed: int) -> np.ndarray:
    """
    Draw one point uniformly on the sphere of radius r in n dimensions.

    Args:
        n: Dimension
        r: Euclidean radius
        seed: Root seed of the stream

    Returns:
        Array of shape (n,) with norm r
    """
    return sample_sphere_batch(n, r, 1, derive_stream(SeedPath(seed)))[0]


def marginal_exponent(n: int, convention: MarginalConvention) -> float:
    """Exponent e of the marginal density proportional to (1 - z^2/(nR^2))^e."""
    if convention is MarginalConvention.SLICE_VOLUME:
        return (n - 1) / 2
    if n < 3:
        raise DomainError(f"The surface-measure marginal needs n >= 3, got n={n}")
    return (n - 3) / 2


def coordinate_marginal_density(section: SphereSection, z, convention: MarginalConvention):
    """
    Density of one coordinate of the n-th section under the given convention.

    The normalizer is 2 R sqrt(n) W_{2e+1}, from the substitution z = R sqrt(n) sin(theta).

    Args:
        section: Section (n, R)
        z: Point or array of points
        convention: Slice-volume or surface-measure marginal

    Returns:
        Density value(s); zero outside [-R sqrt(n), R sqrt(n)]
    """
    convention = parse_convention(convention)
    exponent = marginal_exponent(section.n, convention)
    half_width = section.euclidean_radius
    normalizer = 2.0 * half_width * wallis(int(round(2 * exponent + 1)))
    z = np.asarray(z, dtype=float)
    u2 = (z / half_width) ** 2
    inside = u2 <= 1.0
    base = np.where(inside, 1.0 - np.minimum(u2, 1.0), 0.0)
    density = np.where(inside, base ** exponent / normalizer, 0.0)
    return float(density) if density.ndim == 0 else density


def radius_concentration(n: int, samples: int, seed: int) -> Tuple[float, float]:
    """
    Mean and standard deviation of |G|^2/n for standard Gaussian G in n dimensions.

    The law of large numbers sends |G|^2/n to 1, which is why G*sqrt(n)/|G|
    and G share their coordinate limits.
    """
    if n < 1 or samples < 2:
        raise DomainError(f"Need n >= 1 and samples >= 2, got n={n}, samples={samples}")
    stream = derive_stream(SeedPath(seed))
    ratios = np.empty(samples)
    block = max(1, config.MC_MAX_CHUNK_ELEMENTS // n)
    for start in range(0, samples, block):
        count = min(block, samples - start)
        gaussians = stream.standard_normal((count, n))
        ratios[start:start + count] = np.einsum("ij,ij->i", gaussians, gaussians) / n
    return float(ratios.mean()), float(ratios.std(ddof=1))


def nested_first_coordinates(n_list: Sequence[int], samples: int, stream: np.random.Generator,
                             stratified_head: bool = True) -> np.ndarray:
    """
    First coordinates of uniform points on S(sqrt(n)) for several n at once.

    Each sample is one standard Gaussian vector of dimension max(n_list); for
    every n its first n coordinates are normalized to S(sqrt(n)), so all n
    share the same draws. With stratified_head the first Gaussian coordinate
    is taken from a randomly permuted stratum of N(0,1): every point stays
    exactly uniform on its sphere and the sample as a whole is balanced.

    Returns:
        Array of shape (len(n_list), samples)
    """
    dims = [int(n) for n in n_list]
    if not dims or min(dims) < 1 or samples < 1:
        raise DomainError(f"Need dimensions >= 1 and samples >= 1, got {n_list} and {samples}")
    if stratified_head:
        offsets = (stream.permutation(samples) + stream.random(samples)) / samples
        head = scipy.stats.norm.ppf(np.clip(offsets, np.finfo(float).tiny, 1.0 - np.finfo(float).eps))
    else:
        head = stream.standard_normal(samples)
    out = np.empty((len(dims), samples))
    width = max(dims) - 1
    block = max(1, config.MC_MAX_CHUNK_ELEMENTS // max(width, 1))
    for start in range(0, samples, block):
        count = min(block, samples - start)
        rows = slice(start, start + count)
        tail = np.cumsum(stream.standard_normal((count, width)) ** 2, axis=1) if width else np.zeros((count, 0))
        for k, n in enumerate(dims):
            rest = tail[:, n - 2] if n > 1 else 0.0
            out[k, rows] = head[rows] * np.sqrt(n / (head[rows] ** 2 + rest))
    return out


def coordinate_ks_profile(n_list: Sequence[int], samples: int, seed: int,
                          stratified_head: bool = True) -> List[Tuple[int, float]]:
    """
    KS distance between the first coordinate on S(sqrt(n)) and N(0,1), for each n.

    Points are normalized Gaussian vectors drawn once on stream (seed, 0) and
    cut to each n (common random numbers).
    """
    coords = nested_first_coordinates(n_list, samples, derive_stream(SeedPath(seed, (0,))), stratified_head)
    profile = []
    for n, row in zip(n_list, coords):
        distance = ks_distance(row, scipy.stats.norm.cdf)
        logger.info(f"KS distance of first coordinate at n={n}: {distance:.6f}")
        profile.append((int(n), distance))
    return profile


def coordinate_correlation(n: int, p: int, samples: int, seed: int) -> float:
    """Largest absolute sample correlation among the first p coordinates on S(sqrt(n))."""
    if not 2 <= p <= n:
        raise DomainError(f"Need 2 <= p <= n, got p={p}, n={n}")
    points = sample_sphere_batch(n, math.sqrt(n), samples, derive_stream(SeedPath(seed)))
    corr = np.corrcoef(points[:, :p], rowvar=False)
    off_diagonal = corr[~np.eye(p, dtype=bool)]
    return float(np.max(np.abs(off_diagonal)))
