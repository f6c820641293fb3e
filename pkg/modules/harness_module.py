"""
Experiment harness module.
Named commands over the experiment modules, line-oriented config files,
CSV/JSON reports and the self-test suite shared by the CLI and the API.
"""

import os
import sys
import csv
import json
import math
import time
import difflib
import logging
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special

# Add the parent directory to the path to import config
sys.path.append(os.path.dirname(os.path.dirname(os.path.abspath(__file__))))
import config
from modules.errors_module import DomainError, GateauxError, UsageError
from modules.functionals_module import (Functional, IntegralCylinder, PointCylinder, StepFunction,
                                        VolterraSeries, gateaux_differential, kernel_from_grid)
from modules.gateaux_module import (convergence_report, field_convergence, gaussian_limit_mean,
                                    gaussian_limit_monte_carlo, section_mean_monte_carlo,
                                    section_mean_quadrature)
from modules.density_module import convergence_diagnostic, density, parse_predicate
from modules.passage_module import (BrownianConfig, exit_marginal_ks, first_passage_stats,
                                    quadratic_variation_curve, sample_wiener_paths, MIN_KS_SAMPLES)
from modules.potential_module import (BoundarySpec, double_layer, field_value, green_reconstruct, green_terms,
                                      named_field, single_layer)
from modules.rng_stats_module import sweep_seed
from modules.sphere_module import SphereSection, ball_volume, parse_convention, wallis

# Configure logging
os.makedirs(os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR), exist_ok=True)
logging.basicConfig(
    filename=os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), config.LOG_DIR, 'harness_module.log'),
    level=getattr(logging, config.LOG_LEVEL),
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

PROJECT_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))

GLOBAL_KEYS = ("command", "seed", "samples", "out", "format", "workers", "timings")
FORMATS = ("csv", "json")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_FAILURE = 3


@dataclass(frozen=True)
class RunConfig:
    """
    Everything one harness run needs.

    seed None means the default (GATEAUX_SEED or the built-in constant);
    samples None means the command's own default.
    """
    command: Optional[str] = None
    params: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    out: Optional[str] = None
    format: Optional[str] = None
    samples: Optional[int] = None
    workers: Optional[int] = None
    timings: bool = False
    emit_times: Optional[str] = None

    @property
    def resolved_seed(self) -> int:
        return config.DEFAULT_SEED if self.seed is None else int(self.seed)

    @property
    def resolved_format(self) -> str:
        return self.format or "csv"

    def overridden_by(self, other: "RunConfig") -> "RunConfig":
        """This config with every value set in `other` taking precedence."""
        changes = {name: getattr(other, name) for name in ("command", "seed", "out", "format", "samples",
                                                            "workers", "emit_times")
                   if getattr(other, name) is not None}
        if other.timings:
            changes["timings"] = True
        return replace(self, params={**self.params, **other.params}, **changes)


@dataclass(frozen=True)
class ReportRow:
    experiment: str
    params: Dict[str, Any]
    metric: str
    value: float
    std_error: Optional[float] = None
    seconds: Optional[float] = None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "experiment": self.experiment,
            "params": dict(sorted(self.params.items())),
            "metric": self.metric,
            "value": _plain(self.value),
            "std_error": _plain(self.std_error),
            "seconds": _plain(self.seconds),
        }


@dataclass(frozen=True)
class Command:
    name: str
    description: str
    defaults: Dict[str, Any]
    runner: Callable[[RunConfig, Dict[str, Any]], List[ReportRow]]
    default_samples: Optional[int] = None


def _plain(value):
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating,)):
        return float(value)
    return value


def parse_scalar(text: str):
    """Int, float or bool when the text reads as one, otherwise the stripped string."""
    text = str(text).strip()
    if len(text) >= 2 and text[0] == text[-1] and text[0] in "'\"":
        return text[1:-1]
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    return text


def _suggest(key: str, allowed: Sequence[str]) -> str:
    matches = difflib.get_close_matches(key, list(allowed), n=1)
    return f"; did you mean '{matches[0]}'?" if matches else ""


def _allowed_params(command: Optional[str]) -> List[str]:
    if command is None:
        return sorted({key for spec in COMMANDS.values() for key in spec.defaults})
    return sorted(_command(command).defaults)


def _command(name: str) -> Command:
    try:
        return COMMANDS[name]
    except KeyError:
        raise UsageError(f"Unknown command '{name}'{_suggest(str(name), list(COMMANDS))}") from None


def config_from_mapping(entries: Dict[str, Any], command: Optional[str] = None, source: str = "parameters") -> RunConfig:
    """
    Build a RunConfig from raw key/value entries.

    Keys other than the global ones must be parameters of the command (or of
    any command when none is chosen).
    """
    entries = dict(entries)
    command = entries.pop("command", None) or command
    if command is not None:
        command = str(command)
        _command(command)
    params = {}
    allowed_params = _allowed_params(command)
    for key in list(entries):
        if key in GLOBAL_KEYS:
            continue
        if key not in allowed_params:
            raise UsageError(f"{source}: unknown key '{key}'{_suggest(key, list(GLOBAL_KEYS) + allowed_params)}")
        params[key] = entries.pop(key)
    try:
        seed = None if entries.get("seed") is None else int(entries["seed"])
        samples = None if entries.get("samples") is None else int(entries["samples"])
        workers = None if entries.get("workers") is None else int(entries["workers"])
    except (TypeError, ValueError) as e:
        raise UsageError(f"{source}: seed, samples and workers must be integers ({e})") from None
    fmt = entries.get("format")
    fmt = None if fmt is None else str(fmt).lower()
    if fmt is not None and fmt not in FORMATS:
        raise UsageError(f"{source}: format must be one of {FORMATS}, got '{fmt}'")
    timings = entries.get("timings", False)
    if not isinstance(timings, bool):
        raise UsageError(f"{source}: timings must be true or false")
    out = entries.get("out")
    return RunConfig(command, params, seed, None if out is None else str(out), fmt, samples, workers, timings)


def load_config(path: str, command: Optional[str] = None) -> RunConfig:
    """
    Parse a `key = value` config file.

    Blank lines and text after '#' are ignored.

    Args:
        path: Config file
        command: Command the file is used with, if already known

    Returns:
        RunConfig holding the file's values (defaults elsewhere)
    """
    if not os.path.isfile(path):
        raise UsageError(f"Config file not found: {path}")
    entries = {}
    with open(path, "r", encoding="utf-8") as handle:
        for number, raw in enumerate(handle, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not sep or not key or not value:
                raise UsageError(f"{path}:{number}: expected 'key = value', got '{raw.strip()}'")
            if key in entries:
                raise UsageError(f"{path}:{number}: duplicate key '{key}'")
            entries[key] = parse_scalar(value)
    logger.info(f"Loaded {len(entries)} entries from {path}")
    return config_from_mapping(entries, command, source=path)


# Parameter readers

def _text(params, key) -> str:
    return str(params[key]).strip()


def _float(params, key, positive: bool = False) -> float:
    try:
        value = float(params[key])
    except (TypeError, ValueError):
        raise UsageError(f"Parameter '{key}' must be a number, got '{params[key]}'") from None
    if positive and not value > 0:
        raise UsageError(f"Parameter '{key}' must be positive, got {value}")
    return value


def _int(params, key, minimum: int = 1) -> int:
    try:
        value = float(params[key])
    except (TypeError, ValueError):
        raise UsageError(f"Parameter '{key}' must be an integer, got '{params[key]}'") from None
    if value != int(value) or value < minimum:
        raise UsageError(f"Parameter '{key}' must be an integer >= {minimum}, got '{params[key]}'")
    return int(value)


def _number_list(params, key, cast=float) -> List:
    raw = str(params[key]).strip()
    if not raw:
        return []
    try:
        values = [float(item) for item in raw.split(",") if item.strip()]
    except ValueError:
        raise UsageError(f"Parameter '{key}' must be a comma-separated list of numbers, got '{raw}'") from None
    if cast is int:
        if any(v != int(v) or v < 1 for v in values):
            raise UsageError(f"Parameter '{key}' must list positive integers, got '{raw}'")
        return [int(v) for v in values]
    return values


def load_kernel_file(path: str) -> np.ndarray:
    """A whitespace-separated numeric grid; a single row is a first-degree kernel."""
    if not os.path.isfile(path):
        raise UsageError(f"Kernel file not found: {path}")
    try:
        grid = np.loadtxt(path, ndmin=2)
    except ValueError as e:
        raise UsageError(f"Kernel file {path} is not a numeric grid: {e}") from None
    return grid[0] if grid.shape[0] == 1 else grid


def build_functional(params: Dict[str, Any]) -> Functional:
    """
    Functional from the built-in corpus.

    v2, v4, cos: g(x(alpha)); int-square: integral of x^2; mean-square: the
    square of the integral of x; mean: the integral of x; product:
    x(1/4) x(3/4); volterra: kernels read from the comma-separated files in
    `kernel`, plus `constant`.

    The integral and Volterra entries other than volterra have no explicit
    alpha or t dependence, so one node per cell is exact.
    """
    name = _text(params, "functional")
    alpha = _float(params, "alpha")
    if not 0.0 <= alpha <= 1.0:
        raise UsageError(f"alpha must lie in [0, 1], got {alpha}")
    if name == "v2":
        return PointCylinder(lambda v: v ** 2, (alpha,))
    if name == "v4":
        return PointCylinder(lambda v: v ** 4, (alpha,))
    if name == "cos":
        return PointCylinder(np.cos, (alpha,))
    if name == "int-square":
        return IntegralCylinder(1, lambda x, a: x ** 2, cell_order=1)
    if name == "mean-square":
        return VolterraSeries((lambda t: np.zeros_like(t), lambda s, t: np.ones_like(s)), cell_order=1)
    if name == "mean":
        return VolterraSeries((lambda t: np.ones_like(t),), cell_order=1)
    if name == "product":
        return PointCylinder(lambda u, v: u * v, (0.25, 0.75))
    if name == "volterra":
        paths = [p.strip() for p in _text(params, "kernel").split(",") if p.strip()]
        if not paths:
            raise UsageError("The volterra functional needs --kernel with one or more kernel files")
        grids = [load_kernel_file(path) for path in paths]
        for degree, (path, grid) in enumerate(zip(paths, grids), start=1):
            if grid.ndim != degree:
                raise UsageError(f"Kernel file {path} is listed as degree {degree} but holds a "
                                 f"{grid.ndim}-dimensional grid")
        return VolterraSeries(tuple(kernel_from_grid(grid) for grid in grids), constant=_float(params, "constant"))
    raise UsageError(f"Unknown functional '{name}'{_suggest(name, FUNCTIONAL_NAMES)}")


FUNCTIONAL_NAMES = ["v2", "v4", "cos", "int-square", "mean-square", "mean", "product", "volterra"]
FUNCTIONAL_DEFAULTS = {"functional": "v2", "alpha": 0.5, "kernel": "", "constant": 0.0}


class _RowBuilder:
    """Collects rows carrying the run's parameter snapshot."""

    def __init__(self, cfg: RunConfig, params: Dict[str, Any], samples: Optional[int]):
        self.cfg = cfg
        self.snapshot = dict(params)
        self.snapshot["seed"] = cfg.resolved_seed
        if samples is not None:
            self.snapshot["samples"] = samples
        self.rows: List[ReportRow] = []
        self.started = time.perf_counter()

    def restart(self) -> None:
        self.started = time.perf_counter()

    def add(self, metric: str, value, std_error: Optional[float] = None, **extra) -> None:
        seconds = time.perf_counter() - self.started if self.cfg.timings else None
        self.rows.append(ReportRow(self.cfg.command, {**self.snapshot, **extra}, metric, _plain(value),
                                   _plain(std_error), seconds))


def _run_section_mean(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    func = build_functional(params)
    R = _float(params, "R", positive=True)
    convention = parse_convention(_text(params, "convention"))
    method = _text(params, "method")
    samples = cfg.samples or COMMANDS["section-mean"].default_samples
    rows = _RowBuilder(cfg, params, samples if method == "monte-carlo" else None)
    for index, n in enumerate(_number_list(params, "n", int)):
        rows.restart()
        section = SphereSection(n, R)
        if method == "quadrature":
            estimate = section_mean_quadrature(func, section, convention, _int(params, "order", 2))
        elif method == "monte-carlo":
            estimate = section_mean_monte_carlo(func, section, samples, sweep_seed(cfg.resolved_seed, index),
                                                cfg.workers)
        else:
            raise UsageError(f"method must be 'quadrature' or 'monte-carlo', got '{method}'")
        rows.add("mean", estimate.value, estimate.std_error, n=n)
    return rows.rows


def _run_limit(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    func = build_functional(params)
    R = _float(params, "R", positive=True)
    method = _text(params, "method")
    samples = cfg.samples or COMMANDS["limit"].default_samples
    rows = _RowBuilder(cfg, params, samples if method == "monte-carlo" else None)
    if method == "quadrature":
        rows.add("limit", gaussian_limit_mean(func, R, _int(params, "order", 2)), 0.0)
    elif method == "monte-carlo":
        estimate = gaussian_limit_monte_carlo(func, R, samples, cfg.resolved_seed, cfg.workers)
        rows.add("limit", estimate.value, estimate.std_error)
    else:
        raise UsageError(f"method must be 'quadrature' or 'monte-carlo', got '{method}'")
    return rows.rows


def _run_converge(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    func = build_functional(params)
    quadrature = isinstance(func, PointCylinder) and func.arity == 1
    samples = cfg.samples or COMMANDS["converge"].default_samples
    rows = _RowBuilder(cfg, params, None if quadrature else samples)
    report = convergence_report(func, _float(params, "R", positive=True), _number_list(params, "n", int),
                                _text(params, "convention"), _int(params, "order", 2) if quadrature else samples,
                                cfg.resolved_seed, cfg.workers)
    for row in report.rows:
        rows.add("mean", row.mean, row.std_error, n=row.n)
        rows.add("abs_error", row.abs_error, None, n=row.n)
        rows.add("limit", report.limit, None, n=row.n)
    rows.add("degenerate", int(report.degenerate))
    if not report.degenerate:
        rows.add("exponent", report.exponent)
        rows.add("r_squared", report.r_squared)
    return rows.rows


def _run_field(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    func = build_functional(params)
    samples = cfg.samples or COMMANDS["field"].default_samples
    rows = _RowBuilder(cfg, params, samples)
    for n, estimate in field_convergence(func, _number_list(params, "n", int), samples, cfg.resolved_seed,
                                         cfg.workers):
        rows.add("mean", estimate.value, estimate.std_error, n=n)
    return rows.rows


def _run_density(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    predicate = parse_predicate(_text(params, "set"))
    rows = _RowBuilder(cfg, params, None)
    N_list = _number_list(params, "N_list", int)
    if N_list:
        diagnostic = convergence_diagnostic(predicate, N_list)
        for N, value in diagnostic.points:
            rows.add("density", value, checkpoint=N)
        rows.add("oscillation", diagnostic.oscillation)
        return rows.rows
    estimate = density(predicate, _int(params, "N"), _int(params, "checkpoints"))
    for N, value in estimate.trace:
        rows.add("trace", value, checkpoint=N)
    rows.add("count", estimate.count)
    rows.add("density", estimate.value)
    return rows.rows


def _run_passage(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    reps = _int(params, "reps", 2)
    dt = _float(params, "dt", positive=True)
    horizon = _float(params, "horizon", positive=True)
    engine = _text(params, "engine")
    radius_text = _text(params, "radius")
    rows = _RowBuilder(cfg, params, None)
    emitted = []
    for index, n in enumerate(_number_list(params, "n", int)):
        rows.restart()
        radius = _float(params, "radius", positive=True) if radius_text else math.sqrt(n)
        brownian = BrownianConfig(n, dt, horizon, sweep_seed(cfg.resolved_seed, index), engine)
        stats = first_passage_stats(brownian, radius, reps, cfg.workers)
        uncensored = stats.passage_times.size
        rows.add("mean_T", stats.mean_T, math.sqrt(stats.var_T / uncensored), n=n)
        rows.add("var_T", stats.var_T, n=n)
        rows.add("censored", stats.censored, n=n)
        if uncensored >= MIN_KS_SAMPLES:
            rows.add("exit_ks", exit_marginal_ks(stats), n=n)
        emitted.extend((n, t) for t in stats.passage_times)
    if cfg.emit_times:
        _write_times(cfg.emit_times, emitted)
    return rows.rows


def _write_times(path: str, times: Sequence[Tuple[int, float]]) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(["n", "T"])
        for n, t in times:
            writer.writerow([n, repr(float(t))])
    logger.info(f"Wrote {len(times)} passage times to {path}")


def _run_wiener(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    samples = cfg.samples or COMMANDS["wiener"].default_samples
    grid = _int(params, "grid", 2)
    rows = _RowBuilder(cfg, params, samples)
    for modes, variation in quadratic_variation_curve(_number_list(params, "modes", int), grid, samples,
                                                      cfg.resolved_seed, cfg.workers):
        rows.add("quadratic_variation", variation, modes=modes)
    endpoints = sample_wiener_paths(1, 2, samples, sweep_seed(cfg.resolved_seed, 10**6), cfg.workers)[:, -1]
    variance = float(np.var(endpoints, ddof=1))
    rows.add("w1_variance", variance, variance * math.sqrt(2.0 / (samples - 1)))
    return rows.rows


def _run_green(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    name = _text(params, "field")
    point = _number_list(params, "P")
    if len(point) != 3:
        raise UsageError(f"P must have three coordinates, got '{params['P']}'")
    boundary = BoundarySpec.sphere(_float(params, "a", positive=True), _int(params, "polar_order", 2),
                                   _int(params, "azimuth_order", 3))
    terms = green_terms(boundary, named_field(name), point, _int(params, "shells", 2))
    exact = field_value(name, point)
    rows = _RowBuilder(cfg, params, None)
    rows.add("single", terms.single)
    rows.add("double", terms.double)
    rows.add("volume", terms.volume)
    rows.add("total", terms.total)
    rows.add("exact", exact)
    rows.add("abs_error", abs(terms.total - exact))
    rows.add("near_boundary", int(terms.near_boundary))
    return rows.rows


# Self-test properties: each returns (passed, detail)

def _check_wallis() -> Tuple[bool, str]:
    worst = max(abs(wallis(n) - math.sqrt(math.pi) / 2 * math.exp(special.gammaln((n + 1) / 2)
                                                                    - special.gammaln(n / 2 + 1))) / wallis(n)
                for n in range(0, 61))
    return worst < 1e-12, f"max relative gap {worst:.2e}"


def _check_ball_volume() -> Tuple[bool, str]:
    worst = max(abs(ball_volume(n) - math.exp(n / 2 * math.log(math.pi) - special.gammaln(n / 2 + 1)))
                / ball_volume(n) for n in range(1, 31))
    return worst < 1e-10, f"max relative gap {worst:.2e}"


def _check_section_means() -> Tuple[bool, str]:
    v2 = PointCylinder(lambda v: v ** 2, (0.5,))
    gaps = []
    for n in (10, 100, 1000):
        section = SphereSection(n, 1.5)
        gaps.append(abs(section_mean_quadrature(v2, section, "surface-measure").value - 2.25))
        gaps.append(abs(section_mean_quadrature(v2, section, "slice-volume").value - n * 2.25 / (n + 2)))
    return max(gaps) < 1e-9, f"max gap {max(gaps):.2e}"


def _check_constancy() -> Tuple[bool, str]:
    func = IntegralCylinder(1, lambda x, a: x ** 2, cell_order=1)
    gaps = []
    for n in (10, 100, 1000):
        estimate = section_mean_monte_carlo(func, SphereSection(n, 1.0), 1000, 7)
        gaps.append(max(abs(estimate.value - 1.0), estimate.std_error))
    return max(gaps) < 1e-12, f"max deviation {max(gaps):.2e}"


def _check_gaussian_limit() -> Tuple[bool, str]:
    value = gaussian_limit_mean(PointCylinder(lambda v: v ** 4, (0.5,)), 1.0)
    return abs(value - 3.0) < 1e-10, f"limit {value:.12g}"


def _check_density() -> Tuple[bool, str]:
    evens = density(parse_predicate("even"), 100_000)
    squares = density(parse_predicate("square"), 1_000_000)
    ok = evens.value == 0.5 and squares.count == 1000
    return ok, f"evens {evens.value}, squares {squares.count}"


def _check_green() -> Tuple[bool, str]:
    boundary = BoundarySpec.sphere(1.0)
    one = named_field("one")
    inside = double_layer(boundary, one.U, (0.1, 0.2, -0.3), inside=True)
    outside = double_layer(boundary, one.U, (0.0, 2.0, 0.0), inside=False)
    field_x = named_field("x")
    rebuilt = green_reconstruct(boundary, field_x, (0.2, 0.0, 0.0))
    identity = abs(rebuilt - single_layer(boundary, field_x.dU_dnu, (0.2, 0.0, 0.0))
                   - double_layer(boundary, field_x.U, (0.2, 0.0, 0.0)))
    ok = abs(inside - 1) < 1e-6 and abs(outside) < 1e-6 and abs(rebuilt - 0.2) < 1e-4 and identity < 1e-12
    return ok, f"inside {inside:.8f}, outside {outside:.2e}, x(P) {rebuilt:.8f}"


def _check_gateaux() -> Tuple[bool, str]:
    func = IntegralCylinder(1, lambda x, a: x ** 2, cell_order=1)
    x = StepFunction(np.linspace(0.1, 0.9, 8))
    h = StepFunction(np.cos(np.arange(8)))
    exact = 2.0 * float(np.mean(x.values * h.values))
    value = gateaux_differential(func, x, h)
    doubled = gateaux_differential(func, x, StepFunction(2.0 * h.values))
    ok = abs(value - exact) < 1e-6 and abs(doubled - 2 * value) < 1e-8
    return ok, f"derivative {value:.10f} vs {exact:.10f}"


def _check_determinism() -> Tuple[bool, str]:
    func = PointCylinder(np.cos, (0.3,))
    section = SphereSection(20, 1.0)
    serial = section_mean_monte_carlo(func, section, 25_000, 11, workers=1).value
    parallel = section_mean_monte_carlo(func, section, 25_000, 11, workers=4).value
    return serial == parallel, f"serial {serial!r}, parallel {parallel!r}"


def _check_passage() -> Tuple[bool, str]:
    stats = first_passage_stats(BrownianConfig(10, 1e-3, 5.0, 3), math.sqrt(10), 4000)
    return 0.9 <= stats.mean_T <= 1.1, f"mean_T {stats.mean_T:.4f}"


SELFTEST_PROPERTIES: Dict[str, Callable[[], Tuple[bool, str]]] = {
    "wallis-recursion": _check_wallis,
    "ball-volume": _check_ball_volume,
    "section-mean-quadrature": _check_section_means,
    "integral-constancy": _check_constancy,
    "gaussian-limit": _check_gaussian_limit,
    "natural-density": _check_density,
    "green-decomposition": _check_green,
    "gateaux-differential": _check_gateaux,
    "chunk-determinism": _check_determinism,
    "passage-mean": _check_passage,
}


def selftest() -> List[Tuple[str, bool, str]]:
    """Run every self-test property; failures are reported, never raised."""
    results = []
    for name, check in SELFTEST_PROPERTIES.items():
        try:
            passed, detail = check()
        except Exception as e:
            logger.error(f"Self-test {name} raised: {str(e)}")
            passed, detail = False, f"raised {type(e).__name__}: {e}"
        logger.info(f"Self-test {name}: {'PASS' if passed else 'FAIL'} ({detail})")
        results.append((name, bool(passed), detail))
    return results


def _run_selftest(cfg: RunConfig, params: Dict[str, Any]) -> List[ReportRow]:
    rows = _RowBuilder(cfg, params, None)
    for name, passed, _ in selftest():
        rows.add(name, 1 if passed else 0)
    return rows.rows


COMMANDS: Dict[str, Command] = {
    "section-mean": Command(
        "section-mean", "Mean of a functional over the n-th sections of the L2 sphere",
        {**FUNCTIONAL_DEFAULTS, "R": 1.0, "n": "10,100,1000", "convention": "surface-measure",
         "method": "quadrature", "order": config.LEGENDRE_ORDER},
        _run_section_mean, 100_000),
    "limit": Command(
        "limit", "Gaussian limit of the section means",
        {**FUNCTIONAL_DEFAULTS, "R": 1.0, "method": "quadrature", "order": config.HERMITE_ORDER},
        _run_limit, 100_000),
    "converge": Command(
        "converge", "Section means against the Gaussian limit with a log-log fit",
        {**FUNCTIONAL_DEFAULTS, "R": 1.0, "n": "10,30,100,300,1000", "convention": "surface-measure",
         "order": config.LEGENDRE_ORDER},
        _run_converge, 100_000),
    "field": Command(
        "field", "Field integral over step functions with values in [0, 1]",
        {**FUNCTIONAL_DEFAULTS, "functional": "mean-square", "n": "2,10,100"},
        _run_field, 100_000),
    "density": Command(
        "density", "Natural density of a built-in integer set",
        {"set": "even", "N": 1_000_000, "checkpoints": config.DENSITY_CHECKPOINTS, "N_list": ""},
        _run_density),
    "passage": Command(
        "passage", "First passage of Brownian motion through the sphere of radius sqrt(n)",
        {"n": "10", "reps": 10_000, "dt": config.PASSAGE_DT, "horizon": config.PASSAGE_HORIZON,
         "engine": config.PASSAGE_ENGINE, "radius": ""},
        _run_passage),
    "wiener": Command(
        "wiener", "Schauder partial sums of the Wiener process",
        {"modes": "1,4,16,64,256,1024", "grid": 1025},
        _run_wiener, 2_000),
    "green": Command(
        "green", "Green's three-term decomposition on a sphere",
        {"field": "x", "a": 1.0, "P": "0.2,0,0", "polar_order": config.GREEN_POLAR_ORDER,
         "azimuth_order": config.GREEN_AZIMUTH_ORDER, "shells": config.GREEN_VOLUME_SHELLS},
        _run_green),
    "selftest": Command("selftest", "Property checks across all modules", {}, _run_selftest),
}


def execute(cfg: RunConfig) -> List[ReportRow]:
    """
    Run a command and return its report rows.

    Args:
        cfg: Run configuration with the command set

    Returns:
        Rows in a deterministic order
    """
    if not cfg.command:
        raise UsageError(f"No command given; expected one of {sorted(COMMANDS)}")
    spec = _command(cfg.command)
    for key in cfg.params:
        if key not in spec.defaults:
            raise UsageError(f"Unknown parameter '{key}' for {spec.name}{_suggest(key, list(spec.defaults))}")
    if cfg.samples is not None and cfg.samples < 2:
        raise UsageError(f"samples must be at least 2, got {cfg.samples}")
    params = {**spec.defaults, **cfg.params}
    logger.info(f"Running {spec.name} with seed {cfg.resolved_seed} and parameters {params}")
    return spec.runner(cfg, params)


def report_path(cfg: RunConfig) -> str:
    if cfg.out:
        return cfg.out
    return os.path.join(PROJECT_ROOT, config.REPORT_DIR, f"{cfg.command}.{cfg.resolved_format}")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_report(rows: Sequence[ReportRow], path: str, fmt: str, command: str, seed: int) -> str:
    """
    Write report rows as CSV or JSON.

    CSV: a '# generated' metadata line, then the header experiment, sorted
    parameter keys, metric, value, std_error, seconds. JSON: an object with
    'generated', 'command', 'seed' and 'rows'. Only the metadata carries the
    timestamp.
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    generated = datetime.now(timezone.utc).isoformat(timespec="seconds")
    if fmt == "csv":
        keys = sorted({key for row in rows for key in row.params})
        with open(path, "w", newline="", encoding="utf-8") as handle:
            handle.write(f"# generated {generated} command={command} seed={seed}\n")
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(["experiment", *keys, "metric", "value", "std_error", "seconds"])
            for row in rows:
                writer.writerow([row.experiment, *(_cell(row.params.get(key)) for key in keys),
                                 row.metric, _cell(row.value), _cell(row.std_error), _cell(row.seconds)])
    elif fmt == "json":
        document = {"generated": generated, "command": command, "seed": seed,
                    "rows": [row.to_dict() for row in rows]}
        with open(path, "w", encoding="utf-8") as handle:
            json.dump(document, handle, indent=2)
            handle.write("\n")
    else:
        raise UsageError(f"format must be one of {FORMATS}, got '{fmt}'")
    logger.info(f"Wrote {len(rows)} rows to {path}")
    return path


def exit_code(error: BaseException) -> int:
    """2 for bad input, 3 for anything else."""
    if isinstance(error, (UsageError, DomainError)):
        return EXIT_USAGE
    return EXIT_FAILURE


@dataclass(frozen=True)
class RunResult:
    status: int
    path: Optional[str]
    rows: Tuple[ReportRow, ...] = ()
    error: Optional[str] = None


def run(command: str, cfg: RunConfig) -> RunResult:
    """
    Execute a command and write its report.

    Args:
        command: Command name
        cfg: Run configuration

    Returns:
        RunResult; status 0 on success, 2 for bad input, 3 for numeric
        failures and for a selftest with a failing property
    """
    cfg = replace(cfg, command=command)
    try:
        rows = execute(cfg)
        path = write_report(rows, report_path(cfg), cfg.resolved_format, command, cfg.resolved_seed)
    except GateauxError as e:
        logger.error(f"{command} failed: {str(e)}")
        return RunResult(exit_code(e), None, error=str(e))
    except Exception as e:
        logger.error(f"{command} failed with {type(e).__name__}: {str(e)}")
        return RunResult(EXIT_FAILURE, None, error=f"{type(e).__name__}: {e}")
    if command == "selftest" and any(row.value != 1 for row in rows):
        return RunResult(EXIT_FAILURE, path, tuple(rows), "self-test failures")
    return RunResult(EXIT_OK, path, tuple(rows))
