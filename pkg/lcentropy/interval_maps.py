"""
Interval maps and Bowen spanning/separated entropy estimates.
"""

import math
from fractions import Fraction
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, model_validator
from scipy.optimize import bisect
from scipy.stats import linregress

from lcentropy.core import (
    CheckResult,
    EpsilonGrid,
    InfeasibleParameterError,
    TrajectoryBuffer,
    as_fraction,
    float_radius,
    orbit_segment,
    real_line,
)
from lcentropy.correlation import NOISE_FLOOR, local_correlation_entropy, select_plateau

logger = structlog.get_logger(__name__)

RATIONAL_DENOMINATOR = 3 ** 33
INVARIANCE_TOLERANCE = 1e-12


def logistic_period3_alpha(xtol: float = 1e-13) -> float:
    """Root in (1, 2) of a^3 - 2a^2 + a - 1, i.e. 1 - a(1 - a)^2 = 0."""
    return float(bisect(lambda a: a ** 3 - 2 * a ** 2 + a - 1, 1.0, 2.0, xtol=xtol))


def lap_count(slope: float) -> int:
    """Smallest odd L >= max(3, slope)."""
    laps = max(3, math.ceil(slope))
    return laps if laps % 2 else laps + 1


def zigzag(u: Any, slope: Any, laps: int) -> Any:
    """Constant-slope zigzag on [0, 1] with g(0) = 0, g(1) = 1 and ``laps`` monotone laps.

    Turning values alternate between high = (s + L - 2)/(2L - 2) and 1 - high. Works on
    floats and, for rational slopes, on Fractions.
    """
    if isinstance(slope, int):
        slope = Fraction(slope)
    high = (slope + laps - 2) / (2 * laps - 2)
    low = 1 - high
    first = high / slope
    if u <= first:
        return slope * u
    middle = (high - low) / slope
    k = min(laps - 2, int((u - first) // middle)) if middle > 0 else laps - 2
    t = u - first - k * middle
    if k < laps - 2 and k % 2 == 0:
        return high - slope * t
    return low + slope * t


class IntervalMapSpec(BaseModel):
    """One of the example maps: tent, logistic, countable_piece or identity."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    kind: Literal["tent", "logistic", "countable_piece", "identity"]
    alpha: Optional[float] = None
    lambda_target: Optional[float] = None
    piece_count: int = 1
    slopes: Optional[List[Any]] = None
    domain: Optional[Tuple[float, float]] = None

    @model_validator(mode="after")
    def fill_defaults(self):
        if self.kind == "logistic":
            if self.alpha is None:
                self.alpha = logistic_period3_alpha()
            if not 0 < self.alpha <= 2:
                raise ValueError("logistic alpha must lie in (0, 2]")
            default_domain = (-1.0, 1.0)
        else:
            default_domain = (0.0, 1.0)
        if self.kind == "countable_piece":
            if self.piece_count < 1:
                raise ValueError("piece_count must be >= 1")
            if self.slopes is None:
                if self.lambda_target is None or not self.lambda_target > 0:
                    raise ValueError("countable_piece needs lambda_target > 0")
                self.slopes = self._default_slopes()
            if len(self.slopes) != self.piece_count or any(s < 1 for s in self.slopes):
                raise ValueError("countable_piece needs piece_count slopes, each >= 1")
        if self.domain is None:
            self.domain = default_domain
        return self

    def _default_slopes(self) -> List[float]:
        if math.isinf(self.lambda_target):
            return [float(n + 1) for n in range(1, self.piece_count + 1)]
        return [math.exp(self.lambda_target * (1 - 1 / (n + 1))) for n in range(1, self.piece_count + 1)]

    def piece_interval(self, n: int) -> Tuple[Fraction, Fraction]:
        """I_n = [1/(n+1), 1/n]."""
        if not 1 <= n <= self.piece_count:
            raise ValueError(f"piece {n} outside 1..{self.piece_count}")
        return Fraction(1, n + 1), Fraction(1, n)

    def piece_of(self, x: Any) -> Optional[int]:
        """Index n with x in I_n (the larger n on shared endpoints), None on the identity part."""
        if self.kind != "countable_piece" or x <= 0:
            return None
        n = int(1 / x) if x < 1 else 1
        return n if n <= self.piece_count else None

    def piece_entropy(self, n: int) -> float:
        """log s_n."""
        return math.log(self.slopes[n - 1])

    def __call__(self, x: Any) -> Any:
        if self.kind == "identity":
            return x
        if self.kind == "tent":
            return 2 * min(x, 1 - x)
        if self.kind == "logistic":
            return 1 - self.alpha * x * x
        n = self.piece_of(x)
        if n is None:
            return x
        left, right = self.piece_interval(n)
        width = right - left
        if isinstance(x, float):
            left, width = float(left), float(width)
        slope = self.slopes[n - 1]
        return left + width * zigzag((x - left) / width, slope, lap_count(slope))

    def evaluate(self, xs: np.ndarray) -> np.ndarray:
        if self.kind == "identity":
            return xs.copy()
        if self.kind == "tent":
            return 2 * np.minimum(xs, 1 - xs)
        if self.kind == "logistic":
            return 1 - self.alpha * xs * xs
        return np.fromiter((self(float(x)) for x in xs), dtype=np.float64, count=len(xs))

    def check_invariant(self, samples: int = 1001) -> bool:
        """f(domain) lies in the domain on a sample grid."""
        lo, hi = self.domain
        values = self.evaluate(np.linspace(lo, hi, samples))
        return bool(np.all(values >= lo - INVARIANCE_TOLERANCE) and np.all(values <= hi + INVARIANCE_TOLERANCE))


def countable_piece_map(lambda_target: float, piece_count: int, slopes: Optional[Sequence[Any]] = None) -> IntervalMapSpec:
    if slopes is None and not lambda_target > 0:
        raise ValueError("lambda_target must be > 0")
    return IntervalMapSpec(
        kind="countable_piece",
        lambda_target=lambda_target,
        piece_count=piece_count,
        slopes=list(slopes) if slopes is not None else None,
    )


def countable_piece_bound(spec: IntervalMapSpec, x: Any) -> Tuple[float, Fraction]:
    """(bound, width) for a point of a countable-piece map.

    The bound sits halfway between log s_n of the point's piece (0 on the identity part)
    and lambda, or log s_{n+1} = log(n + 2) when lambda is infinite. Width is that of
    I_n; points on the identity part use the smallest piece.
    """
    if spec.kind != "countable_piece":
        raise ValueError("countable_piece_bound needs a countable_piece map")
    if spec.lambda_target is None:
        raise ValueError("countable_piece_bound needs lambda_target")
    n = spec.piece_of(x)
    last = spec.piece_count
    if n is None:
        ceiling, width = 0.0, Fraction(1, last * (last + 1))
        upper = math.log(last + 2) if math.isinf(spec.lambda_target) else spec.lambda_target
    else:
        ceiling, width = spec.piece_entropy(n), Fraction(1, n * (n + 1))
        upper = math.log(n + 2) if math.isinf(spec.lambda_target) else spec.lambda_target
    return (ceiling + upper) / 2, width


def random_rational_point(rng: np.random.Generator, domain: Tuple[float, float] = (0.0, 1.0)) -> Fraction:
    """Uniform point a / 3^33 of the domain; exact tent orbits through it stay aperiodic at desk scale."""
    lo, hi = Fraction(domain[0]), Fraction(domain[1])
    a = int(rng.integers(1, RATIONAL_DENOMINATOR))
    return lo + (hi - lo) * Fraction(a, RATIONAL_DENOMINATOR)


def map_trajectory(spec: IntervalMapSpec, x0: Any, length: int, label: str = "") -> TrajectoryBuffer:
    """Orbit of x0 stored as floats; rational starting points iterate exactly when the map allows."""
    exact = isinstance(x0, Fraction) and spec.kind in ("tent", "identity")
    if spec.kind == "countable_piece" and isinstance(x0, Fraction):
        exact = all(isinstance(s, (int, Fraction)) for s in spec.slopes)
    start = x0 if exact else float(x0)
    lo, hi = spec.domain
    return orbit_segment(
        spec,
        start,
        length,
        space=real_line(diameter_hint=hi - lo),
        origin_label=label or f"{spec.kind}@{float(x0):.12g}",
        project=float,
    )


def _canonical(points: Any) -> Tuple[Optional[np.ndarray], Optional[list]]:
    if isinstance(points, np.ndarray):
        array = points.astype(np.float64, copy=False)
    else:
        items = list(points)
        if not items:
            raise ValueError("points must be nonempty")
        if any(isinstance(p, (Fraction, str)) for p in items):
            return None, sorted(as_fraction(p) for p in items)
        array = np.asarray(items, dtype=np.float64)
    if array.size == 0:
        raise ValueError("points must be nonempty")
    if array.ndim == 1:
        array = array[:, None]
    order = np.lexsort(array.T[::-1])
    return array[order], None


def _greedy_centres(
    points: Any,
    eps: Any,
    metric: Optional[Callable[[Any, Any], Any]],
    limit: Optional[int] = None,
) -> int:
    """Greedy: take the first uncovered point, discard everything within eps of it.

    The centres form a maximal eps-separated set (distance > eps) that also eps-spans.
    Counting stops once it exceeds ``limit``. Float points compare in float arithmetic, so
    0.9 - 0.6 > 0.3; pass Fractions or decimal strings for exact boundary cases.
    """
    if isinstance(eps, str):
        eps = as_fraction(eps)
    if not eps > 0:
        raise ValueError("eps must be > 0")
    array, exact = (None, None) if metric is not None else _canonical(points)
    if array is not None:
        radius = float_radius(eps)
        uncovered = np.ones(len(array), dtype=bool)
        centres = 0
        while True:
            remaining = np.flatnonzero(uncovered)
            if remaining.size == 0 or (limit is not None and centres > limit):
                return centres
            centre = array[remaining[0]]
            distance = np.abs(array[remaining] - centre).max(axis=1)
            uncovered[remaining[distance <= radius]] = False
            centres += 1
    items = exact if exact is not None else sorted(points)
    if not items:
        raise ValueError("points must be nonempty")
    metric = metric or (lambda a, b: abs(a - b))
    uncovered = list(items)
    centres = 0
    while uncovered and (limit is None or centres <= limit):
        centre = uncovered[0]
        uncovered = [p for p in uncovered if metric(p, centre) > eps]
        centres += 1
    return centres


def spanning_number(points: Any, eps: Any, metric: Optional[Callable[[Any, Any], Any]] = None) -> int:
    """Greedy upper bound on the smallest eps-spanning subset (Chebyshev metric for 2-D arrays)."""
    return _greedy_centres(points, eps, metric)


def separated_number(
    points: Any,
    eps: Any,
    metric: Optional[Callable[[Any, Any], Any]] = None,
    limit: Optional[int] = None,
) -> int:
    """Greedy lower bound on the largest eps-separated subset."""
    return _greedy_centres(points, eps, metric, limit)


class TopologicalEstimate(BaseModel):
    value: float
    per_eps_slopes: List[Tuple[float, float]]
    plateau: bool
    flag: Optional[str] = None
    counts: Dict[str, List[Tuple[int, int]]]


def bowen_windows(spec: IntervalMapSpec, starts: np.ndarray, m: int) -> np.ndarray:
    """Rows (x, f(x), ..., f^{m-1}(x)) for every starting point."""
    windows = np.empty((len(starts), m), dtype=np.float64)
    windows[:, 0] = starts
    for h in range(1, m):
        windows[:, h] = spec.evaluate(windows[:, h - 1])
    if not np.all(np.isfinite(windows)):
        raise InfeasibleParameterError(f"{spec.kind} orbit left the reals within {m} steps")
    return windows


def topological_entropy_estimate(
    spec: IntervalMapSpec,
    grid_size: int = 4000,
    m_list: Sequence[int] = tuple(range(1, 11)),
    eps_list: Sequence[float] = (0.2, 0.1, 0.05),
    domain: Optional[Tuple[float, float]] = None,
    tolerance: float = 0.05,
) -> TopologicalEstimate:
    """Slope of log s_m(eps) versus m on a uniform grid of starting points.

    m-values whose separated count exceeds a quarter of the grid are saturated and
    dropped. ``domain`` restricts the grid to a subinterval; radii scale with its width.
    """
    if grid_size < 1000:
        raise InfeasibleParameterError("grid_size must be >= 1000")
    lo, hi = domain or spec.domain
    scale = (hi - lo) / (spec.domain[1] - spec.domain[0])
    m_list = sorted(set(int(m) for m in m_list))
    radii = sorted((float(e) * scale for e in eps_list), reverse=True)
    windows = bowen_windows(spec, np.linspace(lo, hi, grid_size), m_list[-1])

    slopes = []
    counts = {}
    for eps in radii:
        rows = [(m, separated_number(windows[:, :m], eps, limit=grid_size // 4)) for m in m_list]
        counts[f"{eps:.6g}"] = rows
        usable = [(m, s) for m, s in rows if s <= grid_size / 4]
        if len(usable) >= 3:
            with np.errstate(divide="ignore", invalid="ignore"):
                fit = linregress([m for m, _ in usable], [math.log(s) for _, s in usable])
            slopes.append((eps, float(fit.slope)))
    if not slopes:
        raise InfeasibleParameterError("every radius saturated before three m values; enlarge the grid or radii")
    index, plateau = select_plateau([s for _, s in slopes], tolerance)
    estimate = TopologicalEstimate(
        value=max(0.0, slopes[index][1]),
        per_eps_slopes=slopes,
        plateau=plateau,
        flag=None if plateau else "no plateau",
        counts=counts,
    )
    logger.info("Topological entropy estimate", kind=spec.kind, value=estimate.value, plateau=plateau)
    return estimate


class TheoremBReport(BaseModel):
    seed: int
    tent_topological: float
    tent_local: List[float]
    logistic_alpha: float
    logistic_local: float
    logistic_topological: float
    countable_local: List[Tuple[float, float, float]]
    countable_trend: List[Tuple[int, float]]
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)


def _check(name: str, passed: bool, detail: str, **values: Any) -> CheckResult:
    if not passed:
        logger.error("Check failed", check=name, detail=detail)
    return CheckResult(name=name, passed=bool(passed), detail=detail, values=values)


def theorem_b_report(
    seed: int,
    samples: int = 20,
    n: int = 5000,
    m_list: Sequence[int] = (1, 2, 3, 4, 5, 6),
    grid: Optional[EpsilonGrid] = None,
    grid_size: int = 4000,
    lambda_target: float = 1.0,
    piece_counts: Sequence[int] = (1, 2, 4),
    countable_samples: int = 8,
    tent_floor: float = 0.55,
    slack: float = 0.1,
    workers: int = 1,
) -> TheoremBReport:
    """Desk-scale evidence on interval maps: tent, period-3 logistic and countable-piece maps."""
    rng = np.random.default_rng(seed)
    grid = grid or EpsilonGrid.dyadic(3, 6)
    length = n + max(m_list) - 1
    checks = []

    tent = IntervalMapSpec(kind="tent")
    tent_top = topological_entropy_estimate(tent, grid_size=grid_size).value
    checks.append(_check("tent topological entropy", 0.6 <= tent_top <= 0.8, f"{tent_top:.4f} in [0.6, 0.8]"))
    tent_local = []
    for index in range(samples):
        traj = map_trajectory(tent, random_rational_point(rng), length, label=f"tent#{index}")
        upper, _ = local_correlation_entropy(traj, grid, m_list, n, workers=workers)
        tent_local.append(upper.value)
    share = sum(1 for v in tent_local if v > tent_floor) / len(tent_local)
    checks.append(_check("tent local entropy", samples >= 20 and share >= 0.9, f"{share:.0%} of {samples} points exceed {tent_floor}"))
    checks.append(
        _check("tent upper bound", max(tent_local) <= tent_top + slack, f"max local {max(tent_local):.4f} <= {tent_top:.4f} + {slack}")
    )

    logistic = IntervalMapSpec(kind="logistic")
    alpha = logistic.alpha
    residual = abs(1 - alpha * (1 - alpha) ** 2)
    checks.append(_check("logistic parameter", residual < 1e-10 and 1 < alpha < 2, f"residual {residual:.2e}"))
    x0 = float(rng.uniform(-1.0, 1.0))
    traj = map_trajectory(logistic, x0, length, label="logistic")
    tail = traj.values()[-3:]
    cycle = abs(logistic(logistic(logistic(float(tail[0])))) - float(tail[0]))
    logistic_local, _ = local_correlation_entropy(traj, grid, m_list, n, workers=workers)
    logistic_top = topological_entropy_estimate(logistic, grid_size=grid_size).value
    checks.append(_check("logistic attracting 3-cycle", cycle < 1e-8, f"|f^3(x) - x| = {cycle:.2e}"))
    checks.append(_check("logistic local entropy", logistic_local.value < NOISE_FLOOR, f"{logistic_local.value:.4f} < {NOISE_FLOOR}"))
    checks.append(_check("logistic topological entropy", logistic_top > 0, f"{logistic_top:.4f} > 0"))

    countable = countable_piece_map(lambda_target, max(piece_counts))
    countable_local = []
    for index in range(countable_samples):
        x = float(rng.uniform(0.0, 1.0))
        bound, width = countable_piece_bound(countable, x)
        piece_grid = EpsilonGrid(tuple(eps * width for eps in grid.values))
        traj = map_trajectory(countable, x, length, label=f"countable#{index}")
        upper, _ = local_correlation_entropy(traj, piece_grid, m_list, n, workers=workers)
        countable_local.append((x, upper.value, bound))
    worst = max(value - bound for _, value, bound in countable_local)
    checks.append(
        _check(
            "countable piece local entropy",
            worst < 0,
            f"local - (log s_n + lambda)/2 = {worst:.4f} < 0 with eps scaled to the piece width",
        )
    )

    trend = []
    for count in sorted(set(piece_counts)):
        spec = countable_piece_map(lambda_target, count)
        lo, hi = spec.piece_interval(count)
        trend.append((count, topological_entropy_estimate(spec, grid_size=grid_size, domain=(float(lo), float(hi))).value))
    values = [v for _, v in trend]
    rising = all(b >= a - NOISE_FLOOR for a, b in zip(values, values[1:]))
    checks.append(
        _check(
            "countable piece trend",
            rising and max(values) <= lambda_target + slack,
            f"piece estimates {['%.3f' % v for v in values]} rise toward {lambda_target}",
        )
    )

    report = TheoremBReport(
        seed=seed,
        tent_topological=tent_top,
        tent_local=tent_local,
        logistic_alpha=alpha,
        logistic_local=logistic_local.value,
        logistic_topological=logistic_top,
        countable_local=countable_local,
        countable_trend=trend,
        checks=checks,
    )
    logger.info("Theorem B report", passed=report.passed, checks=len(checks))
    return report
