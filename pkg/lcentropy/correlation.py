"""
Bowen metrics, correlation sums and local correlation entropy/dimension estimators.

Two counting paths produce identical rationals:
  - naive: every ordered pair (i, j) through the trajectory's metric;
  - fast: exact window classes for shift spaces (counts are sums of squared class
    sizes) and sort-based range counting for real trajectories.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from fractions import Fraction
from typing import Any, Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict
from scipy.stats import linregress

from lcentropy.core import (
    EpsilonGrid,
    InfeasibleParameterError,
    Radius,
    TrajectoryBuffer,
    WindowError,
    ensure_increasing,
    float_radius,
)
from lcentropy.symbolic import window_ranks

logger = structlog.get_logger(__name__)

DEFAULT_TOLERANCE = 0.05
DEFAULT_TAIL_FRACTION = 0.5
DEFAULT_MIN_RECURRENCES = 3
NOISE_FLOOR = 0.05
_FLUSH_SIZE = 1 << 20


class CellKey(NamedTuple):
    eps: Radius
    m: int
    n: int


class CorrelationEntry(BaseModel):
    """One correlation sum C_m(x, n, eps) = count / n^2."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    eps: Any
    m: int
    n: int
    count: int
    value: Fraction
    method: str


class CorrelationTable:
    """Correlation sums indexed by (eps, m, n)."""

    def __init__(self, traj_label: str, entries: Iterable[CorrelationEntry] = ()):
        self.traj_label = traj_label
        self.entries: Dict[CellKey, CorrelationEntry] = {}
        for entry in entries:
            self.add(entry)

    def add(self, entry: CorrelationEntry) -> None:
        self.entries[CellKey(entry.eps, entry.m, entry.n)] = entry

    def value(self, eps: Radius, m: int, n: int) -> Fraction:
        return self.entries[CellKey(eps, m, n)].value

    def methods(self) -> List[str]:
        return sorted({entry.method for entry in self.entries.values()})

    def rows(self) -> List[Tuple[str, int, int, int, str]]:
        """(eps, m, n, count, value) rows, eps descending then m, n ascending."""
        ordered = sorted(self.entries.values(), key=lambda e: (-e.eps, e.m, e.n))
        return [(str(e.eps), e.m, e.n, e.count, str(e.value)) for e in ordered]

    def __len__(self) -> int:
        return len(self.entries)


class LimitEstimate(BaseModel):
    """Tail min/max of C over an n-schedule (finite liminf/limsup)."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    lower: Fraction
    upper: Fraction
    schedule: List[int]
    values: List[Fraction]


class EntropyEstimate(BaseModel):
    """A plateau-selected slope of -log c versus m."""

    value: float
    per_eps_slopes: List[Tuple[float, float]]
    m_range: Tuple[int, int]
    plateau: bool
    flag: Optional[str] = None
    diagnostics: Dict[str, Any]


class ScalingReport(BaseModel):
    """Local entropy of f and f^k along the same point."""

    k: int
    h_f: float
    h_fk: float
    ratio: Optional[float]
    reliable: bool
    flag: Optional[str] = None
    h_f_lower: float
    h_fk_lower: float


def bowen_distance(traj: TrajectoryBuffer, i: int, j: int, m: int) -> Radius:
    """max over h < m of distance(traj[i+h], traj[j+h])."""
    if m < 1:
        raise ValueError("m must be >= 1")
    if i < 0 or j < 0 or max(i, j) + m - 1 >= len(traj):
        raise WindowError(f"window exceeds trajectory: i={i}, j={j}, m={m}, length={len(traj)}")
    states = traj.states
    distance = traj.space.distance
    best: Radius = 0
    for h in range(m):
        d = distance(states[i + h], states[j + h])
        if d > best:
            best = d
    return best


def _within(traj: TrajectoryBuffer, i: int, j: int, m: int, eps: Radius) -> bool:
    states = traj.states
    distance = traj.space.distance
    for h in range(m):
        if distance(states[i + h], states[j + h]) > eps:
            return False
    return True


def _naive_count(traj: TrajectoryBuffer, m: int, n: int, eps: Radius) -> int:
    count = n
    for i in range(n):
        for j in range(i + 1, n):
            if _within(traj, i, j, m, eps):
                count += 2
    return count


def correlation_sum(traj: TrajectoryBuffer, m: int, n: int, eps: Radius) -> Fraction:
    """(1/n^2) #{(i, j) : i, j < n, bowen_distance(i, j, m) <= eps}, naive pair loop."""
    traj.require(n, m)
    return Fraction(_naive_count(traj, m, n, eps), n * n)


def _shift_progression(traj: TrajectoryBuffer) -> Optional[Tuple[int, int]]:
    """(start, step) when the states are offsets start + step*i, else None."""
    if traj.space.kind != "shift":
        return None
    offsets = traj.values()
    if len(offsets) == 1:
        return int(offsets[0]), 1
    step = int(offsets[1] - offsets[0])
    if step < 1 or np.any(np.diff(offsets) != step):
        return None
    return int(offsets[0]), step


def fast_path_kind(traj: TrajectoryBuffer) -> Optional[str]:
    if _shift_progression(traj) is not None:
        return "shift"
    if traj.space.kind == "real":
        return "real"
    return None


def shift_agreement_length(eps: Radius, horizon: int) -> int:
    """Symbols two points must share for the truncated shift metric to be <= eps.

    For eps in [2^-k, 2^-(k-1)) this is k, capped at the horizon; 0 for eps >= 1.
    """
    if eps >= 1:
        return 0
    if eps <= 0:
        return horizon
    target = Fraction(eps)
    k = 1
    while Fraction(1, 2 ** k) > target and k < horizon:
        k += 1
    return min(k, horizon)


class _ShiftRanker:
    """Caches block and window ranks of one shift-space trajectory."""

    def __init__(self, traj: TrajectoryBuffer):
        self.traj = traj
        self.start, self.step = _shift_progression(traj)
        self.symbols = traj.space.symbols
        self.horizon = traj.space.horizon
        self._blocks: Dict[int, np.ndarray] = {}
        self._windows: Dict[Tuple[int, int], np.ndarray] = {}

    def state_ranks(self, agree: int, m: int, n: int) -> np.ndarray:
        key = (agree, m)
        if key not in self._windows:
            if agree not in self._blocks:
                self._blocks[agree] = window_ranks(self.symbols, agree)
            ranks = window_ranks(self._blocks[agree], m, self.step)
            self._windows[key] = ranks[self.start::self.step]
        ranks = self._windows[key]
        if len(ranks) < n:
            raise WindowError(f"only {len(ranks)} Bowen windows of length {m} available, {n} requested")
        return ranks[:n]

    def count(self, eps: Radius, m: int, n: int) -> int:
        agree = shift_agreement_length(eps, self.horizon)
        if agree == 0:
            return n * n
        counts = np.bincount(self.state_ranks(agree, m, n))
        return int(np.dot(counts, counts))


class _MaxIndexHistogram:
    """Histogram of max(i, j) over accepted pairs, flushed in large batches."""

    def __init__(self, size: int):
        self.size = size
        self.total = np.zeros(size, dtype=np.int64)
        self._pending: List[np.ndarray] = []
        self._pending_len = 0

    def add(self, indices: np.ndarray) -> None:
        self._pending.append(indices)
        self._pending_len += len(indices)
        if self._pending_len >= _FLUSH_SIZE:
            self.flush()

    def flush(self) -> None:
        if self._pending:
            self.total += np.bincount(np.concatenate(self._pending), minlength=self.size)
            self._pending = []
            self._pending_len = 0


def _real_counts(values: np.ndarray, eps: Radius, m_list: Sequence[int], n_list: Sequence[int]) -> Dict[Tuple[int, int], int]:
    """Ordered-pair counts for every (m, n) at one radius.

    Candidate pairs come from the sorted first coordinate (sorted-rank distance d,
    widened by a tiny slack); every candidate is then checked with the same float
    expression as the naive path, |a - b| <= eps, so ties are decided identically.
    """
    n_max = max(n_list)
    m_max = max(m_list)
    radius = float_radius(eps)
    head = values[:n_max]
    order = np.argsort(head, kind="stable")
    ordered = head[order]
    slack = 1e-9 * (float(np.abs(ordered).max()) + abs(radius)) + 1e-300
    wanted = set(m_list)
    histograms = {m: _MaxIndexHistogram(n_max) for m in wanted}

    for d in range(1, n_max):
        close = np.flatnonzero(ordered[d:] - ordered[:-d] <= radius + slack)
        if close.size == 0:
            break
        a = order[close]
        b = order[close + d]
        for h in range(m_max):
            keep = np.abs(values[a + h] - values[b + h]) <= radius
            a = a[keep]
            b = b[keep]
            if a.size == 0:
                break
            if h + 1 in wanted:
                histograms[h + 1].add(np.maximum(a, b))

    counts = {}
    for m, histogram in histograms.items():
        histogram.flush()
        running = np.cumsum(histogram.total)
        for n in n_list:
            counts[(m, n)] = n + 2 * int(running[n - 1])
    return counts


def _eps_cells(
    traj: TrajectoryBuffer,
    eps: Radius,
    m_list: Sequence[int],
    n_list: Sequence[int],
    method: str,
    ranker: Optional[_ShiftRanker],
) -> List[CorrelationEntry]:
    entries = []
    if method == "shift":
        for m in m_list:
            for n in n_list:
                count = ranker.count(eps, m, n)
                entries.append(CorrelationEntry(eps=eps, m=m, n=n, count=count, value=Fraction(count, n * n), method=method))
    elif method == "real":
        counts = _real_counts(traj.values(), eps, m_list, n_list)
        for m in m_list:
            for n in n_list:
                count = counts[(m, n)]
                entries.append(CorrelationEntry(eps=eps, m=m, n=n, count=count, value=Fraction(count, n * n), method=method))
    else:
        for m in m_list:
            for n in n_list:
                count = _naive_count(traj, m, n, eps)
                entries.append(CorrelationEntry(eps=eps, m=m, n=n, count=count, value=Fraction(count, n * n), method=method))
    return entries


def correlation_table(
    traj: TrajectoryBuffer,
    eps_list: Sequence[Radius],
    m_list: Sequence[int],
    n_list: Sequence[int],
    method: str = "auto",
    workers: int = 1,
) -> CorrelationTable:
    """Correlation sums on the full (eps, m, n) grid.

    method is "auto" (fast path when supported), "fast" (same, but the naive
    fallback is logged as a warning) or "naive". Epsilon levels are independent and
    may run on a thread pool; results are merged by key.
    """
    if not eps_list or not m_list or not n_list:
        raise InfeasibleParameterError("eps, m and n lists must be nonempty")
    if any(not eps > 0 for eps in eps_list):
        raise InfeasibleParameterError("correlation radii must be positive")
    m_list = sorted(set(int(m) for m in m_list))
    n_list = sorted(set(int(n) for n in n_list))
    traj.require(n_list[-1], m_list[-1])

    kind = fast_path_kind(traj) if method != "naive" else None
    if kind is None:
        if method == "fast":
            logger.warning("Fast path unsupported, counting naively", space=traj.space.kind, label=traj.origin_label)
        used = "naive-fallback" if method == "fast" else "naive"
    else:
        used = kind
    ranker = _ShiftRanker(traj) if used == "shift" else None

    table = CorrelationTable(traj.origin_label)
    if workers > 1 and len(eps_list) > 1 and used != "shift":
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_eps_cells, traj, eps, m_list, n_list, used, ranker) for eps in eps_list]
            for future in futures:
                for entry in future.result():
                    table.add(entry)
    else:
        for eps in eps_list:
            for entry in _eps_cells(traj, eps, m_list, n_list, used, ranker):
                table.add(entry)
    logger.debug("Correlation table ready", cells=len(table), method=used, label=traj.origin_label)
    return table


def correlation_sum_fast(traj: TrajectoryBuffer, m: int, n: int, eps: Radius) -> Fraction:
    """Same rational as correlation_sum, via the accelerated path when the metric allows."""
    return correlation_table(traj, [eps], [m], [n], method="fast").value(eps, m, n)


def default_schedule(n: int, points: int = 4, ratio: float = 1.25) -> Tuple[int, ...]:
    """Increasing n-values ending at n with consecutive ratio ``ratio``."""
    return tuple(sorted({max(1, int(round(n / ratio ** t))) for t in range(points)}))


def _check_schedule(traj: TrajectoryBuffer, schedule: Sequence[int], m: int) -> Tuple[int, ...]:
    schedule = tuple(int(n) for n in schedule)
    if not schedule:
        raise InfeasibleParameterError("schedule is empty")
    ensure_increasing(schedule, "schedule")
    if any(b > 2 * a for a, b in zip(schedule, schedule[1:])):
        raise InfeasibleParameterError("schedule ratio n_{j+1}/n_j must be <= 2")
    if schedule[-1] + m - 1 > len(traj):
        raise InfeasibleParameterError(
            f"schedule exceeds trajectory: n={schedule[-1]} with m={m} needs {schedule[-1] + m - 1} states, have {len(traj)}"
        )
    return schedule


def _tail(values: Sequence[Any], tail_fraction: float) -> Sequence[Any]:
    if not 0 < tail_fraction <= 1:
        raise ValueError("tail_fraction must lie in (0, 1]")
    count = max(1, math.ceil(len(values) * tail_fraction))
    return values[-count:]


def limit_estimate(
    traj: TrajectoryBuffer,
    m: int,
    eps: Radius,
    schedule: Sequence[int],
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    method: str = "auto",
) -> LimitEstimate:
    schedule = _check_schedule(traj, schedule, m)
    table = correlation_table(traj, [eps], [m], schedule, method=method)
    values = [table.value(eps, m, n) for n in schedule]
    tail = _tail(values, tail_fraction)
    return LimitEstimate(lower=min(tail), upper=max(tail), schedule=list(schedule), values=values)


def select_plateau(slopes: Sequence[float], tolerance: float = DEFAULT_TOLERANCE) -> Tuple[int, bool]:
    """Index of the smallest-radius slope agreeing with its predecessor.

    ``slopes`` are ordered from the largest radius to the smallest. Returns
    (index, True) for the last agreeing slope, else (last index, False).
    """
    if not slopes:
        raise ValueError("no slopes to select from")
    chosen = None
    for i in range(1, len(slopes)):
        if abs(slopes[i] - slopes[i - 1]) <= tolerance * max(abs(slopes[i - 1]), NOISE_FLOOR):
            chosen = i
    if chosen is None:
        return len(slopes) - 1, False
    return chosen, True


def _fit(xs: Sequence[float], ys: Sequence[float]) -> Tuple[float, float, List[float]]:
    with np.errstate(divide="ignore", invalid="ignore"):
        fit = linregress(xs, ys)
    residuals = [float(y - (fit.intercept + fit.slope * x)) for x, y in zip(xs, ys)]
    return float(fit.slope), float(fit.intercept), residuals


def _entropy_from_estimates(
    c_by_eps: Dict[Radius, Dict[int, Fraction]],
    eps_order: Sequence[Radius],
    floor: Fraction,
    tolerance: float,
    m_range: Tuple[int, int],
) -> EntropyEstimate:
    resolved = []
    levels = []
    for eps in eps_order:
        usable = [(m, c) for m, c in sorted(c_by_eps[eps].items()) if c >= floor]
        level = {"eps": str(eps), "m_used": [m for m, _ in usable], "resolved": len(usable) >= 3}
        if len(usable) >= 3:
            ms = [float(m) for m, _ in usable]
            ys = [-math.log(c) for _, c in usable]
            slope, intercept, residuals = _fit(ms, ys)
            level.update(slope=slope, intercept=intercept, residuals=residuals)
            resolved.append((eps, slope))
        levels.append(level)

    if not resolved:
        raise InfeasibleParameterError(
            "no epsilon level has three m values above the resolution floor; increase n or use smaller m"
        )
    index, plateau = select_plateau([slope for _, slope in resolved], tolerance)
    chosen_eps, chosen_slope = resolved[index]
    return EntropyEstimate(
        value=max(0.0, chosen_slope),
        per_eps_slopes=[(float(eps), slope) for eps, slope in resolved],
        m_range=m_range,
        plateau=plateau,
        flag=None if plateau else "no plateau",
        diagnostics={
            "chosen_eps": str(chosen_eps),
            "chosen_slope": chosen_slope,
            "resolution_floor": str(floor),
            "levels": levels,
        },
    )


def local_correlation_entropy(
    traj: TrajectoryBuffer,
    grid: EpsilonGrid,
    m_list: Sequence[int],
    n: int,
    schedule: Optional[Sequence[int]] = None,
    tolerance: float = DEFAULT_TOLERANCE,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    min_recurrences: int = DEFAULT_MIN_RECURRENCES,
    method: str = "auto",
    workers: int = 1,
) -> Tuple[EntropyEstimate, EntropyEstimate]:
    """(upper, lower) local correlation entropy estimates.

    Per radius, -log c is regressed on m. The upper entropy uses the tail minimum of
    c over the schedule and the lower entropy the tail maximum. Cells with fewer than
    ``min_recurrences`` off-diagonal recurrences per point on average are dropped.
    """
    m_list = sorted(set(int(m) for m in m_list))
    if len(m_list) < 3:
        raise InfeasibleParameterError("degenerate fit: m_list needs at least three distinct values")
    schedule = tuple(schedule) if schedule is not None else default_schedule(n)
    if schedule[-1] != n:
        raise InfeasibleParameterError(f"schedule must end at n={n}")
    schedule = _check_schedule(traj, schedule, m_list[-1])
    table = correlation_table(traj, grid.values, m_list, schedule, method=method, workers=workers)

    tail = _tail(schedule, tail_fraction)
    lower_c: Dict[Radius, Dict[int, Fraction]] = {}
    upper_c: Dict[Radius, Dict[int, Fraction]] = {}
    for eps in grid.values:
        lower_c[eps] = {m: min(table.value(eps, m, t) for t in tail) for m in m_list}
        upper_c[eps] = {m: max(table.value(eps, m, t) for t in tail) for m in m_list}

    floor = Fraction(1 + min_recurrences, n)
    m_range = (m_list[0], m_list[-1])
    upper = _entropy_from_estimates(lower_c, grid.values, floor, tolerance, m_range)
    lower = _entropy_from_estimates(upper_c, grid.values, floor, tolerance, m_range)
    logger.info(
        "Local correlation entropy",
        label=traj.origin_label,
        upper=upper.value,
        lower=lower.value,
        plateau=upper.plateau,
        methods=table.methods(),
    )
    return upper, lower


def local_correlation_dimension(
    traj: TrajectoryBuffer,
    grid: EpsilonGrid,
    n: int,
    schedule: Optional[Sequence[int]] = None,
    tail_fraction: float = DEFAULT_TAIL_FRACTION,
    method: str = "auto",
) -> Tuple[float, float]:
    """(upper, lower) slopes of log c_1 versus log eps."""
    values = grid.values
    if len(values) < 3 or values[0] / values[-1] < 4:
        raise InfeasibleParameterError("dimension grid needs >= 3 radii spanning >= 2 octaves")
    schedule = tuple(schedule) if schedule is not None else default_schedule(n)
    schedule = _check_schedule(traj, schedule, 1)
    table = correlation_table(traj, values, [1], schedule, method=method)
    tail = _tail(schedule, tail_fraction)
    log_eps = [math.log(eps) for eps in values]
    lower_c = [min(table.value(eps, 1, t) for t in tail) for eps in values]
    upper_c = [max(table.value(eps, 1, t) for t in tail) for eps in values]
    upper, _, _ = _fit(log_eps, [math.log(c) for c in lower_c])
    lower, _, _ = _fit(log_eps, [math.log(c) for c in upper_c])
    return upper, lower


def iterate_scaling_check(
    traj: TrajectoryBuffer,
    k: int,
    grid: EpsilonGrid,
    m_list: Sequence[int],
    n: int,
    noise_floor: float = NOISE_FLOOR,
    **estimator: Any,
) -> ScalingReport:
    """Entropy of f on traj and of f^k on the k-subsampled orbit of the same point."""
    if k < 1:
        raise ValueError("k must be >= 1")
    needed = k * (n + max(m_list))
    if len(traj) < needed:
        raise InfeasibleParameterError(f"k*(n + max m) = {needed} states needed, trajectory has {len(traj)}")
    h_f, h_f_lower = local_correlation_entropy(traj, grid, m_list, n, **estimator)
    h_fk, h_fk_lower = local_correlation_entropy(traj.subsample(k), grid, m_list, n, **estimator)
    reliable = h_f.value >= noise_floor
    ratio = h_fk.value / h_f.value if reliable else None
    report = ScalingReport(
        k=k,
        h_f=h_f.value,
        h_fk=h_fk.value,
        ratio=ratio,
        reliable=reliable,
        flag=None if reliable else "unreliable",
        h_f_lower=h_f_lower.value,
        h_fk_lower=h_fk_lower.value,
    )
    logger.info("Iterate scaling", k=k, h_f=report.h_f, h_fk=report.h_fk, ratio=ratio)
    return report


def shift_invariance_bounds(traj: TrajectoryBuffer, m: int, n: int, h: int, eps: Radius) -> Tuple[Fraction, Fraction]:
    """Bounds on C(f^h x, n) derived from C(x, n+h)."""
    base = correlation_table(traj, [eps], [m], [n + h]).value(eps, m, n + h)
    scale = Fraction(n + h, n) ** 2
    upper = scale * base
    lower = upper - Fraction(2 * h * n + h * h, n * n)
    return lower, upper


def fk_decomposition_bound(traj: TrajectoryBuffer, k: int, m: int, n: int, eps: Radius) -> Tuple[Fraction, Fraction]:
    """(C^f_{km}(x, kn, eps), (k-2)/(kn) + (2/k^2) sum_h C^{f^k}_m(f^h x, n, 2 eps))."""
    if k < 2:
        raise ValueError("k must be >= 2")
    lhs = correlation_table(traj, [eps], [k * m], [k * n]).value(eps, k * m, k * n)
    total = Fraction(0)
    for h in range(k):
        orbit = traj.subsample(k, h)
        total += correlation_table(orbit, [2 * eps], [m], [n]).value(2 * eps, m, n)
    rhs = Fraction(k - 2, k * n) + Fraction(2, k * k) * total
    return lhs, rhs
