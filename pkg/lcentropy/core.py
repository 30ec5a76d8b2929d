"""
Trajectory and metric-space abstractions shared by the numeric modules.

States are opaque values compared only through a MetricSpaceHandle, so symbolic
systems (states are offsets into a symbol array) and interval maps (states are
floats) plug into the same correlation engine.
"""

import math
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Real
from typing import Any, Callable, Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np
import structlog
from pydantic import BaseModel, Field

logger = structlog.get_logger(__name__)

Radius = Union[Fraction, float, int]


class OrbitEscapedError(ValueError):
    """A map produced a non-finite state."""

    def __init__(self, index: int, value: Any):
        self.index = index
        self.value = value
        super().__init__(f"orbit escaped at index {index}: {value!r}")


class WindowError(ValueError):
    """A Bowen window reaches past the stored trajectory."""


class InfeasibleParameterError(ValueError):
    """A parameter combination cannot be served by the available data."""


@dataclass(frozen=True, eq=False)
class MetricSpaceHandle:
    """Distance evaluator plus the hints the fast paths need.

    kind is "real" for |x - y| on floats, "shift" for the truncated shift metric on
    offsets into ``symbols``, and "generic" for anything else.
    """

    distance: Callable[[Any, Any], Radius]
    diameter_hint: Optional[float] = None
    kind: str = "generic"
    symbols: Optional[np.ndarray] = None
    horizon: Optional[int] = None

    def __post_init__(self):
        if self.diameter_hint is not None and self.diameter_hint < 0:
            raise ValueError("diameter_hint must be nonnegative")
        if self.kind == "shift" and (self.symbols is None or not self.horizon):
            raise ValueError("shift spaces need symbols and a positive horizon")


def _absolute_difference(x: Any, y: Any) -> Radius:
    return abs(x - y)


def real_line(diameter_hint: Optional[float] = None) -> MetricSpaceHandle:
    """The real line with the usual metric."""
    return MetricSpaceHandle(distance=_absolute_difference, diameter_hint=diameter_hint, kind="real")


def first_disagreement(a: np.ndarray, b: np.ndarray) -> Optional[int]:
    """Index of the first differing symbol of two equal-length arrays, None if equal."""
    mismatch = np.flatnonzero(a != b)
    if mismatch.size == 0:
        return None
    return int(mismatch[0])


def shift_space(symbols: Sequence[int], horizon: int) -> MetricSpaceHandle:
    """One-sided shift space over a materialised symbol array.

    A state is an offset o and stands for the point symbols[o], symbols[o+1], ...
    The metric is 2^-k for the first disagreement index k < horizon and 0 when the
    two points agree on the whole horizon.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    codes = np.ascontiguousarray(symbols, dtype=np.int64)
    codes.setflags(write=False)

    def distance(i: int, j: int) -> Fraction:
        if i == j:
            return Fraction(0)
        if max(i, j) + horizon > len(codes):
            raise WindowError(
                f"shift metric needs {horizon} symbols after offset {max(i, j)}, "
                f"only {len(codes)} materialised"
            )
        k = first_disagreement(codes[i:i + horizon], codes[j:j + horizon])
        if k is None:
            return Fraction(0)
        return Fraction(1, 2 ** k)

    return MetricSpaceHandle(distance=distance, diameter_hint=1.0, kind="shift", symbols=codes, horizon=horizon)


@dataclass(frozen=True, eq=False)
class TrajectoryBuffer:
    """A finite, immutable orbit segment (x, f(x), ..., f^{N-1}(x))."""

    states: Tuple[Any, ...]
    space: MetricSpaceHandle
    origin_label: str = ""
    _values: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))

    def __len__(self) -> int:
        return len(self.states)

    def __getitem__(self, index: int) -> Any:
        if not isinstance(index, (int, np.integer)):
            raise TypeError("trajectory indices must be integers")
        if index < 0 or index >= len(self.states):
            raise IndexError(f"index {index} outside trajectory of length {len(self.states)}")
        return self.states[index]

    def values(self) -> np.ndarray:
        """States as a read-only float array (real spaces) or offset array (shift spaces)."""
        if self._values is None:
            dtype = np.int64 if self.space.kind == "shift" else np.float64
            array = np.asarray(self.states, dtype=dtype)
            array.setflags(write=False)
            object.__setattr__(self, "_values", array)
        return self._values

    def subsample(self, k: int, offset: int = 0) -> "TrajectoryBuffer":
        """Orbit of f^k through f^offset(x)."""
        if k < 1 or offset < 0:
            raise ValueError("subsample needs k >= 1 and offset >= 0")
        label = f"{self.origin_label}|f^{k}@{offset}" if k > 1 else f"{self.origin_label}@{offset}"
        return TrajectoryBuffer(self.states[offset::k], self.space, label)

    def shifted(self, h: int) -> "TrajectoryBuffer":
        """Orbit of f^h(x)."""
        return self.subsample(1, h)

    def require(self, n: int, m: int) -> None:
        """Raise unless a correlation sum at (m, n) fits into the buffer."""
        if n < 1 or m < 1:
            raise InfeasibleParameterError("n and m must be >= 1")
        if n + m - 1 > len(self.states):
            raise InfeasibleParameterError(
                f"n + m - 1 <= trajectory length violated: n={n}, m={m}, length={len(self.states)}"
            )


@dataclass(frozen=True)
class EpsilonGrid:
    """Strictly decreasing positive radii."""

    values: Tuple[Radius, ...]

    def __post_init__(self):
        values = tuple(self.values)
        if not values:
            raise ValueError("epsilon grid is empty")
        if any(not v > 0 for v in values):
            raise ValueError("epsilon grid values must be positive")
        if any(b >= a for a, b in zip(values, values[1:])):
            raise ValueError("epsilon grid must be strictly decreasing")
        object.__setattr__(self, "values", values)

    @classmethod
    def dyadic(cls, k_min: int, k_max: int, scale: Radius = 1) -> "EpsilonGrid":
        """scale * 2^-k for k = k_min..k_max, as exact rationals when scale is rational."""
        if k_max < k_min:
            raise ValueError("k_max must be >= k_min")
        if isinstance(scale, float):
            return cls(tuple(scale * 2.0 ** -k for k in range(k_min, k_max + 1)))
        return cls(tuple(Fraction(scale) / 2 ** k for k in range(k_min, k_max + 1)))

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)


def _is_finite(value: Any) -> bool:
    if isinstance(value, (Fraction, int, np.integer)):
        return True
    if isinstance(value, Real):
        return math.isfinite(value)
    try:
        return bool(np.all(np.isfinite(np.asarray(value, dtype=float))))
    except (TypeError, ValueError):
        return True


def orbit_segment(
    f: Callable[[Any], Any],
    x0: Any,
    n: int,
    space: Optional[MetricSpaceHandle] = None,
    origin_label: str = "",
    project: Optional[Callable[[Any], Any]] = None,
) -> TrajectoryBuffer:
    """Return (x0, f(x0), ..., f^{n-1}(x0)).

    ``project`` maps the iterated representation to the stored state, so a map can run
    in exact arithmetic and still produce float states.
    """
    if n < 1:
        raise ValueError("orbit_segment needs n >= 1")
    space = space or real_line()
    states = []
    state = x0
    for index in range(n):
        stored = project(state) if project is not None else state
        if not _is_finite(stored):
            logger.error("Orbit escaped", index=index, label=origin_label)
            raise OrbitEscapedError(index, stored)
        states.append(stored)
        if index + 1 < n:
            state = f(state)
    return TrajectoryBuffer(tuple(states), space, origin_label)


def diameter_estimate(traj: TrajectoryBuffer) -> Radius:
    """Largest pairwise distance among the stored states."""
    if len(traj) == 0:
        raise ValueError("diameter of an empty trajectory")
    if len(traj) == 1:
        return 0
    if traj.space.kind == "real":
        values = traj.values()
        return float(values.max() - values.min())
    if traj.space.kind == "shift":
        return _shift_diameter(traj)
    best: Radius = 0
    states = traj.states
    for i in range(len(states)):
        for j in range(i + 1, len(states)):
            d = traj.space.distance(states[i], states[j])
            if d > best:
                best = d
    return best


def _shift_diameter(traj: TrajectoryBuffer) -> Fraction:
    """2^-L for the shortest prefix length L+1 on which the states stop agreeing."""
    codes = traj.space.symbols
    offsets = traj.values()
    for length in range(traj.space.horizon):
        column = codes[offsets + length]
        if np.any(column != column[0]):
            return Fraction(1, 2 ** length)
    return Fraction(0)


def float_radius(eps: Radius) -> float:
    """Largest float r with r <= eps, so d <= eps iff d <= r for every float d."""
    if isinstance(eps, float):
        return eps
    radius = float(eps)
    if Fraction(radius) > Fraction(eps):
        radius = math.nextafter(radius, -math.inf)
    return radius


def as_fraction(value: Union[str, Radius]) -> Fraction:
    """Parse "1/4", "0.25" or a number into an exact Fraction."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, str):
        return Fraction(value.strip())
    return Fraction(value)


def ensure_increasing(values: Iterable[int], name: str) -> Tuple[int, ...]:
    values = tuple(int(v) for v in values)
    if any(b <= a for a, b in zip(values, values[1:])):
        raise InfeasibleParameterError(f"{name} must be strictly increasing")
    return values


class CheckResult(BaseModel):
    """Outcome of one verified property; failures are data, not exceptions."""

    name: str
    passed: bool
    detail: str = ""
    values: Dict[str, Any] = Field(default_factory=dict)
