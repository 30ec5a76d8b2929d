"""
Randomized invariant suite for correlation sums and the f^k decomposition inequality.
"""

from fractions import Fraction
from typing import Any, Callable, Dict, List, Optional

import numpy as np
import structlog

from lcentropy.core import CheckResult, Radius, TrajectoryBuffer, diameter_estimate
from lcentropy.correlation import (
    bowen_distance,
    correlation_sum,
    correlation_table,
    fk_decomposition_bound,
    shift_agreement_length,
    shift_invariance_bounds,
)
from lcentropy.interval_maps import IntervalMapSpec, map_trajectory, random_rational_point, spanning_number
from lcentropy.symbolic import BernoulliSpec, bernoulli_sample, symbolic_trajectory

logger = structlog.get_logger(__name__)

SUITE_HORIZON = 16


def _state_metric(traj: TrajectoryBuffer) -> Optional[Callable[[Any, Any], Radius]]:
    return None if traj.space.kind == "real" else traj.space.distance


def eta_lower_bound(traj: TrajectoryBuffer, eps: Radius, m: int, n: int) -> Fraction:
    """eta^m with eta = 1 / r(eps/2) over the states a correlation sum at (m, n) visits."""
    traj.require(n, m)
    states = traj.states[:n + m - 1]
    r = spanning_number(states, Fraction(eps) / 2, metric=_state_metric(traj))
    return Fraction(1, r) ** m


def bowen_spanning_lower_bound(traj: TrajectoryBuffer, m: int, n: int, eps: Radius) -> Fraction:
    """1 / r_m(eps/2), r_m spanning the n Bowen windows of length m."""
    traj.require(n, m)
    half = Fraction(eps) / 2
    if traj.space.kind == "real":
        values = traj.values()
        windows = np.lib.stride_tricks.sliding_window_view(values[:n + m - 1], m)
        return Fraction(1, spanning_number(windows, half))
    r = spanning_number(list(range(n)), half, metric=lambda i, j: bowen_distance(traj, i, j, m))
    return Fraction(1, r)


def _random_symbolic(rng: np.random.Generator, length: int, p: Optional[int] = None) -> TrajectoryBuffer:
    p = p or int(rng.integers(2, 4))
    spec = BernoulliSpec(pi=[1.0 / p] * p)
    sample = bernoulli_sample(spec, length + SUITE_HORIZON, rng=rng)
    return symbolic_trajectory(sample, length, horizon=SUITE_HORIZON, label=f"bernoulli-{p}")


def _random_real(rng: np.random.Generator, length: int) -> TrajectoryBuffer:
    if rng.random() < 0.5:
        return map_trajectory(IntervalMapSpec(kind="tent"), random_rational_point(rng), length, label="tent")
    return map_trajectory(IntervalMapSpec(kind="logistic", alpha=float(rng.uniform(1.5, 2.0))), float(rng.uniform(-1, 1)), length)


def _random_radius(rng: np.random.Generator, symbolic: bool) -> Fraction:
    if symbolic:
        return Fraction(1, 2 ** int(rng.integers(0, 6)))
    return Fraction(int(rng.integers(1, 65)), 128)


class _Tally:
    def __init__(self):
        self.cases: Dict[str, int] = {}
        self.failures: Dict[str, List[str]] = {}

    def record(self, name: str, passed: bool, context: str) -> None:
        self.cases[name] = self.cases.get(name, 0) + 1
        if not passed:
            self.failures.setdefault(name, []).append(context)
            logger.error("Invariant violated", invariant=name, case=context)

    def results(self) -> List[CheckResult]:
        out = []
        for name in sorted(self.cases):
            failures = self.failures.get(name, [])
            out.append(
                CheckResult(
                    name=name,
                    passed=not failures,
                    detail=f"{self.cases[name] - len(failures)}/{self.cases[name]} cases",
                    values={"cases": self.cases[name], "failures": len(failures), "first_failure": failures[0] if failures else None},
                )
            )
        return out


def _correlation_case(tally: _Tally, traj: TrajectoryBuffer, rng: np.random.Generator, symbolic: bool, label: str) -> None:
    n = int(rng.integers(4, 25))
    m = int(rng.integers(1, 5))
    h = int(rng.integers(1, 5))
    eps = _random_radius(rng, symbolic)
    wider = eps * 2
    context = f"{label} n={n} m={m} eps={eps}"

    c = correlation_sum(traj, m, n, eps)
    tally.record("bounds 1/n <= C <= 1", Fraction(1, n) <= c <= 1, context)
    tally.record("monotone in eps", c <= correlation_sum(traj, m, n, wider), context)
    tally.record("monotone in m", correlation_sum(traj, m + 1, n, eps) <= c, context)
    diameter = diameter_estimate(traj)
    if diameter > 0:
        tally.record("C = 1 at diameter", correlation_sum(traj, m, n, diameter) == 1, context)
    tally.record("eta^m lower bound", c >= eta_lower_bound(traj, eps, m, n), context)
    tally.record("Bowen spanning lower bound", c >= bowen_spanning_lower_bound(traj, m, n, eps), context)
    lower, upper = shift_invariance_bounds(traj, m, n, h, eps)
    shifted = correlation_sum(traj.shifted(h), m, n, eps)
    tally.record("shift invariance", lower <= shifted <= upper, f"{context} h={h}")
    fast = correlation_table(traj, [eps, wider], [m, m + 1], [n])
    same = all(fast.value(e, mm, n) == correlation_sum(traj, mm, n, e) for e in (eps, wider) for mm in (m, m + 1))
    tally.record("fast path equals naive", same, context)

    if symbolic:
        k = shift_agreement_length(eps, SUITE_HORIZON)
        if 0 < k and k + m - 1 <= SUITE_HORIZON:
            reduced = correlation_sum(traj, 1, n, Fraction(1, 2 ** (k + m - 1)))
            tally.record("subshift reduction", c == reduced, context)


def _fk_case(tally: _Tally, rng: np.random.Generator, index: int) -> None:
    k = int(rng.integers(2, 5))
    m = int(rng.integers(1, 3))
    n = int(rng.integers(3, 9))
    traj = _random_symbolic(rng, k * (n + m) + k)
    eps = _random_radius(rng, True)
    lhs, rhs = fk_decomposition_bound(traj, k, m, n, eps)
    name = "f^k decomposition k=2" if k == 2 else "f^k decomposition k>=3"
    tally.record(name, lhs <= rhs, f"case {index} k={k} m={m} n={n} eps={eps}")


def run_invariant_suite(cases: int = 1000, seed: int = 0) -> List[CheckResult]:
    """Randomized property checks; half symbolic, half interval-map trajectories."""
    rng = np.random.default_rng(seed)
    tally = _Tally()
    for index in range(cases):
        symbolic = index % 2 == 0
        traj = _random_symbolic(rng, 40) if symbolic else _random_real(rng, 40)
        _correlation_case(tally, traj, rng, symbolic, f"case {index} {traj.origin_label}")
        if symbolic:
            _fk_case(tally, rng, index)
    results = tally.results()
    logger.info("Invariant suite finished", cases=cases, failed=sum(1 for r in results if not r.passed))
    return results
