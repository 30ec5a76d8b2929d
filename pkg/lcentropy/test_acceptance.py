"""
Desk-scale experiments at their default sizes. Run with ``pytest -m slow``.
"""

import csv
import math
from fractions import Fraction

import numpy as np
import pytest

from lcentropy.core import EpsilonGrid
from lcentropy.correlation import correlation_sum, local_correlation_entropy
from lcentropy.graphs import verify_graphs
from lcentropy.grillenberger import entropy_lower_bound, theorem_c_report
from lcentropy.interval_maps import theorem_b_report
from lcentropy.main import main
from lcentropy.symbolic import BernoulliSpec, bernoulli_sample, symbolic_trajectory
from lcentropy.verification import run_invariant_suite

pytestmark = pytest.mark.slow


def test_uniform_bernoulli_entropy():
    spec = BernoulliSpec(pi=[1 / 3] * 3, seed=11)
    states = 100_000 + 11
    traj = symbolic_trajectory(bernoulli_sample(spec, states + 64), states, horizon=64)
    upper, _ = local_correlation_entropy(traj, EpsilonGrid.dyadic(1, 6), range(1, 13), 100_000)
    assert upper.value == pytest.approx(math.log(3), rel=0.1)


def test_iterate_scaling(tmp_path):
    assert main(["theorem-a", "--seed", "3", "--output", str(tmp_path)]) == 0
    with (tmp_path / "theorem-a.csv").open(newline="") as handle:
        rows = list(csv.DictReader(handle))
    assert [row["k"] for row in rows] == ["2", "3"]
    assert all(row["passed"] == "true" for row in rows)


def test_subshift_reduction_on_random_inputs():
    rng = np.random.default_rng(0)
    for _ in range(200):
        p = int(rng.integers(2, 5))
        n = int(rng.integers(2, 60))
        m = int(rng.integers(1, 6))
        k = int(rng.integers(1, 8))
        sample = bernoulli_sample(BernoulliSpec(pi=[1 / p] * p), n + m + 16, rng=rng)
        traj = symbolic_trajectory(sample, n + m - 1, horizon=16)
        assert correlation_sum(traj, m, n, Fraction(1, 2 ** k)) == correlation_sum(traj, 1, n, Fraction(1, 2 ** (k + m - 1)))


def test_grillenberger_report(tmp_path):
    assert main(["grillenberger", "report", "--output", str(tmp_path)]) == 0


@pytest.fixture(scope="module")
def constructed_report():
    return theorem_c_report()


def test_small_m_estimate_misses_zero_entropy_ceiling(constructed_report):
    report = constructed_report
    failed = {c.name for c in report.checks if not c.passed}
    # at m <= 12 the prefix still looks like a positive-entropy sequence
    assert failed == {"local entropy below ceiling"}
    assert report.entropy >= 0.05
    assert report.entropy_m_range[1] <= 12
    assert entropy_lower_bound(3) > 0.16
    assert {row["stride"] for row in report.cesaro} == {1, 3, 24}
    assert all(row["density"] == row["expected"] for row in report.cesaro)


def test_large_m_estimate_does_not_separate_from_periodic_control(constructed_report):
    assert constructed_report.large_m_entropy < 0.05
    assert constructed_report.large_m_control < 0.05


def test_graph_oracle():
    results = verify_graphs(7, 4)
    two_parts = [r for r in results if r.values["k"] == 2]
    assert two_parts and all(r.passed for r in two_parts)
    for r in results:
        assert r.values["bruteforce"] >= r.values["formula"]
    counterexamples = [r.name for r in results if not r.passed]
    assert "sizes=1-1-2" in counterexamples


def test_invariant_suite():
    results = run_invariant_suite(1000, seed=2026)
    failed = {r.name for r in results if not r.passed}
    assert failed <= {"f^k decomposition k>=3"}
    assert {r.name: r for r in results}["f^k decomposition k=2"].passed


def test_interval_maps():
    report = theorem_b_report(seed=2026)
    assert report.passed, [c.name for c in report.checks if not c.passed]
    assert 0.6 <= report.tent_topological <= 0.8
    assert report.logistic_local < 0.05
    assert all(value < bound for _, value, bound in report.countable_local)
