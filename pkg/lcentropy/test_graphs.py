"""
Tests for partitioned graphs, V-admissibility and kappa.
"""

from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcentropy.core import InfeasibleParameterError, TrajectoryBuffer, real_line
from lcentropy.graphs import (
    PartitionedGraph,
    edge_count_bounds,
    is_v_admissible,
    kappa,
    max_kappa_bruteforce,
    max_kappa_formula,
    optimal_witness,
    recurrence_graph,
    verify_graphs,
)
from lcentropy.symbolic import BernoulliSpec, bernoulli_sample, symbolic_trajectory


def test_partition_validation():
    with pytest.raises(ValueError):
        PartitionedGraph(3, (frozenset({0, 1, 2}),))
    with pytest.raises(ValueError):
        PartitionedGraph(3, (frozenset({0, 1}), frozenset({1, 2})))
    with pytest.raises(ValueError):
        PartitionedGraph.from_sizes((1, 1), [(0, 0)])
    with pytest.raises(ValueError):
        PartitionedGraph.from_sizes((1, 1), [(0, 2)])


def test_edges_are_normalised():
    g = PartitionedGraph.from_sizes((2, 1), [(2, 0), (0, 2)])
    assert g.edges == frozenset({(0, 2)})
    assert g.k == 2
    assert g.part_of(2) == 1


def test_admissibility_examples():
    assert is_v_admissible(PartitionedGraph.from_sizes((2, 1)))
    assert not is_v_admissible(PartitionedGraph.from_sizes((2, 1), [(0, 2), (1, 2)]))
    assert is_v_admissible(PartitionedGraph.from_sizes((2, 1), [(0, 2), (1, 2), (0, 1)]))


def test_kappa_examples():
    assert kappa(PartitionedGraph.from_sizes((2, 1))) == 0
    assert kappa(PartitionedGraph.from_sizes((2, 1), [(0, 2)])) == 1
    assert kappa(PartitionedGraph.from_sizes((2, 1), [(0, 1), (0, 2), (1, 2)])) == 1
    assert kappa(PartitionedGraph.from_sizes((3, 1), [(0, 1), (0, 2), (1, 2)])) == -3


def test_max_kappa_formula():
    assert max_kappa_formula((2, 2)) == 2
    assert max_kappa_formula((1, 2, 3)) == 4
    assert max_kappa_formula((1, 1)) == 1
    with pytest.raises(ValueError):
        max_kappa_formula((3,))


@pytest.mark.parametrize("sizes, expected", [((1, 1), 1), ((1, 2), 1), ((2, 2), 2), ((2, 3), 2), ((3, 3), 3)])
def test_bruteforce_matches_formula_for_two_parts(sizes, expected):
    assert max_kappa_bruteforce(sizes) == expected == max_kappa_formula(sizes)


def test_complete_graph_beats_formula_with_three_parts():
    """K4 on parts {0}, {1}, {2, 3} is admissible with kappa 4, one more than the closed form."""
    sizes = (1, 1, 2)
    complete = PartitionedGraph.from_sizes(sizes, [(i, j) for i in range(4) for j in range(i + 1, 4)])
    assert is_v_admissible(complete)
    assert kappa(complete) == 4
    assert max_kappa_formula(sizes) == 3
    assert max_kappa_bruteforce(sizes) == 4


@pytest.mark.parametrize("sizes", [(1, 1, 1), (1, 2, 2), (2, 2, 1, 1)])
def test_bruteforce_never_below_witness(sizes):
    assert max_kappa_bruteforce(sizes) >= kappa(optimal_witness(sizes)) == max_kappa_formula(sizes)


def test_bruteforce_parallel_agrees():
    assert max_kappa_bruteforce((3, 3), workers=2) == max_kappa_bruteforce((3, 3))


def test_bruteforce_size_limit():
    with pytest.raises(InfeasibleParameterError):
        max_kappa_bruteforce((5, 4))


@pytest.mark.parametrize("sizes", [(2, 2), (1, 2, 3), (3, 1, 2, 2)])
def test_optimal_witness(sizes):
    witness = optimal_witness(sizes)
    assert is_v_admissible(witness)
    assert kappa(witness) == max_kappa_formula(sizes)
    assert witness.edge_counts()[1] == 0


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10 ** 6), st.integers(2, 4), st.integers(1, 3), st.integers(2, 6), st.integers(0, 4))
def test_recurrence_graph_is_admissible(seed, k, m, n, j):
    states = k * n + k * m - 1
    sample = bernoulli_sample(BernoulliSpec(pi=[0.5, 0.5], seed=seed), states + 16)
    traj = symbolic_trajectory(sample, states, horizon=16)
    g = recurrence_graph(traj, k, m, n, Fraction(1, 2 ** j))
    assert g.n == k * n
    assert is_v_admissible(g)


def test_recurrence_graph_of_constant_orbit_is_complete():
    traj = TrajectoryBuffer((0.5,) * 13, real_line())
    g = recurrence_graph(traj, 2, 2, 5, Fraction(1, 10))
    assert len(g.edges) == 10 * 9 // 2


def test_recurrence_graph_length_check():
    traj = TrajectoryBuffer((0.5,) * 10, real_line())
    with pytest.raises(InfeasibleParameterError, match="kn \\+ km - 1"):
        recurrence_graph(traj, 2, 2, 5, Fraction(1, 10))


def test_edge_count_bounds_for_two_parts():
    sample = bernoulli_sample(BernoulliSpec(pi=[0.5, 0.5], seed=5), 200)
    traj = symbolic_trajectory(sample, 150, horizon=16)
    result = edge_count_bounds(traj, 2, 2, 20, Fraction(1, 2))
    assert result.passed
    assert result.values["kappa"] <= 20


def test_verify_graphs_reports_each_profile():
    results = verify_graphs(max_n=4, max_k=3)
    by_name = {r.name: r for r in results}
    assert by_name["sizes=2-2"].passed
    assert by_name["sizes=1-3"].passed
    assert not by_name["sizes=1-1-2"].passed
    assert by_name["sizes=1-1-2"].values["bruteforce"] == 4
    assert all(r.passed for r in results if r.values["k"] == 2)
