"""
Tests for words, symbol sequences, Bernoulli measures and word statistics.
"""

import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lcentropy.core import InfeasibleParameterError
from lcentropy.symbolic import (
    BernoulliSpec,
    SymbolSequence,
    Word,
    bernoulli_correlation_entropy,
    bernoulli_sample,
    cesaro_density_check,
    measure_entropy_from_tilde,
    shift_metric,
    symbolic_trajectory,
    tilde_mu_bernoulli,
    tilde_mu_empirical,
    tilde_mu_enumerated,
    window_ranks,
    word_count_entropy,
    word_frequency,
)


def test_word_operations():
    w = Word.parse("012", 3)
    assert str(w + w) == "012012"
    assert str(w * 2) == "012012"
    assert len(w * 3) == 9
    with pytest.raises(ValueError):
        Word((0, 3), 3)


def test_periodic_sequence_prefix_and_shift():
    x = SymbolSequence.periodic(Word.parse("01", 2))
    assert x.prefix(5).tolist() == [0, 1, 0, 1, 0]
    assert x.shifted(1).prefix(4).tolist() == [1, 0, 1, 0]
    assert x.shifted(5000).prefix(3).tolist() == [0, 1, 0]


def test_finite_sequence_overrun():
    x = SymbolSequence.from_array([0, 1, 1], 2, "short")
    assert x.available(10) == 3
    with pytest.raises(InfeasibleParameterError, match="only 3"):
        x.prefix(4)


def test_prefix_is_read_only_and_stable():
    x = SymbolSequence.periodic([0, 1, 2], 3)
    head = x.prefix(6).copy()
    x.prefix(100_000)
    assert x.prefix(6).tolist() == head.tolist()
    with pytest.raises(ValueError):
        x.prefix(6)[0] = 1


def test_shift_metric():
    x = SymbolSequence.periodic([0, 1], 2)
    y = SymbolSequence.periodic([0, 0], 2)
    assert shift_metric(x, y, 8) == Fraction(1, 2)
    assert shift_metric(x, x.shifted(2), 8) == 0
    assert shift_metric(x, x.shifted(1), 8) == 1


@settings(max_examples=50)
@given(st.lists(st.integers(0, 2), min_size=1, max_size=60), st.integers(1, 6), st.integers(1, 3))
def test_window_ranks_match_tuples(codes, length, stride):
    ranks = window_ranks(codes, length, stride)
    windows = [tuple(codes[i + t * stride] for t in range(length)) for i in range(len(codes) - (length - 1) * stride)]
    assert len(ranks) == max(0, len(windows))
    for i in range(len(windows)):
        for j in range(len(windows)):
            assert (ranks[i] == ranks[j]) == (windows[i] == windows[j])


def test_bernoulli_spec_validation():
    spec = BernoulliSpec(pi="1/2,1/4,1/4")
    assert spec.p == 3
    with pytest.raises(ValueError):
        BernoulliSpec(pi=[0.5, 0.4])
    with pytest.raises(ValueError):
        BernoulliSpec(pi=[1.0])


def test_bernoulli_closed_form():
    assert bernoulli_correlation_entropy(BernoulliSpec(pi="1/2,1/4,1/4")) == pytest.approx(-math.log(3 / 8), abs=1e-12)
    assert bernoulli_correlation_entropy(BernoulliSpec(pi=[1 / 3] * 3)) == pytest.approx(math.log(3), abs=1e-12)
    assert bernoulli_correlation_entropy(BernoulliSpec(pi=[1.0, 0.0])) == 0.0


@pytest.mark.parametrize("k", [1, 2, 4])
def test_tilde_mu_enumeration_agrees(k):
    spec = BernoulliSpec(pi=[0.2, 0.3, 0.5])
    assert tilde_mu_enumerated(spec, k) == pytest.approx(tilde_mu_bernoulli(spec, k), rel=1e-12)


def test_measure_entropy_from_tilde():
    spec = BernoulliSpec(pi=[0.5, 0.5])
    upper, lower = measure_entropy_from_tilde([(m, tilde_mu_bernoulli(spec, m)) for m in range(1, 9)])
    assert upper == pytest.approx(math.log(2))
    assert lower == pytest.approx(math.log(2))
    with pytest.raises(ValueError):
        measure_entropy_from_tilde([(1, 0.0)])


def test_bernoulli_sample_is_deterministic():
    spec = BernoulliSpec(pi=[0.5, 0.5], seed=7)
    a = bernoulli_sample(spec, 500).prefix(500)
    b = bernoulli_sample(spec, 500).prefix(500)
    assert a.tolist() == b.tolist()
    assert set(a.tolist()) <= {0, 1}


def test_bernoulli_sample_follows_pinned_generator():
    spec = BernoulliSpec(pi="1/2,1/2", seed=2026)
    first = bernoulli_sample(spec, 16).prefix(16)
    expected = np.random.Generator(np.random.PCG64(2026)).choice(2, size=16, p=[0.5, 0.5])
    assert first.tolist() == expected.tolist()
    assert bernoulli_sample(spec, 64).prefix(16).tolist() == first.tolist()


def test_bernoulli_sample_frequency():
    sample = bernoulli_sample(BernoulliSpec(pi="1/2,1/2", seed=5), 100_000).prefix(100_000)
    assert 0.49 <= float(np.mean(sample == 0)) <= 0.51


def test_tilde_mu_empirical_constant_sequence():
    assert tilde_mu_empirical([0] * 20, 3) == 1
    assert tilde_mu_empirical([0, 1] * 10, 1) == Fraction(1, 2)


def test_word_frequency():
    v = Word.parse("0101", 2)
    u = Word.parse("01", 2)
    assert word_frequency(v, u, 1) == Fraction(1, 2)
    assert word_frequency(v, u, 2) == 1
    with pytest.raises(ValueError):
        word_frequency(u, v + v, 1)


def test_cesaro_density_of_periodic_sequence():
    x = SymbolSequence.periodic([0, 0, 1], 2)
    report = cesaro_density_check(x, Word.parse("1", 2), 1, window=30, offsets=10)
    assert report.density == Fraction(1, 3)
    assert report.max_window_deviation == 0
    strided = cesaro_density_check(x, Word.parse("001", 2), 3, window=5, offsets=4)
    assert strided.frequency == 1
    assert strided.density == Fraction(1, 3)


def test_word_count_entropy_of_periodic_sequence():
    rows = word_count_entropy(SymbolSequence.periodic([0, 1, 2], 3), [1, 4, 8], scan=1000)
    assert [theta for _, theta, _ in rows] == [3, 3, 3]
    assert word_count_entropy(SymbolSequence.periodic([0, 1], 2), [3], scan=100)[0][:2] == (3, 2)
    assert word_count_entropy(SymbolSequence.periodic([1], 2), [5], scan=100)[0] == (5, 1, 0.0)


def test_word_count_entropy_of_full_shift_sample():
    sample = bernoulli_sample(BernoulliSpec(pi="1/2,1/2", seed=9), 10 ** 6 + 9)
    ((n, theta, rate),) = word_count_entropy(sample, [10], scan=10 ** 6)
    assert (n, theta) == (10, 1024)
    assert rate == pytest.approx(math.log(2))


def test_symbolic_trajectory_stride():
    x = SymbolSequence.periodic([0, 1], 2)
    traj = symbolic_trajectory(x, 5, horizon=4, step=2)
    assert traj.states == (0, 2, 4, 6, 8)
    assert traj.space.kind == "shift"
    with pytest.raises(InfeasibleParameterError):
        symbolic_trajectory(np.zeros(5, dtype=np.int64), 5, horizon=4)
