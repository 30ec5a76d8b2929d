"""
Tests for the Grillenberger-type construction and its rigorous bounds.
"""

import math
from fractions import Fraction

import pytest

from lcentropy.core import InfeasibleParameterError
from lcentropy.grillenberger import (
    GrillenbergerStream,
    build_levels,
    entropy_lower_bound,
    entropy_lower_bounds,
    lambda_sequence,
    level_table_rows,
    minimality_witness,
    mu_cylinder_lower_bound,
    theorem_c_report,
    tilde_rate_bound,
    verify_level_props,
    x_prefix,
)
from lcentropy.symbolic import cesaro_density_check


@pytest.fixture(scope="module")
def levels():
    return build_levels(3)


@pytest.fixture(scope="module")
def stream():
    return GrillenbergerStream.build(3)


def test_level_table_for_three_symbols(levels):
    exact = [(lv.j, lv.l, lv.m, lv.r) for lv in levels[:3]]
    assert exact == [(1, 1, 3, 0), (2, 3, 6, 2), (3, 24, 720, 30)]
    assert levels[3].l == 18000
    assert levels[3].m == math.factorial(720)
    assert levels[3].r == -(-math.factorial(720) // 18000)


def test_construction_stops_at_first_inexact_level(levels):
    assert len(levels) == 5
    assert levels[-1].m is None
    assert levels[-1].r is None
    assert levels[-1].log_r is not None


def test_lambda_values(levels):
    assert levels[0].lambda_value == pytest.approx(math.log(3))
    assert levels[1].lambda_value == pytest.approx(math.log(6) / 3)
    assert 0.25 < levels[2].lambda_value < 0.28
    lam = [lv.lambda_value for lv in levels]
    assert all(b < a for a, b in zip(lam, lam[1:]))


def test_level_properties_hold(levels):
    checks = verify_level_props(levels)
    failed = [c.name for c in checks if not c.passed]
    assert failed == []
    names = {c.name for c in checks}
    assert {"words distinct j=3", "m/l even j=4", "r > p j=5", "tail sum"} <= names


def test_entropy_lower_bound_is_positive(levels):
    rows = entropy_lower_bounds(levels)
    assert [j for j, _ in rows] == [3, 4, 5]
    assert entropy_lower_bound(levels=levels) > 0.16
    assert entropy_lower_bound(levels=levels, j=3) < levels[2].lambda_value
    with pytest.raises(InfeasibleParameterError):
        entropy_lower_bound(levels=levels, j=2)


def test_two_symbols_need_explicit_opt_in():
    with pytest.raises(ValueError, match="allow_p2"):
        build_levels(2)
    levels = build_levels(2, allow_p2=True)
    assert len(levels) == 10
    assert all(lv.m == 2 for lv in levels)
    with pytest.raises(ValueError):
        entropy_lower_bounds(levels)


def test_lambda_sequence_reports_truncation():
    short = lambda_sequence(3, 3)
    assert [j for j, _ in short.values] == [1, 2, 3]
    assert not short.truncated
    assert all(lo <= value <= hi for (_, value), (_, lo, hi) in zip(short.values, short.bounds))
    deep = lambda_sequence(3, 8)
    assert deep.truncated
    assert len(deep.values) == 5
    with pytest.raises(ValueError):
        lambda_sequence(3, 0)


def test_first_words_and_prefix():
    stream = GrillenbergerStream.build(3, j_max=3)
    assert str(stream.level(2).first_word) == "012"
    assert str(x_prefix(stream, 12)) == "012012012021"
    assert stream.symbols(744).size == 744
    with pytest.raises(InfeasibleParameterError, match="repetition bound"):
        stream.symbols(745)
    with pytest.raises(InfeasibleParameterError):
        stream.level(4)


def test_stream_options_are_checked():
    with pytest.raises(TypeError):
        GrillenbergerStream.build(3, depth=2)


def test_periodic_justification(stream):
    text = stream.periodic_justification()
    assert text.startswith("x is w_4-periodic")
    assert "l_4 = 18000" in text


def test_level_table_rows(levels):
    rows = level_table_rows(levels)
    assert rows[0][:4] == ("1", "1", "3", "0")
    assert rows[2][:4] == ("3", "24", "720", "30")
    assert rows[3][2].startswith("log=")
    assert rows[4][1].startswith("log=")


def test_mu_cylinder_lower_bound(levels):
    assert mu_cylinder_lower_bound(levels, 3, 1) == Fraction(30, 2 * 720 * 24)
    with pytest.raises(ValueError):
        mu_cylinder_lower_bound(levels, 3, 31)
    with pytest.raises(InfeasibleParameterError):
        mu_cylinder_lower_bound(levels, 5, 1)


def test_tilde_rate_bound_regimes(levels):
    assert tilde_rate_bound(levels, 3)[:2] == (2, "long")
    assert tilde_rate_bound(levels, 100)[:2] == (3, "short")
    with pytest.raises(InfeasibleParameterError):
        tilde_rate_bound(levels, 1)


def test_minimality_witness(stream):
    result = minimality_witness(stream)
    assert result.passed
    assert result.values["incomplete_blocks"] == []
    with pytest.raises(ValueError):
        minimality_witness(stream, word_level=4, block_level=3)


def test_prefix_is_built_from_level_words(stream):
    assert str(x_prefix(stream, 24)) == "012012012021102120201210"
    words = stream.level(3).words
    assert str(words[0]) == "012012012021102120201210"
    expected = list(words[0].symbols * 30) + [s for word in words for s in word.symbols]
    assert stream.symbols(18000).tolist() == expected


@pytest.mark.parametrize(
    "j, densities",
    [
        (1, (Fraction(1, 3), Fraction(1, 3))),
        (2, (Fraction(1, 8), Fraction(1, 24))),
        (3, (Fraction(31, 18000), Fraction(1, 18000))),
    ],
)
def test_cesaro_densities_in_aligned_blocks(stream, j, densities):
    level, outer = stream.level(j), stream.level(j + 1)
    window = outer.l // level.l
    for word, expected in zip(level.words, densities):
        report = cesaro_density_check(stream.sequence, word, level.l, window, offsets=3, offset_step=window)
        assert report.stride == level.l
        assert report.density == expected
        assert report.max_window_deviation == 0


def test_report_checks_entropy_at_small_m():
    report = theorem_c_report(prefix_length=20_000, n_list=(3, 24, 100), large_m_list=(100, 200, 300))
    ceiling = {c.name: c for c in report.checks}["local entropy below ceiling"]
    assert "m 1..12" in ceiling.detail
    assert report.entropy_m_range[1] <= 12
    assert report.entropy > 0.05
    assert not ceiling.passed
    assert not report.passed
    assert report.large_m_entropy is not None
    assert report.large_m_control is not None
