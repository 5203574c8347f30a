"""Tests for the small shared helpers."""

import pytest

from utils import format_elapsed, generate_content_hash, parse_id_ranges, parse_lengths, round_floats, significant


def test_parse_lengths_with_trailing_unit():
    assert parse_lengths("6,8,10,12,14cm") == [0.06, 0.08, 0.1, 0.12, 0.14]
    assert parse_lengths("0.06, 0.1") == [0.06, 0.1]
    assert parse_lengths("60mm") == [0.06]


def test_parse_lengths_per_value_units():
    assert parse_lengths("6cm,80mm") == [0.06, 0.08]


@pytest.mark.parametrize("text", ["", " , ", "6in", "abc"])
def test_parse_lengths_errors(text):
    with pytest.raises(ValueError):
        parse_lengths(text)


def test_parse_id_ranges():
    assert parse_id_ranges("1-6,10") == [1, 2, 3, 4, 5, 6, 10]
    assert parse_id_ranges("3,1,3") == [1, 3]
    with pytest.raises(ValueError):
        parse_id_ranges("5-2")
    with pytest.raises(ValueError):
        parse_id_ranges("x")


def test_significant_and_round_floats():
    assert significant(1 / 3) == 0.333333333
    assert significant(123456789012.0) == 123456789000.0
    assert round_floats({'a': [1 / 3, 2], 'b': True, 'c': None}) == {'a': [0.333333333, 2], 'b': True, 'c': None}


def test_content_hash():
    assert generate_content_hash(b"") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"


def test_format_elapsed():
    assert format_elapsed(0.4123) == "412 ms"
    assert format_elapsed(3.21) == "3.2 s"
    assert format_elapsed(245) == "4 min 05 s"
