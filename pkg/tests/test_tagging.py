import numpy as np
import pytest
from hypothesis import given, settings

from astetag.errors import CollisionError, FormatError, OutOfBounds
from astetag.tagging import (LABELS, NUM_LABELS, Discrepancy, Sentiment, Span, TagLabel, Triplet,
                             decode_matrix, dump_matrix, encode_triplets, load_matrix,
                             scheme_fidelity, validate_wellformed)
from astetag.dataset import parse_line
from gen import wellformed_sets

T = Triplet.of
BATTERY = {T((1, 2), (4, 4), "POS"), T((8, 8), (10, 10), "NEU")}


def test_battery_example_cells():
    m = encode_triplets(BATTERY, 12)
    assert m[1, 4] == TagLabel.POS
    assert m[2, 4] == TagLabel.CTD
    assert m[8, 10] == TagLabel.NEU
    m[1, 4] = m[2, 4] = m[8, 10] = 0
    assert not m.any()


def test_empty_set_is_all_null():
    m = encode_triplets(set(), 4)
    assert m.shape == (4, 4) and not m.any()


def test_collision_cell():
    with pytest.raises(CollisionError) as e:
        encode_triplets({T((0, 1), (2, 2), "POS"), T((1, 1), (2, 2), "NEG")}, 3)
    assert e.value.cell == (1, 2)


def test_out_of_bounds():
    with pytest.raises(OutOfBounds):
        encode_triplets({T((0, 3), (1, 1), "POS")}, 3)


def test_lenient_sentiment_overwrites_ctd():
    m = encode_triplets({T((0, 1), (2, 2), "POS"), T((1, 1), (2, 2), "NEG")}, 3, lenient=True)
    assert m[0, 2] == TagLabel.POS and m[1, 2] == TagLabel.NEG


def test_decode_battery():
    assert set(decode_matrix(encode_triplets(BATTERY, 12))) == BATTERY


def test_decode_all_null():
    assert decode_matrix(np.zeros((6, 6), dtype=np.int8)) == []


def test_decode_one_aspect_two_opinions():
    m = np.zeros((5, 5), dtype=np.int8)
    m[0, 2] = TagLabel.POS
    m[0, 4] = TagLabel.NEG
    assert decode_matrix(m) == [T((0, 0), (2, 2), "POS"), T((0, 0), (4, 4), "NEG")]


def test_decode_ignores_interior():
    m = np.zeros((3, 3), dtype=np.int8)
    m[0, 0] = TagLabel.POS
    m[1, 0] = m[0, 1] = TagLabel.CTD  # interior (1, 1) left NULL
    assert decode_matrix(m) == [T((0, 1), (0, 1), "POS")]


def test_decode_rejects_non_square():
    with pytest.raises(ValueError):
        decode_matrix(np.zeros((2, 3), dtype=np.int8))


def test_validate_ok():
    assert validate_wellformed(BATTERY, 12) is None


def test_validate_collision_report():
    rep = validate_wellformed({T((0, 1), (2, 2), "POS"), T((1, 1), (2, 2), "NEG")}, 3)
    assert isinstance(rep, Discrepancy) and rep
    assert rep.collision == (1, 2)


def test_validate_truncated_column_walk():
    trips = {T((0, 1), (0, 0), "POS"), T((1, 1), (0, 0), "NEG")}
    rep = validate_wellformed(trips, 2)
    assert rep.collision == (1, 0)
    assert rep.missing == {T((0, 1), (0, 0), "POS")}
    assert rep.spurious == {T((0, 0), (0, 0), "POS")}


def _sentence(trips, n):
    words = " ".join(f"w{i}" for i in range(n))
    items = ", ".join(f"({list(t.aspect.indices())}, {list(t.opinion.indices())}, "
                      f"'{t.sentiment.value}')" for t in trips)
    return parse_line(f"{words}####[{items}]")


def test_scheme_fidelity_counts():
    good = [_sentence(BATTERY, 12)] * 3
    assert scheme_fidelity(good) == 1.0
    bad = _sentence({T((0, 1), (2, 2), "POS"), T((1, 1), (2, 2), "NEG")}, 3)
    assert scheme_fidelity(good + [bad]) == 0.75
    assert scheme_fidelity([]) == 1.0


def test_label_vocabulary():
    assert NUM_LABELS == 5 == len(LABELS)
    assert [s.value for s in Sentiment] == ["POS", "NEU", "NEG"]


def test_dump_round_trip():
    m = encode_triplets(BATTERY, 12)
    text = dump_matrix(m)
    assert text.splitlines()[0] == "n=12"
    assert text.splitlines()[2].split(" ")[4] == "P"
    assert np.array_equal(load_matrix(text), m)


@pytest.mark.parametrize("text", ["", "x=2\nN N\nN N", "n=2\nN N", "n=2\nN N\nN Q", "n=2\nN\nN N"])
def test_load_matrix_errors(text):
    with pytest.raises(FormatError):
        load_matrix(text)


def test_span_helpers():
    s = Span(2, 4)
    assert len(s) == 3 and 3 in s and 5 not in s and list(s.indices()) == [2, 3, 4]
    with pytest.raises(OutOfBounds):
        Span(3, 2).check()


@settings(max_examples=1000, deadline=None)
@given(wellformed_sets())
def test_round_trip_property(case):
    trips, n = case
    m = encode_triplets(trips, n)
    assert set(decode_matrix(m)) == trips
    # only 5 labels, sentiment cells only at beginnings
    assert m.max() < NUM_LABELS
    starts = {(t.aspect.start, t.opinion.start) for t in trips}
    assert {tuple(c) for c in np.argwhere(m >= TagLabel.POS)} == starts
    assert np.array_equal(m, encode_triplets(trips, n))


@settings(max_examples=200, deadline=None)
@given(wellformed_sets())
def test_decode_spans_in_bounds_on_noise(case):
    _, n = case
    m = np.random.default_rng(n).integers(0, 5, size=(n, n)).astype(np.int8)
    for t in decode_matrix(m):
        assert 0 <= t.aspect.start <= t.aspect.end < n
        assert 0 <= t.opinion.start <= t.opinion.end < n
