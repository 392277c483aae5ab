from src.models import Table
from src.tools.linearizer_tools import linearize, linearize_query


def test_linearize_layout():
    t = Table(id="a", caption="Denver Broncos 2019", headers=["Week", "Opponent"], entries=[["1", "Raiders"]])
    assert linearize(t).sequence == "[Table] [Caption] Denver Broncos 2019 [Header] Week [Header] Opponent"


def test_entries_never_enter_the_sequence():
    t = Table(id="a", caption="c", headers=["h"], entries=[["secret-cell"]])
    assert "secret-cell" not in linearize(t).sequence


def test_marker_text_in_payload_is_escaped():
    t = Table(id="a", caption="see [Header] here", headers=["[Table]"], entries=[["1"]])
    sequence = linearize(t).sequence
    assert sequence.count("[Header]") == 1
    assert "[[Header]]" in sequence and "[[Table]]" in sequence


def test_empty_caption_keeps_marker():
    t = Table(id="a", caption="", headers=["h"], entries=[["1"]])
    assert linearize(t).sequence == "[Table] [Caption]  [Header] h"


def test_linearize_query_normalizes_whitespace():
    assert linearize_query("  how   many\n goals ") == "how many goals"
