import string

import pytest
from hypothesis import given, settings, strategies as st

from whysim.macros import load_library
from whysim.queries import (
    BadArity,
    BadArgument,
    DONE,
    NoQueryFound,
    Query,
    QueryError,
    parse,
    render,
    validate,
)

from conftest import make_agent
from whysim.simulation.state import Goal, ScenarioState


# -- parse: the documented example strings -------------------------------

def test_parse_whatif_table_style():
    q = parse("whatif(1 [turn], 40)")
    assert q == Query(variant="whatif", agent=1, macros=("turn",), time=40)


def test_parse_whatif_with_comma():
    assert parse("whatif(1, [turn], 40)") == parse("whatif(1 [turn], 40)")


def test_parse_add_coordinates():
    q = parse("add([2,68], [-3,14])")
    assert q.variant == "add"
    assert q.start == (2.0, 68.0)
    assert q.goal == (-3.0, 14.0)


def test_parse_remove():
    assert parse("remove(1)") == Query(variant="remove", agent=1)


def test_parse_what():
    assert parse("what(1, 40)") == Query(variant="what", agent=1, time=40)


def test_parse_done_token():
    assert parse("done") is DONE
    assert parse("  DONE \n") is DONE
    assert parse("DoNe").variant == "done"


def test_parse_from_prose():
    q = parse("remove(1) because I suspect vehicle 1")
    assert q == Query(variant="remove", agent=1)


def test_parse_first_query_from_prose_matches_prefix_scan_oracle():
    text = "I think that maybe what(2, 10) then remove(1) would help"

    # Oracle: scan every start offset, take the first strict parse.
    def oracle():
        for i in range(len(text)):
            for kw in ("whatif", "what", "add", "remove"):
                if text[i:].startswith(kw):
                    try:
                        return parse(text[i:])
                    except QueryError:
                        continue
        raise AssertionError("oracle found nothing")

    assert parse(text) == oracle() == Query(variant="what", agent=2, time=10)


def test_parse_multiple_queries_takes_first():
    q = parse("remove(2)\nremove(1)")
    assert q.agent == 2


def test_no_query_found():
    with pytest.raises(NoQueryFound):
        parse("I have no idea what to ask")


@pytest.mark.parametrize("text,expected_kw,expected_got", [
    ("whatif(1)", "whatif", 1),
    ("whatif(1, [stop])", "whatif", 2),
    ("what(1)", "what", 1),
    ("remove(1, 2)", "remove", 2),
    ("add([1,2])", "add", 1),
])
def test_bad_arity(text, expected_kw, expected_got):
    with pytest.raises(BadArity) as err:
        parse(text)
    assert err.value.keyword == expected_kw
    assert err.value.got == expected_got


def test_bad_argument_carries_span():
    with pytest.raises(BadArgument) as err:
        parse("remove(x)")
    assert err.value.span


def test_done_not_extracted_from_prose():
    with pytest.raises(NoQueryFound):
        parse("I am done analysing this")


# -- render round trip ----------------------------------------------------

def test_render_canonical_forms():
    assert render(Query(variant="whatif", agent=1, macros=("turn",), time=40)) == \
        "whatif(1, [turn], 40)"
    assert render(DONE) == "DONE"
    assert render(Query(variant="remove", agent=3)) == "remove(3)"
    assert render(Query(variant="what", agent=1, time=40)) == "what(1, 40)"


_names = st.text(alphabet=string.ascii_lowercase + "-", min_size=1, max_size=10).filter(
    lambda s: s[0].isalpha()
)
_coords = st.tuples(
    st.floats(min_value=-500, max_value=500, allow_nan=False).map(lambda v: round(v, 3)),
    st.floats(min_value=-500, max_value=500, allow_nan=False).map(lambda v: round(v, 3)),
)


@st.composite
def queries(draw):
    variant = draw(st.sampled_from(["add", "remove", "whatif", "what", "done"]))
    if variant == "add":
        return Query(variant="add", start=draw(_coords), goal=draw(_coords))
    if variant == "remove":
        return Query(variant="remove", agent=draw(st.integers(0, 99)))
    if variant == "whatif":
        macros = tuple(draw(st.lists(_names, min_size=1, max_size=4)))
        return Query(variant="whatif", agent=draw(st.integers(0, 99)),
                     macros=macros, time=draw(st.integers(0, 2000)))
    if variant == "what":
        return Query(variant="what", agent=draw(st.integers(0, 99)),
                     time=draw(st.integers(0, 2000)))
    return DONE


@given(queries())
@settings(max_examples=300)
def test_parse_render_round_trip(q):
    assert parse(render(q)) == q


@given(queries(), st.text(alphabet=string.ascii_letters + " .,\n", max_size=40),
       st.text(alphabet=string.ascii_letters + " .,\n", max_size=40))
@settings(max_examples=150)
def test_prefix_suffix_prose_robustness(q, prefix, suffix):
    if q.variant == "done":
        return  # DONE matches only as an exact token
    text = f"{prefix} {render(q)} {suffix}"
    assert parse(text) == q


# -- validate -------------------------------------------------------------

@pytest.fixture
def three_agent_state(straight_layout):
    agents = [make_agent(i, x=20 * i) for i in range(3)]
    goals = [Goal(agent_id=i, region=(380, -4, 400, 4)) for i in range(3)]
    return ScenarioState(layout=straight_layout, agents=agents, goals=goals)


def test_validate_unknown_agent(three_agent_state):
    library = load_library()
    violations = validate(Query(variant="remove", agent=7), three_agent_state, library)
    assert [v.code for v in violations] == ["UnknownAgent"]


def test_validate_unknown_macro(three_agent_state):
    library = load_library()
    q = Query(variant="whatif", agent=1, macros=("teleport",), time=10)
    violations = validate(q, three_agent_state, library)
    assert [v.code for v in violations] == ["UnknownMacro"]


def test_validate_time_out_of_range(three_agent_state):
    library = load_library()
    q = Query(variant="whatif", agent=1, macros=("turn",), time=10_000)
    violations = validate(q, three_agent_state, library, horizon=800)
    assert [v.code for v in violations] == ["TimeOutOfRange"]


def test_validate_add_out_of_bounds(three_agent_state):
    library = load_library()
    q = Query(variant="add", start=(9999.0, 0.0), goal=(0.0, 0.0))
    violations = validate(q, three_agent_state, library)
    assert [v.code for v in violations] == ["OutOfBounds"]


def test_validate_accepts_aliases(three_agent_state):
    library = load_library()
    q = Query(variant="whatif", agent=1, macros=("change-lane", "slow-down"), time=10)
    assert validate(q, three_agent_state, library) == []
