"""Interrogation query language: grammar, parser, renderer, validator.

Grammar (see docs/query_grammar.ebnf):

    query    = "add" "(" point "," point ")"
             | "remove" "(" int ")"
             | "whatif" "(" int [","] macros "," int ")"
             | "what" "(" int "," int ")"
             | "DONE" ;
    point    = "[" number "," number "]" ;
    macros   = "[" name { "," name } "]" ;

The parser extracts the first well-formed query from surrounding prose;
``DONE`` only matches as an exact (case-insensitive) token.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

QUERY_KEYWORDS = ("add", "remove", "whatif", "what")

_KEYWORD_RE = re.compile(r"\b(whatif|what|add|remove)\s*\(", re.IGNORECASE)
_NUMBER_RE = re.compile(r"[-+]?\d+(?:\.\d+)?")
_NAME_RE = re.compile(r"[A-Za-z][A-Za-z0-9_-]*")


class QueryError(ValueError):
    """Base class for parse failures; carries the offending text span."""

    def __init__(self, message: str, span: str = ""):
        super().__init__(message if not span else f"{message} (near: {span!r})")
        self.span = span


class NoQueryFound(QueryError):
    pass


class BadArity(QueryError):
    def __init__(self, keyword: str, expected: int, got: int, span: str = ""):
        super().__init__(f"{keyword} expects {expected} arguments, got {got}", span)
        self.keyword = keyword
        self.expected = expected
        self.got = got


class BadArgument(QueryError):
    def __init__(self, position: int, reason: str, span: str = ""):
        super().__init__(f"argument {position}: {reason}", span)
        self.position = position
        self.reason = reason


@dataclass(frozen=True)
class Query:
    variant: str  # add | remove | whatif | what | done
    agent: int | None = None
    time: int | None = None
    macros: tuple[str, ...] = field(default_factory=tuple)
    start: tuple[float, float] | None = None
    goal: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.variant not in ("add", "remove", "whatif", "what", "done"):
            raise QueryError(f"unknown query variant {self.variant!r}")
        if self.variant == "whatif" and not self.macros:
            raise QueryError("whatif requires at least one macro")
        if self.time is not None and self.time < 0:
            raise QueryError("time must be a non-negative integer")


DONE = Query(variant="done")


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------


class _Scanner:
    def __init__(self, text: str, pos: int):
        self.text = text
        self.pos = pos

    def skip_ws(self) -> None:
        while self.pos < len(self.text) and self.text[self.pos] in " \t\r\n":
            self.pos += 1

    def expect(self, ch: str) -> None:
        self.skip_ws()
        if self.pos >= len(self.text) or self.text[self.pos] != ch:
            raise BadArgument(0, f"expected {ch!r}", self.text[self.pos : self.pos + 12])
        self.pos += 1

    def try_char(self, ch: str) -> bool:
        self.skip_ws()
        if self.pos < len(self.text) and self.text[self.pos] == ch:
            self.pos += 1
            return True
        return False

    def number(self, position: int) -> float:
        self.skip_ws()
        m = _NUMBER_RE.match(self.text, self.pos)
        if not m:
            raise BadArgument(position, "expected a number", self.text[self.pos : self.pos + 12])
        self.pos = m.end()
        return float(m.group())

    def integer(self, position: int) -> int:
        value = self.number(position)
        if value != int(value):
            raise BadArgument(position, "expected an integer", str(value))
        return int(value)

    def name(self, position: int) -> str:
        self.skip_ws()
        m = _NAME_RE.match(self.text, self.pos)
        if not m:
            raise BadArgument(position, "expected a macro name", self.text[self.pos : self.pos + 12])
        self.pos = m.end()
        return m.group()

    def point(self, position: int) -> tuple[float, float]:
        self.expect("[")
        x = self.number(position)
        self.expect(",")
        y = self.number(position)
        self.expect("]")
        return (x, y)

    def macro_list(self, position: int) -> tuple[str, ...]:
        self.expect("[")
        names = [self.name(position)]
        while self.try_char(","):
            names.append(self.name(position))
        self.expect("]")
        return tuple(names)


def _parse_at(text: str, keyword: str, body_start: int) -> tuple[Query, int]:
    """Parse one query whose argument list starts at ``body_start`` (after '(')."""
    sc = _Scanner(text, body_start)
    kw = keyword.lower()

    def span() -> str:
        return text[body_start - 1 : sc.pos + 8]

    if kw == "add":
        start = sc.point(1)
        if sc.try_char(")"):
            raise BadArity("add", 2, 1, span())
        sc.expect(",")
        goal = sc.point(2)
        if sc.try_char(","):
            raise BadArity("add", 2, 3, span())
        sc.expect(")")
        return Query(variant="add", start=start, goal=goal), sc.pos
    if kw == "remove":
        agent = sc.integer(1)
        if sc.try_char(","):
            raise BadArity("remove", 1, 2, span())
        sc.expect(")")
        return Query(variant="remove", agent=agent), sc.pos
    if kw == "whatif":
        agent = sc.integer(1)
        sc.try_char(",")  # comma after the agent id is optional (Table-1 style)
        if sc.try_char(")"):
            raise BadArity("whatif", 3, 1, span())
        macros = sc.macro_list(2)
        if sc.try_char(")"):
            raise BadArity("whatif", 3, 2, span())
        sc.expect(",")
        time = sc.integer(3)
        sc.expect(")")
        return Query(variant="whatif", agent=agent, macros=macros, time=time), sc.pos
    if kw == "what":
        agent = sc.integer(1)
        sc.try_char(",")
        if sc.try_char(")"):
            raise BadArity("what", 2, 1, span())
        time = sc.integer(2)
        if sc.try_char(","):
            raise BadArity("what", 2, 3, span())
        sc.expect(")")
        return Query(variant="what", agent=agent, time=time), sc.pos
    raise NoQueryFound(f"unknown keyword {keyword!r}")


def parse(text: str) -> Query:
    """Extract the first well-formed query from LLM output.

    Raises NoQueryFound when nothing resembles a query; if a candidate exists
    but is malformed, the first candidate's error is raised.
    """
    if text is None:
        raise NoQueryFound("empty text")
    stripped = text.strip()
    if stripped.lower() == "done":
        return DONE
    first_error: QueryError | None = None
    for m in _KEYWORD_RE.finditer(text):
        keyword = m.group(1)
        try:
            query, _end = _parse_at(text, keyword, m.end())
            return query
        except QueryError as err:
            if first_error is None:
                first_error = err
    if first_error is not None:
        raise first_error
    raise NoQueryFound("no interrogation query found", stripped[:40])


def render(query: Query) -> str:
    """Canonical text form; ``parse(render(q)) == q`` for all valid queries."""
    if query.variant == "done":
        return "DONE"
    if query.variant == "add":
        sx, sy = query.start
        gx, gy = query.goal
        return f"add([{sx!r}, {sy!r}], [{gx!r}, {gy!r}])"
    if query.variant == "remove":
        return f"remove({query.agent})"
    if query.variant == "whatif":
        macros = ", ".join(query.macros)
        return f"whatif({query.agent}, [{macros}], {query.time})"
    if query.variant == "what":
        return f"what({query.agent}, {query.time})"
    raise QueryError(f"cannot render variant {query.variant!r}")


# ---------------------------------------------------------------------------
# Semantic validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    detail: str

    def __str__(self) -> str:
        return f"{self.code}: {self.detail}"


def validate(query: Query, scenario, macro_library, horizon: int = 800) -> list[Violation]:
    """Check a parsed query against a scenario; returns violations, never raises."""
    out: list[Violation] = []
    if query.variant == "done":
        return out
    if query.agent is not None and not scenario.has_agent(query.agent):
        out.append(Violation("UnknownAgent", f"agent {query.agent} does not exist"))
    if query.variant == "whatif":
        for name in query.macros:
            if name not in macro_library:
                out.append(Violation("UnknownMacro", f"macro {name!r} is not in the library"))
    if query.time is not None and not 0 <= query.time <= horizon:
        out.append(
            Violation("TimeOutOfRange", f"time {query.time} outside [0, {horizon}]")
        )
    if query.variant == "add":
        bbox = scenario.layout.bounding_box()
        for label, point in (("start", query.start), ("goal", query.goal)):
            x, y = point
            if not (bbox[0] <= x <= bbox[2] and bbox[1] <= y <= bbox[3]):
                out.append(
                    Violation("OutOfBounds", f"{label} {point} outside the drivable area")
                )
    return out


QUERY_DESCRIPTION = """\
You can interrogate the simulator with exactly one of these queries per round:
- add([x1, y1], [x2, y2]): add a new vehicle starting near [x1, y1] with goal near [x2, y2].
- remove(agent): remove the vehicle with the given ID from the start of the simulation.
- whatif(agent, [macro, ...], time): simulate the vehicle executing the macro actions from the given time.
- what(agent, time): look up the vehicle's observed or simulated state and action at the given time.
- DONE: stop interrogating when you have enough information."""

QUERY_TYPE_DESCRIPTION = """\
Argument types: agent is a non-negative integer vehicle ID; time is a non-negative
integer tick (20 ticks = 1 second); coordinates are metres as [x, y]; macros is a
non-empty bracketed list of macro action names."""
