"""Generate the shared query-DSL conformance corpus.

The backend parser's verdict on each input is recorded; the web UI's
TypeScript parser must reproduce every verdict exactly (see
frontend/test/dsl_parity.test.ts).
"""

import json
from pathlib import Path

from whysim.queries import BadArgument, BadArity, NoQueryFound, QueryError, parse, render

INPUTS = [
    # Documented forms
    "add([2,68], [-3,14])",
    "remove(1)",
    "whatif(1 [turn], 40)",
    "whatif(1, [turn], 40)",
    "what(1, 40)",
    "DONE",
    "done",
    "  DoNe  ",
    # Spacing / numbers
    "add([ 2.5 , -68.25 ], [3 , 14])",
    "whatif( 2 , [change-lane-left, stop] , 120 )",
    "what(3 99)",
    "remove( 12 )",
    # Prose extraction
    "I think we should remove(1) because it cut in",
    "First consider what(1, 40) please",
    "Maybe whatif(0, [give-way], 60)? That would tell us something.",
    "broken add( then valid remove(2)",
    "remove(2)\nremove(1)",
    # Negative / float components
    "add([-2,-68], [-3.5,14.25])",
    "whatif(1, [slow-down, turn], 0)",
    # Errors: arity
    "whatif(1)",
    "whatif(1, [stop])",
    "what(1)",
    "remove(1, 2)",
    "add([1,2])",
    "add([1,2], [3,4], [5,6])",
    "what(1, 2, 3)",
    # Errors: malformed arguments
    "remove(x)",
    "whatif(1, [], 40)",
    "whatif(1, stop, 40)",
    "add(1, 2)",
    "what(1.5, 40)",
    "whatif(1, [turn], -40)" ,
    # Nothing to parse
    "I am done analysing this",
    "the vehicle added lanes",
    "",
    "what if we remove the vehicle",
    # DONE is exact-token only
    "DONE.",
    "we are DONE here",
]


def verdict(text: str) -> dict:
    try:
        query = parse(text)
    except BadArity as err:
        return {"ok": False, "error": "BadArity", "keyword": err.keyword,
                "expected": err.expected, "got": err.got}
    except BadArgument as err:
        return {"ok": False, "error": "BadArgument"}
    except NoQueryFound:
        return {"ok": False, "error": "NoQueryFound"}
    except QueryError:
        return {"ok": False, "error": "QueryError"}
    doc = {"ok": True, "variant": query.variant, "canonical": render(query)}
    if query.agent is not None:
        doc["agent"] = query.agent
    if query.time is not None:
        doc["time"] = query.time
    if query.macros:
        doc["macros"] = list(query.macros)
    if query.start is not None:
        doc["start"] = list(query.start)
        doc["goal"] = list(query.goal)
    return doc


def main() -> None:
    corpus = [{"text": text, **verdict(text)} for text in INPUTS]
    out = Path(__file__).resolve().parent.parent / "tests" / "data" / "dsl_corpus.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(corpus, indent=2, sort_keys=True) + "\n")
    print(f"wrote {out} ({len(corpus)} cases)")


if __name__ == "__main__":
    main()
