// Client-side parser for the interrogation query DSL.
//
// This mirrors the backend grammar byte for byte (docs/query_grammar.ebnf);
// tests/data/dsl_corpus.json is the conformance corpus both sides must agree
// on, including error classification and canonical rendering.

export interface Query {
    variant: "add" | "remove" | "whatif" | "what" | "done";
    agent?: number;
    time?: number;
    macros?: string[];
    start?: [number, number];
    goal?: [number, number];
}

export type ParseError =
    | { ok: false; error: "NoQueryFound" }
    | { ok: false; error: "BadArity"; keyword: string; expected: number; got: number }
    | { ok: false; error: "BadArgument"; position: number; reason: string }
    | { ok: false; error: "QueryError"; reason: string };

export type ParseResult = { ok: true; query: Query } | ParseError;

const KEYWORD_RE = /\b(whatif|what|add|remove)\s*\(/gi;
const NUMBER_RE = /[-+]?\d+(?:\.\d+)?/y;
const NAME_RE = /[A-Za-z][A-Za-z0-9_-]*/y;
const WHITESPACE = new Set([" ", "\t", "\r", "\n"]);

class ArgError extends Error {
    constructor(public position: number, public reason: string) {
        super(`argument ${position}: ${reason}`);
    }
}

class ArityError extends Error {
    constructor(public keyword: string, public expected: number, public got: number) {
        super(`${keyword} expects ${expected} arguments, got ${got}`);
    }
}

class GeneralError extends Error {}

class Scanner {
    constructor(private text: string, public pos: number) {}

    skipWs(): void {
        while (this.pos < this.text.length && WHITESPACE.has(this.text[this.pos])) {
            this.pos += 1;
        }
    }

    expect(ch: string): void {
        this.skipWs();
        if (this.text[this.pos] !== ch) {
            throw new ArgError(0, `expected '${ch}'`);
        }
        this.pos += 1;
    }

    tryChar(ch: string): boolean {
        this.skipWs();
        if (this.text[this.pos] === ch) {
            this.pos += 1;
            return true;
        }
        return false;
    }

    number(position: number): number {
        this.skipWs();
        NUMBER_RE.lastIndex = this.pos;
        const m = NUMBER_RE.exec(this.text);
        if (!m) {
            throw new ArgError(position, "expected a number");
        }
        this.pos = NUMBER_RE.lastIndex;
        return Number(m[0]);
    }

    integer(position: number): number {
        const value = this.number(position);
        if (!Number.isInteger(value)) {
            throw new ArgError(position, "expected an integer");
        }
        return value;
    }

    name(position: number): string {
        this.skipWs();
        NAME_RE.lastIndex = this.pos;
        const m = NAME_RE.exec(this.text);
        if (!m) {
            throw new ArgError(position, "expected a macro name");
        }
        this.pos = NAME_RE.lastIndex;
        return m[0];
    }

    point(position: number): [number, number] {
        this.expect("[");
        const x = this.number(position);
        this.expect(",");
        const y = this.number(position);
        this.expect("]");
        return [x, y];
    }

    macroList(position: number): string[] {
        this.expect("[");
        const names = [this.name(position)];
        while (this.tryChar(",")) {
            names.push(this.name(position));
        }
        this.expect("]");
        return names;
    }
}

function checkTime(time: number): void {
    if (time < 0) {
        throw new GeneralError("time must be a non-negative integer");
    }
}

function parseAt(text: string, keyword: string, bodyStart: number): Query {
    const sc = new Scanner(text, bodyStart);
    const kw = keyword.toLowerCase();
    if (kw === "add") {
        const start = sc.point(1);
        if (sc.tryChar(")")) throw new ArityError("add", 2, 1);
        sc.expect(",");
        const goal = sc.point(2);
        if (sc.tryChar(",")) throw new ArityError("add", 2, 3);
        sc.expect(")");
        return { variant: "add", start, goal };
    }
    if (kw === "remove") {
        const agent = sc.integer(1);
        if (sc.tryChar(",")) throw new ArityError("remove", 1, 2);
        sc.expect(")");
        return { variant: "remove", agent };
    }
    if (kw === "whatif") {
        const agent = sc.integer(1);
        sc.tryChar(",");
        if (sc.tryChar(")")) throw new ArityError("whatif", 3, 1);
        const macros = sc.macroList(2);
        if (sc.tryChar(")")) throw new ArityError("whatif", 3, 2);
        sc.expect(",");
        const time = sc.integer(3);
        sc.expect(")");
        checkTime(time);
        return { variant: "whatif", agent, macros, time };
    }
    if (kw === "what") {
        const agent = sc.integer(1);
        sc.tryChar(",");
        if (sc.tryChar(")")) throw new ArityError("what", 2, 1);
        const time = sc.integer(2);
        if (sc.tryChar(",")) throw new ArityError("what", 2, 3);
        sc.expect(")");
        checkTime(time);
        return { variant: "what", agent, time };
    }
    throw new GeneralError(`unknown keyword ${keyword}`);
}

function toError(err: unknown): ParseError {
    if (err instanceof ArityError) {
        return { ok: false, error: "BadArity", keyword: err.keyword,
                 expected: err.expected, got: err.got };
    }
    if (err instanceof ArgError) {
        return { ok: false, error: "BadArgument", position: err.position,
                 reason: err.reason };
    }
    return { ok: false, error: "QueryError", reason: String(err) };
}

export function parse(text: string): ParseResult {
    if (text.trim().toLowerCase() === "done") {
        return { ok: true, query: { variant: "done" } };
    }
    let firstError: ParseError | null = null;
    KEYWORD_RE.lastIndex = 0;
    let m: RegExpExecArray | null;
    while ((m = KEYWORD_RE.exec(text)) !== null) {
        try {
            const query = parseAt(text, m[1], m.index + m[0].length);
            return { ok: true, query };
        } catch (err) {
            if (firstError === null) {
                firstError = toError(err);
            }
        }
    }
    if (firstError !== null) {
        return firstError;
    }
    return { ok: false, error: "NoQueryFound" };
}

// Python's repr() prints doubles in shortest round-trip form but always with
// a decimal point; mirror that so canonical strings match the backend.
function floatRepr(value: number): string {
    if (Number.isInteger(value)) {
        return `${value}.0`;
    }
    return String(value);
}

export function render(query: Query): string {
    switch (query.variant) {
        case "done":
            return "DONE";
        case "add": {
            const [sx, sy] = query.start!;
            const [gx, gy] = query.goal!;
            return `add([${floatRepr(sx)}, ${floatRepr(sy)}], [${floatRepr(gx)}, ${floatRepr(gy)}])`;
        }
        case "remove":
            return `remove(${query.agent})`;
        case "whatif":
            return `whatif(${query.agent}, [${query.macros!.join(", ")}], ${query.time})`;
        case "what":
            return `what(${query.agent}, ${query.time})`;
    }
}

export function describeError(err: ParseError): string {
    switch (err.error) {
        case "NoQueryFound":
            return "No interrogation query found in the text.";
        case "BadArity":
            return `${err.keyword} expects ${err.expected} argument(s), got ${err.got}.`;
        case "BadArgument":
            return `Argument ${err.position}: ${err.reason}.`;
        default:
            return err.reason;
    }
}
