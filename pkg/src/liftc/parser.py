"""Surface syntax for templates (``.tpl``) and example sets (``.exs``).

Templates::

    Wh {1,3} :: h(X) :- Wa {3,3} : a(Y), Wb {3,3} : b(X,Y).
    q :- h(X) | rule=relu, agg=max.
    @fn h/1 atom=sigmoid.

Examples are blocks of facts and queries separated by blank lines or
``#example [name]`` lines::

    #example water
    a(h1). a(o1). b(h1,o1). b(o1,h1).
    1 :: q ?
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

from .errors import ParseError
from .logic import (
    Atom,
    Const,
    Example,
    Fixed,
    FnSpec,
    FunctionConfig,
    Learnable,
    Query,
    SourceSpan,
    Template,
    Var,
    WeightedFact,
    WeightedRule,
    is_variable_name,
)

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+|%[^\n]*)
  | (?P<num>[-+]?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?(?!\w))
  | (?P<name>\w+)
  | (?P<punct>:-|::|[:,.(){}\[\]?|=@/*])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True, slots=True)
class Token:
    kind: str  # "num", "name", "punct" or "eof"
    text: str
    line: int
    column: int


def tokenize(text: str, file: str | None = None) -> list[Token]:
    tokens: list[Token] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", SourceSpan(file, line, pos - line_start + 1))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append(Token(kind, m.group(), line, pos - line_start + 1))
        newlines = m.group().count("\n")
        if newlines:
            line += newlines
            line_start = m.start() + m.group().rindex("\n") + 1
        pos = m.end()
    tokens.append(Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Cursor:
    def __init__(self, tokens: list[Token], file: str | None):
        self.tokens = tokens
        self.i = 0
        self.file = file

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def peek(self, k: int = 1) -> Token:
        return self.tokens[min(self.i + k, len(self.tokens) - 1)]

    def span(self, tok: Token | None = None) -> SourceSpan:
        t = tok or self.tok
        return SourceSpan(self.file, t.line, t.column)

    def fail(self, message: str, tok: Token | None = None):
        t = tok or self.tok
        shown = "end of input" if t.kind == "eof" else repr(t.text)
        raise ParseError(f"{message}, found {shown}", self.span(t))

    def at(self, *texts: str) -> bool:
        return self.tok.kind == "punct" and self.tok.text in texts

    def advance(self) -> Token:
        t = self.tok
        if t.kind != "eof":
            self.i += 1
        return t

    def expect(self, text: str) -> Token:
        if not self.at(text):
            self.fail(f"expected {text!r}")
        return self.advance()

    def expect_kind(self, kind: str, what: str) -> Token:
        if self.tok.kind != kind:
            self.fail(f"expected {what}")
        return self.advance()


def _number(tok: Token, cur: _Cursor) -> float:
    value = float(tok.text)
    if not math.isfinite(value):
        cur.fail("numeric literal out of range", tok)
    return value


def _is_weight_start(cur: _Cursor) -> bool:
    t = cur.tok
    if t.kind == "num" or cur.at("["):
        return True
    if t.kind == "name":
        nxt = cur.peek()
        return nxt.kind == "punct" and nxt.text in ("{", ":", "::")
    return False


def _parse_numbers(cur: _Cursor) -> tuple[float, ...]:
    if cur.tok.kind == "num":
        return (_number(cur.advance(), cur),)
    cur.expect("[")
    values = [_number(cur.expect_kind("num", "a number"), cur)]
    while cur.at(","):
        cur.advance()
        values.append(_number(cur.expect_kind("num", "a number"), cur))
    cur.expect("]")
    return tuple(values)


def _parse_weight(cur: _Cursor, anon_id: str):
    """Returns Fixed, or (slot, shape-or-None) for a learnable weight."""
    if cur.tok.kind == "num" or cur.at("["):
        return Fixed(_parse_numbers(cur))
    name = cur.expect_kind("name", "a weight name").text
    slot = anon_id if name == "_" else name
    shape = None
    if cur.at("{"):
        cur.advance()
        dims = []
        while True:
            t = cur.expect_kind("num", "a positive integer dimension")
            if not re.fullmatch(r"\d+", t.text) or int(t.text) < 1:
                cur.fail("expected a positive integer dimension", t)
            dims.append(int(t.text))
            if not cur.at(","):
                break
            cur.advance()
        close = cur.expect("}")
        if len(dims) > 2:
            cur.fail("at most two dimensions are supported", close)
        shape = (dims[0], dims[1] if len(dims) == 2 else 1)
    return (slot, shape)


def _parse_atom(cur: _Cursor, *, ground: bool = False) -> Atom:
    name_tok = cur.tok
    if name_tok.kind != "name" or is_variable_name(name_tok.text):
        cur.fail("expected a predicate name")
    cur.advance()
    terms = []
    if cur.at("("):
        cur.advance()
        while True:
            t = cur.tok
            if t.kind not in ("name", "num"):
                cur.fail("expected a constant or variable")
            cur.advance()
            if cur.at("("):
                cur.fail("nested terms are not allowed")
            if is_variable_name(t.text):
                if ground:
                    raise ParseError(f"variable {t.text} in a ground fact or query", cur.span(t))
                terms.append(Var(t.text))
            else:
                terms.append(Const(t.text))
            if cur.at(")"):
                cur.advance()
                break
            cur.expect(",")
    return Atom(name_tok.text, tuple(terms))


_DIRECTIVE_KEYS = ("rule", "agg", "atom", "order")


def _parse_options(cur: _Cursor, allowed: tuple[str, ...]) -> list[tuple[str, str]]:
    opts = []
    while True:
        key_tok = cur.expect_kind("name", "an option name")
        if key_tok.text not in allowed:
            cur.fail(f"unknown option (expected one of {', '.join(allowed)})", key_tok)
        cur.expect("=")
        opts.append((key_tok.text, cur.expect_kind("name", "an option value").text))
        if not cur.at(","):
            return opts
        cur.advance()


def _parse_directive(cur: _Cursor, defaults: dict, overrides: dict):
    cur.expect("@")
    kw = cur.expect_kind("name", "a directive name")
    if kw.text != "fn":
        cur.fail("unknown directive", kw)
    if cur.at("*"):
        cur.advance()
        key = "*"
    else:
        key = cur.expect_kind("name", "a predicate or '*'").text
        if cur.at("/"):
            cur.advance()
            arity = cur.expect_kind("num", "an arity")
            key = f"{key}/{arity.text}"
    opts = dict(_parse_options(cur, _DIRECTIVE_KEYS))
    cur.expect(".")
    target = defaults if key == "*" else overrides.setdefault(key, {})
    target.update(opts)


def parse_template(text: str, file: str | None = None) -> Template:
    cur = _Cursor(tokenize(text, file), file)
    raw_rules = []
    defaults: dict[str, str] = {}
    overrides: dict[str, dict[str, str]] = {}
    while cur.tok.kind != "eof":
        if cur.at("@"):
            _parse_directive(cur, defaults, overrides)
            continue
        idx = len(raw_rules)
        start = cur.span()
        head_w = None
        if _is_weight_start(cur):
            head_w = _parse_weight(cur, f"_r{idx}_0")
            if not cur.at("::", ":"):
                cur.fail("expected '::' after the head weight")
            cur.advance()
        head = _parse_atom(cur)
        body = []
        if cur.at(":-"):
            cur.advance()
            while True:
                w = None
                if _is_weight_start(cur):
                    w = _parse_weight(cur, f"_r{idx}_{len(body) + 1}")
                    if not cur.at(":", "::"):
                        cur.fail("expected ':' after the literal weight")
                    cur.advance()
                body.append((w, _parse_atom(cur)))
                if not cur.at(","):
                    break
                cur.advance()
        meta = ()
        if cur.at("|"):
            cur.advance()
            meta = tuple(_parse_options(cur, ("rule", "agg", "order")))
        if cur.at("?"):
            cur.fail("queries belong in example files")
        cur.expect(".")
        raw_rules.append((head_w, head, body, meta, start))

    # a bare slot name takes the shape declared anywhere else in the file
    declared: dict[str, tuple[int, int]] = {}
    for head_w, _, body, _, _ in raw_rules:
        for w in [head_w] + [w for w, _ in body]:
            if isinstance(w, tuple) and w[1] is not None:
                declared.setdefault(w[0], w[1])

    def resolve(w):
        if isinstance(w, tuple):
            slot, shape = w
            return Learnable(slot, shape or declared.get(slot, (1, 1)))
        return w

    rules = tuple(
        WeightedRule(head, tuple((resolve(w), a) for w, a in body), resolve(head_w), meta, span)
        for head_w, head, body, meta, span in raw_rules
    )
    functions = FunctionConfig(
        FnSpec(**defaults), tuple((k, FnSpec(**v)) for k, v in overrides.items())
    )
    return Template(rules, functions)


def parse_examples(text: str, file: str | None = None) -> list[Example]:
    # separator lines are blanked out before tokenizing so columns stay intact
    lines = text.split("\n")
    separators: list[tuple[int, str, str | None]] = []
    for no, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if stripped.startswith("#example"):
            rest = stripped[len("#example"):]
            if rest and not rest[0].isspace():
                raise ParseError("malformed #example line", SourceSpan(file, no, raw.index("#") + 1))
            name = rest.split("%")[0].strip() or None
            separators.append((no, "header", name))
            lines[no - 1] = " " * len(raw)
        elif not stripped:
            separators.append((no, "blank", None))
    cur = _Cursor(tokenize("\n".join(lines), file), file)

    examples: list[Example] = []
    current: dict | None = None
    sep_i = 0
    last_line = 0

    def flush():
        nonlocal current
        if current is not None and (current["explicit"] or current["facts"] or current["queries"]):
            examples.append(Example(tuple(current["facts"]), tuple(current["queries"]), current["name"]))
        current = None

    def handle_separators(upto: int):
        nonlocal sep_i, current
        while sep_i < len(separators) and separators[sep_i][0] < upto:
            no, kind, name = separators[sep_i]
            sep_i += 1
            if no <= last_line:
                continue
            if kind == "header":
                flush()
                current = {"facts": [], "queries": [], "name": name, "explicit": True}
            elif current is not None and (current["facts"] or current["queries"]):
                flush()

    while cur.tok.kind != "eof":
        handle_separators(cur.tok.line)
        if current is None:
            current = {"facts": [], "queries": [], "name": None, "explicit": False}
        value = (1.0,)
        if cur.tok.kind == "num" or cur.at("["):
            value = _parse_numbers(cur)
            if not cur.at("::", ":"):
                cur.fail("expected '::' after the fact value")
            cur.advance()
        elif cur.tok.kind == "name" and cur.peek().kind == "punct" and cur.peek().text in ("{", "::", ":"):
            cur.fail("fact values in examples must be numeric")
        a = _parse_atom(cur, ground=True)
        if cur.at(":-"):
            cur.fail("rules inside example files are not supported")
        if cur.at("?"):
            current["queries"].append(Query(a, value))
        elif cur.at("."):
            current["facts"].append(WeightedFact(a, value))
        else:
            cur.fail("expected '.' or '?'")
        last_line = cur.advance().line
    handle_separators(len(lines) + 1)
    flush()
    return examples


def load_template(path: str | Path) -> Template:
    p = Path(path)
    return parse_template(p.read_text(encoding="utf-8"), str(p))


def load_examples(path: str | Path) -> list[Example]:
    p = Path(path)
    return parse_examples(p.read_text(encoding="utf-8"), str(p))


# -- serialization -----------------------------------------------------------


def format_number(v: float) -> str:
    if float(v).is_integer() and abs(v) < 1e15:
        return str(int(v))
    return repr(float(v))


def format_values(values) -> str:
    if len(values) == 1:
        return format_number(values[0])
    return "[" + ", ".join(format_number(v) for v in values) + "]"


def _format_weight(w, seen: set[str] | None) -> str:
    if isinstance(w, Fixed):
        return format_values(w.values)
    text = w.slot
    first = seen is None or w.slot not in seen
    if seen is not None:
        seen.add(w.slot)
    if first and not w.is_scalar:
        text += " {%d,%d}" % w.shape
    return text


def format_rule(rule: WeightedRule, seen: set[str] | None = None) -> str:
    out = ""
    if rule.head_weight is not None:
        out += _format_weight(rule.head_weight, seen) + " :: "
    out += str(rule.head)
    if rule.body:
        lits = []
        for w, a in rule.body:
            lits.append(str(a) if w is None else f"{_format_weight(w, seen)} : {a}")
        out += " :- " + ", ".join(lits)
    if rule.meta:
        out += " | " + ", ".join(f"{k}={v}" for k, v in rule.meta)
    return out + "."


def _format_directive(key: str, spec: FnSpec) -> str | None:
    items = list(spec.items())
    if not items:
        return None
    return f"@fn {key} " + ", ".join(f"{k}={v}" for k, v in items) + "."


def serialize_template(template: Template) -> str:
    lines = []
    for key, spec in [("*", template.functions.defaults), *template.functions.overrides]:
        d = _format_directive(key, spec)
        if d:
            lines.append(d)
    seen: set[str] = set()
    lines.extend(format_rule(r, seen) for r in template.rules)
    return "\n".join(lines) + ("\n" if lines else "")


def _format_clause(atom: Atom, value, end: str) -> str:
    if tuple(value) == (1.0,):
        return f"{atom}{end}"
    return f"{format_values(value)} :: {atom}{end}"


def serialize_examples(examples) -> str:
    blocks = []
    for ex in examples:
        lines = ["#example" + (f" {ex.name}" if ex.name else "")]
        lines.extend(_format_clause(f.atom, f.value, ".") for f in ex.facts)
        lines.extend(_format_clause(q.atom, q.target, " ?") for q in ex.queries)
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks) + ("\n" if blocks else "")


def serialize(obj) -> str:
    """Text form of a Template or a sequence of Examples."""
    if isinstance(obj, Template):
        return serialize_template(obj)
    return serialize_examples(obj)
