"""Relational vocabulary: terms, atoms, weights, rules, templates and examples.

Everything here is immutable.  Ground atoms and rules are hashable and compare
structurally, so two separately parsed copies of a template are equal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, NamedTuple, Union

ACTIVATIONS = ("identity", "sigmoid", "tanh", "relu")
AGGREGATIONS = ("avg", "max", "sum")
ORDERS = ("weight_first", "aggregate_first")


# -- terms and atoms ---------------------------------------------------------


@dataclass(frozen=True, slots=True)
class SourceSpan:
    file: str | None
    line: int
    column: int

    def __str__(self) -> str:
        return f"{self.file or '<input>'}:{self.line}:{self.column}"


@dataclass(frozen=True, slots=True)
class Const:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True, slots=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


Term = Union[Const, Var]


def is_variable_name(name: str) -> bool:
    return name[:1].isupper() or name[:1] == "_"


def term(name: str) -> Term:
    """Variable if the name starts with an uppercase letter or underscore."""
    return Var(name) if is_variable_name(name) else Const(name)


class Predicate(NamedTuple):
    name: str
    arity: int

    def __str__(self) -> str:
        return f"{self.name}/{self.arity}"


@dataclass(frozen=True, slots=True)
class Atom:
    name: str
    terms: tuple = ()

    @property
    def predicate(self) -> Predicate:
        return Predicate(self.name, len(self.terms))

    @property
    def is_ground(self) -> bool:
        return all(type(t) is Const for t in self.terms)

    def variables(self) -> tuple[Var, ...]:
        seen: dict[Var, None] = {}
        for t in self.terms:
            if type(t) is Var:
                seen.setdefault(t)
        return tuple(seen)

    def sort_key(self):
        return (self.name, len(self.terms), tuple(t.name for t in self.terms))

    def __str__(self) -> str:
        if not self.terms:
            return self.name
        return f"{self.name}({','.join(t.name for t in self.terms)})"


def atom(name: str, *args: str) -> Atom:
    """Shorthand: ``atom("edge", "X", "b")`` -> edge(X,b)."""
    return Atom(name, tuple(term(a) for a in args))


Substitution = Mapping[Var, Const]


def apply_substitution(a: Atom, theta: Substitution) -> Atom:
    if not theta:
        return a
    return Atom(a.name, tuple(theta.get(t, t) if type(t) is Var else t for t in a.terms))


def match_atom(pattern: Atom, ground: Atom, partial: Substitution | None = None) -> dict | None:
    """One-sided matching of ``pattern`` onto a ground atom.

    Returns the minimal extension of ``partial`` or None on failure.
    """
    if pattern.name != ground.name or len(pattern.terms) != len(ground.terms):
        return None
    theta = dict(partial) if partial else {}
    for p, g in zip(pattern.terms, ground.terms):
        if type(p) is Var:
            bound = theta.get(p)
            if bound is None:
                theta[p] = g
            elif bound != g:
                return None
        elif p != g:
            return None
    return theta


# -- weights -----------------------------------------------------------------


@dataclass(frozen=True)
class Learnable:
    """A trainable parameter slot; equal slot ids share one tensor."""

    slot: str
    shape: tuple[int, int] = (1, 1)

    @property
    def is_scalar(self) -> bool:
        return self.shape == (1, 1)


@dataclass(frozen=True)
class Fixed:
    """A constant weight: a scalar, or a column vector when longer than one."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def is_scalar(self) -> bool:
        return len(self.values) == 1

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.values), 1)


WeightSpec = Union[Learnable, Fixed, None]


# -- clauses -----------------------------------------------------------------


@dataclass(frozen=True)
class WeightedFact:
    atom: Atom
    value: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "value", tuple(float(v) for v in self.value))


@dataclass(frozen=True)
class Query:
    atom: Atom
    target: tuple[float, ...] = (1.0,)

    def __post_init__(self):
        object.__setattr__(self, "target", tuple(float(v) for v in self.target))


@dataclass(frozen=True)
class WeightedRule:
    head: Atom
    body: tuple[tuple[WeightSpec, Atom], ...] = ()
    head_weight: WeightSpec = None
    meta: tuple[tuple[str, str], ...] = ()
    span: SourceSpan | None = field(default=None, compare=False, repr=False)

    @property
    def is_fact(self) -> bool:
        return not self.body

    @property
    def options(self) -> dict[str, str]:
        return dict(self.meta)

    def weights(self) -> Iterable[WeightSpec]:
        yield self.head_weight
        for w, _ in self.body:
            yield w

    def __str__(self) -> str:
        from .parser import format_rule

        return format_rule(self)


@dataclass(frozen=True)
class FnSpec:
    """Function choices; ``None`` fields inherit from the enclosing level."""

    rule: str | None = None
    agg: str | None = None
    atom: str | None = None
    order: str | None = None

    def over(self, base: "FnSpec") -> "FnSpec":
        return FnSpec(
            self.rule if self.rule is not None else base.rule,
            self.agg if self.agg is not None else base.agg,
            self.atom if self.atom is not None else base.atom,
            self.order if self.order is not None else base.order,
        )

    def items(self):
        for key in ("rule", "agg", "atom", "order"):
            value = getattr(self, key)
            if value is not None:
                yield key, value


BUILTIN_FUNCTIONS = FnSpec(rule="identity", agg="avg", atom="identity", order="weight_first")


@dataclass(frozen=True)
class FunctionConfig:
    """Template-wide defaults plus per-head-predicate overrides.

    Override keys are ``name/arity`` (or a bare name matching any arity).
    """

    defaults: FnSpec = FnSpec()
    overrides: tuple[tuple[str, FnSpec], ...] = ()

    def for_predicate(self, pred: Predicate) -> FnSpec:
        spec = self.defaults.over(BUILTIN_FUNCTIONS)
        table = dict(self.overrides)
        for key in (pred.name, str(pred)):
            if key in table:
                spec = table[key].over(spec)
        return spec


@dataclass(frozen=True)
class Template:
    rules: tuple[WeightedRule, ...] = ()
    functions: FunctionConfig = field(default_factory=FunctionConfig)

    @cached_property
    def parameter_slots(self) -> dict[str, tuple[int, int]]:
        """Slot id -> shape, in order of first occurrence."""
        slots: dict[str, tuple[int, int]] = {}
        for rule in self.rules:
            for w in rule.weights():
                if isinstance(w, Learnable):
                    slots.setdefault(w.slot, w.shape)
        return slots

    def rule_functions(self, index: int) -> FnSpec:
        rule = self.rules[index]
        spec = self.functions.for_predicate(rule.head.predicate)
        opts = rule.options
        return FnSpec(opts.get("rule"), opts.get("agg"), None, opts.get("order")).over(spec)

    def atom_function(self, pred: Predicate) -> str:
        return self.functions.for_predicate(pred).atom

    @cached_property
    def head_predicates(self) -> frozenset[Predicate]:
        return frozenset(r.head.predicate for r in self.rules if r.body)

    def __str__(self) -> str:
        from .parser import serialize_template

        return serialize_template(self)


@dataclass(frozen=True)
class Example:
    facts: tuple[WeightedFact, ...] = ()
    queries: tuple[Query, ...] = ()
    name: str | None = None


# -- validation --------------------------------------------------------------


@dataclass(frozen=True)
class Diagnostic:
    rule: int | None
    message: str
    span: SourceSpan | None = None

    def __str__(self) -> str:
        where = f"{self.span}: " if self.span is not None else ""
        if self.rule is None:
            return where + self.message
        return f"{where}rule {self.rule}: {self.message}"


def _check_function_names(spec: FnSpec, where: str, rule: int | None, out: list):
    allowed = {"rule": ACTIVATIONS, "atom": ACTIVATIONS, "agg": AGGREGATIONS, "order": ORDERS}
    for key, value in spec.items():
        if value not in allowed[key]:
            out.append(Diagnostic(rule, f"unknown {key} function {value!r} {where}".rstrip()))


def _contribution(w: WeightSpec, n: int | None, rule: int, out: list | None) -> int | None:
    if w is None or w.is_scalar:
        return n
    if isinstance(w, Fixed):
        if n is not None and n != 1 and out is not None:
            out.append(Diagnostic(rule, f"fixed vector weight needs a scalar input, got dimension {n}"))
        return len(w.values)
    rows, cols = w.shape
    if n is not None and n != cols and out is not None:
        out.append(Diagnostic(rule, f"slot {w.slot!r} expects input dimension {cols}, got {n}"))
    return rows


def _dims_pass(template: Template, dims: dict[Predicate, int], out: list | None) -> bool:
    changed = False

    def merge(pred: Predicate, d: int | None, rule: int):
        nonlocal changed
        if d is None:
            return
        old = dims.get(pred)
        if old is None or (old == 1 and d != 1):
            dims[pred] = d
            changed = True
        elif d != 1 and d != old and out is not None:
            out.append(Diagnostic(rule, f"{pred} derived with dimension {d}, elsewhere {old}"))

    for i, rule in enumerate(template.rules):
        if rule.is_fact:
            w = rule.head_weight
            d = 1 if w is None else (w.shape[0] * w.shape[1] if isinstance(w, Learnable) else len(w.values))
            merge(rule.head.predicate, d, i)
            continue
        widths = [_contribution(w, dims.get(lit.predicate), i, out) for w, lit in rule.body]
        known = {x for x in widths if x is not None and x != 1}
        if len(known) > 1 and out is not None:
            out.append(Diagnostic(i, f"body contributions have incompatible dimensions {sorted(known)}"))
        if known:
            width = min(known)
        elif widths and all(x == 1 for x in widths):
            width = 1
        else:
            width = None
        merge(rule.head.predicate, _contribution(rule.head_weight, width, i, out), i)
    return changed


def infer_dimensions(template: Template, report: list | None = None) -> dict[Predicate, int]:
    """Static dimension of every predicate the template fixes, as far as known.

    Predicates fed only by example facts stay unknown.
    """
    dims: dict[Predicate, int] = {}
    while _dims_pass(template, dims, None):
        pass
    if report is not None:
        _dims_pass(template, dims, report)
    return dims


def validate_template(template: Template) -> list[Diagnostic]:
    """Collect every problem; never raises."""
    diags: list[Diagnostic] = []
    shapes: dict[str, tuple[int, int]] = {}
    for i, rule in enumerate(template.rules):
        body_vars = {v for _, lit in rule.body for v in lit.variables()}
        for v in rule.head.variables():
            if v not in body_vars:
                diags.append(Diagnostic(i, f"head variable {v} unbound in body of {rule.head}"))
        for w in rule.weights():
            if isinstance(w, Learnable):
                if min(w.shape) < 1:
                    diags.append(Diagnostic(i, f"slot {w.slot!r} has empty shape {w.shape}"))
                first = shapes.setdefault(w.slot, w.shape)
                if first != w.shape:
                    diags.append(Diagnostic(i, f"shape conflict for slot {w.slot!r}: {first} vs {w.shape}"))
            elif isinstance(w, Fixed) and not all(math.isfinite(v) for v in w.values):
                diags.append(Diagnostic(i, "fixed weight is not finite"))
        if rule.is_fact and isinstance(rule.head_weight, Learnable) and min(rule.head_weight.shape) != 1:
            diags.append(Diagnostic(i, f"fact value slot {rule.head_weight.slot!r} must be a vector"))
        opts = rule.options
        _check_function_names(FnSpec(opts.get("rule"), opts.get("agg"), None, opts.get("order")), "", i, diags)
        for key in opts:
            if key not in ("rule", "agg", "order"):
                diags.append(Diagnostic(i, f"unknown rule option {key!r}"))
    _check_function_names(template.functions.defaults, "in defaults", None, diags)
    for key, spec in template.functions.overrides:
        _check_function_names(spec, f"for {key}", None, diags)
    if not diags:
        infer_dimensions(template, diags)
    return [
        Diagnostic(d.rule, d.message, template.rules[d.rule].span) if d.rule is not None else d for d in diags
    ]


def check_example(example: Example) -> list[str]:
    problems = []
    for f in example.facts:
        if not f.atom.is_ground:
            problems.append(f"fact {f.atom} is not ground")
        if not all(math.isfinite(v) for v in f.value):
            problems.append(f"fact {f.atom} has a non-finite value")
    for q in example.queries:
        if not q.atom.is_ground:
            problems.append(f"query {q.atom} is not ground")
        if not all(math.isfinite(v) for v in q.target):
            problems.append(f"query {q.atom} has a non-finite target")
    return problems
