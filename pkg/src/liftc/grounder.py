"""Bottom-up grounding: least models, restricted grounding and query relevance.

Internally a ground atom is the pair ``(name, args)`` with ``args`` a tuple of
constant names; :class:`~liftc.logic.Atom` values appear only at the module
boundary.  All containers are insertion-ordered dicts or lists so that results
do not depend on string hash randomisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator

from .errors import GroundingLimitError
from .logic import Atom, Const, Example, Fixed, Learnable, Template, Var, WeightedRule

DEFAULT_ATOM_CAP = 10**7

Key = tuple  # (name, args)


def atom_key(a: Atom) -> Key:
    return (a.name, tuple(t.name for t in a.terms))


def key_atom(k: Key) -> Atom:
    return Atom(k[0], tuple(Const(c) for c in k[1]))


# -- compiled rules ----------------------------------------------------------


@dataclass(frozen=True)
class _Lit:
    name: str
    arity: int
    # per position: variable index, or the constant name
    slots: tuple

    @property
    def pred(self):
        return (self.name, self.arity)


class _CompiledRule:
    __slots__ = ("index", "head", "body", "nvars", "vars", "plans")

    def __init__(self, index: int, rule: WeightedRule):
        self.index = index
        names: dict[str, int] = {}

        def lit(a: Atom) -> _Lit:
            slots = []
            for t in a.terms:
                if type(t) is Var:
                    slots.append(names.setdefault(t.name, len(names)))
                else:
                    slots.append(t.name)
            return _Lit(a.name, len(a.terms), tuple(slots))

        self.body = tuple(lit(a) for _, a in rule.body)
        self.head = lit(rule.head)
        self.nvars = len(names)
        self.vars = tuple(Var(n) for n in names)
        # plan[None] is a full join; plan[p] starts from literal p
        self.plans = {None: _join_order(self.body, None)}
        for p in range(len(self.body)):
            self.plans[p] = _join_order(self.body, p)


def _join_order(body: tuple[_Lit, ...], first: int | None) -> tuple[tuple[int, tuple[int, ...]], ...]:
    """Greedy static order: most bound positions first.

    Each step is (literal index, positions bound on entry).
    """
    bound: set[int] = set()
    order = []
    remaining = list(range(len(body)))
    if first is not None:
        remaining.remove(first)
        bound.update(s for s in body[first].slots if isinstance(s, int))
    while remaining:

        def score(i):
            lit = body[i]
            nb = sum(1 for s in lit.slots if not isinstance(s, int) or s in bound)
            free = len({s for s in lit.slots if isinstance(s, int) and s not in bound})
            return (-nb, free, i)

        best = min(remaining, key=score)
        remaining.remove(best)
        lit = body[best]
        positions = tuple(j for j, s in enumerate(lit.slots) if not isinstance(s, int) or s in bound)
        order.append((best, positions))
        bound.update(s for s in lit.slots if isinstance(s, int))
    return tuple(order)


class _Store:
    """Atom store with lazily built, incrementally maintained lookup indexes."""

    def __init__(self):
        self.by_pred: dict[tuple, list[tuple]] = {}
        self.indexes: dict[tuple, dict[tuple, list[tuple]]] = {}

    def add(self, name: str, args: tuple):
        pred = (name, len(args))
        self.by_pred.setdefault(pred, []).append(args)
        for (p, positions), idx in self.indexes.items():
            if p == pred:
                idx.setdefault(tuple(args[j] for j in positions), []).append(args)

    def lookup(self, pred: tuple, positions: tuple, values: tuple) -> list[tuple]:
        if not positions:
            return self.by_pred.get(pred, [])
        key = (pred, positions)
        idx = self.indexes.get(key)
        if idx is None:
            idx = {}
            for args in self.by_pred.get(pred, []):
                idx.setdefault(tuple(args[j] for j in positions), []).append(args)
            self.indexes[key] = idx
        return idx.get(values, [])


def _bind(lit: _Lit, args: tuple, binding: list) -> list[int] | None:
    """Extend binding in place; returns newly bound variables or None on clash."""
    fresh = []
    for s, c in zip(lit.slots, args):
        if isinstance(s, int):
            cur = binding[s]
            if cur is None:
                binding[s] = c
                fresh.append(s)
            elif cur != c:
                for v in fresh:
                    binding[v] = None
                return None
        elif s != c:
            for v in fresh:
                binding[v] = None
            return None
    return fresh


def _joins(rule: _CompiledRule, store: _Store, pivot: int | None, pivot_atoms: Iterable[tuple]) -> Iterator[list]:
    """Yield complete bindings; the yielded list is reused, copy it if kept."""
    plan = rule.plans[pivot]
    binding: list = [None] * rule.nvars

    def step(k: int):
        if k == len(plan):
            yield binding
            return
        li, positions = plan[k]
        lit = rule.body[li]
        values = tuple(binding[lit.slots[j]] if isinstance(lit.slots[j], int) else lit.slots[j] for j in positions)
        for args in store.lookup(lit.pred, positions, values):
            fresh = _bind(lit, args, binding)
            if fresh is None:
                continue
            yield from step(k + 1)
            for v in fresh:
                binding[v] = None

    if pivot is None:
        yield from step(0)
        return
    lit = rule.body[pivot]
    for args in pivot_atoms:
        fresh = _bind(lit, args, binding)
        if fresh is None:
            continue
        yield from step(0)
        for v in fresh:
            binding[v] = None


def _instantiate(lit: _Lit, binding: list) -> Key:
    return (lit.name, tuple(binding[s] if isinstance(s, int) else s for s in lit.slots))


# -- public types ------------------------------------------------------------


@dataclass(frozen=True)
class HerbrandModel:
    atoms: frozenset
    stage: dict = field(compare=False, repr=False)

    def __contains__(self, a: Atom) -> bool:
        return a in self.atoms

    def __len__(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class GroundRuleInstance:
    rule_index: int
    theta: tuple  # ((Var, Const), ...) in variable order
    head: Atom
    body: tuple  # ground atoms, literal order

    def __str__(self) -> str:
        return f"{self.rule_index}: {self.head} <- {', '.join(map(str, self.body))}"


FactValue = tuple | Learnable


@dataclass
class GroundProgram:
    model: HerbrandModel
    instances: list
    # ground fact atom -> fixed value tuple, or the Learnable slot holding it
    facts: dict
    query: Atom | None = None

    @property
    def fact_atoms(self) -> frozenset:
        return frozenset(self.facts)

    def dump(self) -> str:
        return "\n".join(str(i) for i in self.instances)


@dataclass(frozen=True)
class NotEntailed:
    """The query is outside the least model; under CWA it takes ``default``."""

    query: Atom
    default: float = 0.0

    def dump(self) -> str:
        return "NOT ENTAILED"


# -- operations --------------------------------------------------------------


def _example_facts(template: Template, example: Example | None) -> dict[Key, FactValue]:
    facts: dict[Key, FactValue] = {}
    for rule in template.rules:
        if rule.is_fact:
            w = rule.head_weight
            if w is None:
                value = (1.0,)
            elif isinstance(w, Fixed):
                value = w.values
            else:
                value = w
            facts[atom_key(rule.head)] = value
    if example is not None:
        for f in example.facts:
            facts[atom_key(f.atom)] = f.value
    return facts


def _compiled(template: Template) -> list[_CompiledRule]:
    return [_CompiledRule(i, r) for i, r in enumerate(template.rules) if not r.is_fact]


def immediate_consequence(rules: Iterable[WeightedRule], interpretation: Iterable[Atom]) -> set[Atom]:
    """One naive application of the consequence operator."""
    interp = list(dict.fromkeys(interpretation))
    store = _Store()
    for a in interp:
        store.add(*atom_key(a))
    out = set(interp)
    for i, rule in enumerate(rules):
        if rule.is_fact:
            if rule.head.is_ground:
                out.add(rule.head)
            continue
        cr = _CompiledRule(i, rule)
        for binding in _joins(cr, store, None, ()):
            out.add(key_atom(_instantiate(cr.head, binding)))
    return out


def _fixpoint(rules: list[_CompiledRule], facts: Iterable[Key], cap: int) -> dict[Key, int]:
    full: dict[Key, int] = {}
    store = _Store()
    for k in facts:
        if k not in full:
            full[k] = 0
            store.add(*k)
    if len(full) > cap:
        raise GroundingLimitError(f"least model exceeds {cap} atoms")
    delta = list(full)
    stage = 0
    while delta:
        stage += 1
        by_pred: dict[tuple, list[tuple]] = {}
        for name, args in delta:
            by_pred.setdefault((name, len(args)), []).append(args)
        new: dict[Key, None] = {}
        for rule in rules:
            for p, lit in enumerate(rule.body):
                pivot_atoms = by_pred.get(lit.pred)
                if not pivot_atoms:
                    continue
                for binding in _joins(rule, store, p, pivot_atoms):
                    k = _instantiate(rule.head, binding)
                    if k not in full and k not in new:
                        new[k] = None
                        if len(full) + len(new) > cap:
                            raise GroundingLimitError(f"least model exceeds {cap} atoms")
        for k in new:
            full[k] = stage
            store.add(*k)
        delta = list(new)
    return full


def least_model(template: Template, example: Example | None = None, *, cap: int = DEFAULT_ATOM_CAP) -> HerbrandModel:
    """Semi-naive fixpoint from the example facts plus template facts."""
    full = _fixpoint(_compiled(template), _example_facts(template, example), cap)
    stage = {key_atom(k): s for k, s in full.items()}
    return HerbrandModel(frozenset(stage), stage)


def _ground(template: Template, full: dict[Key, int]) -> list[GroundRuleInstance]:
    store = _Store()
    for k in full:
        store.add(*k)
    found: dict[tuple, GroundRuleInstance] = {}
    cache: dict[Key, Atom] = {}

    def to_atom(k: Key) -> Atom:
        a = cache.get(k)
        if a is None:
            a = cache[k] = key_atom(k)
        return a

    for rule in _compiled(template):
        for binding in _joins(rule, store, None, ()):
            head = _instantiate(rule.head, binding)
            body = tuple(_instantiate(lit, binding) for lit in rule.body)
            dedup = (rule.index, head, tuple(sorted(body)))
            if dedup in found:
                continue
            theta = tuple((v, Const(c)) for v, c in zip(rule.vars, binding))
            found[dedup] = GroundRuleInstance(rule.index, theta, to_atom(head), tuple(to_atom(b) for b in body))
    return [found[k] for k in sorted(found, key=lambda d: (d[0], d[1], d[2]))]


def restricted_grounding(template: Template, model: HerbrandModel, example: Example | None = None) -> GroundProgram:
    """All rule instances whose bodies hold in ``model``."""
    full = {atom_key(a): model.stage.get(a, 0) for a in sorted(model.atoms, key=Atom.sort_key)}
    facts = {key_atom(k): v for k, v in _example_facts(template, example).items()}
    return GroundProgram(model, _ground(template, full), facts)


def ground_example(template: Template, example: Example | None = None, *, cap: int = DEFAULT_ATOM_CAP) -> GroundProgram:
    """Least model and its full restricted grounding in one pass."""
    raw_facts = _example_facts(template, example)
    full = _fixpoint(_compiled(template), raw_facts, cap)
    stage = {key_atom(k): s for k, s in full.items()}
    model = HerbrandModel(frozenset(stage), stage)
    facts = {key_atom(k): v for k, v in raw_facts.items()}
    return GroundProgram(model, _ground(template, full), facts)


def relevant_to(program: GroundProgram, query: Atom, *, default: float = 0.0) -> GroundProgram | NotEntailed:
    """Restrict ``program`` to instances on a derivation path to ``query``."""
    if query not in program.model.atoms:
        return NotEntailed(query, default)
    by_head: dict[Atom, list[int]] = {}
    for i, inst in enumerate(program.instances):
        by_head.setdefault(inst.head, []).append(i)
    keep: set[int] = set()
    seen = {query}
    stack = [query]
    while stack:
        a = stack.pop()
        for i in by_head.get(a, ()):
            if i in keep:
                continue
            keep.add(i)
            for b in program.instances[i].body:
                if b not in seen:
                    seen.add(b)
                    stack.append(b)
    instances = [inst for i, inst in enumerate(program.instances) if i in keep]
    facts = {a: v for a, v in program.facts.items() if a in seen}
    return GroundProgram(program.model, instances, facts, query)


def ground_for_query(
    template: Template,
    example: Example | None,
    query: Atom,
    *,
    default: float = 0.0,
    cap: int = DEFAULT_ATOM_CAP,
) -> GroundProgram | NotEntailed:
    return relevant_to(ground_example(template, example, cap=cap), query, default=default)
