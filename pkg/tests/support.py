"""Shared helpers for building graphs and parameters in tests."""

from __future__ import annotations

import numpy as np

from liftc.engine import forward, node_values
from liftc.graph import AGG, build_graph, prune
from liftc.grounder import ground_example, relevant_to
from liftc.logic import Atom
from liftc.params import ParameterStore
from liftc.parser import parse_examples, parse_template

WATER_TEMPLATE = """
h_w {1,1} :: h(X) :- a_w {1,1} : a(Y), b_w {1,1} : b(X,Y).
q_w :: q :- hq_w : h(X).
"""

H2 = """
a(h1). a(h2).
b(h1,h2). b(h2,h1).
q ?
"""

H2O = """
a(h1). a(h2). a(o1).
b(h1,o1). b(o1,h1). b(h2,o1). b(o1,h2).
q ?
"""

Q = Atom("q")


def water():
    return parse_template(WATER_TEMPLATE)


def one_example(text: str):
    (ex,) = parse_examples(text)
    return ex


def graph_of(template, example, query: Atom = Q, *, pruned: bool = False, **kw):
    program = ground_example(template, example)
    g = build_graph(relevant_to(program, query), query, template, **kw)
    return prune(g) if pruned else g


def random_params(template_or_shapes, rng: np.random.Generator, scale: float = 1.0) -> ParameterStore:
    shapes = getattr(template_or_shapes, "parameter_slots", template_or_shapes)
    store = ParameterStore(shapes)
    store.data[:] = rng.uniform(-scale, scale, store.size)
    store.touch()
    return store


def out(graph, params) -> np.ndarray:
    return forward(graph, params)[0]


def max_margin(graph, params) -> float:
    """Smallest gap between the best and runner-up input of any max node."""
    vals = node_values(graph, params)
    gap = np.inf
    for n in graph.nodes:
        if n.kind == AGG and n.fn == "max" and len(n.inputs) > 1:
            stack = np.sort(np.stack([vals[s] for s, _ in n.inputs]), axis=0)
            gap = min(gap, float(np.min(stack[-1] - stack[-2])))
    return gap


def close(a, b, rel: float) -> bool:
    """Relative closeness with the scale taken from the larger magnitude."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1.0)
    return bool(np.all(np.abs(a - b) <= rel * scale))


# -- random programs -----------------------------------------------------------

_VARS = ("X", "Y", "Z")
# favour short bodies so that most rules fire
_BODY_P = {1: [1.0], 2: [0.6, 0.4], 3: [0.5, 0.3, 0.2]}


def random_program(rng: np.random.Generator, *, max_consts=6, max_preds=4, max_rules=8, max_body=3):
    """A range-safe definite program plus facts, in package and oracle form.

    Returns ``(template, example, oracle_rules, oracle_facts)``.
    """
    from liftc.logic import Example, Template, WeightedFact, WeightedRule, atom

    consts = [f"c{i}" for i in range(int(rng.integers(1, max_consts + 1)))]
    preds = [(f"p{i}", int(rng.integers(0, 3))) for i in range(int(rng.integers(1, max_preds + 1)))]

    def lit(pool):
        name, arity = preds[int(rng.integers(len(preds)))]
        args = tuple(
            str(rng.choice(consts)) if rng.random() < 0.1 else str(rng.choice(pool)) for _ in range(arity)
        )
        return name, args

    rules, oracle_rules = [], []
    for _ in range(int(rng.integers(1, max_rules + 1))):
        body = [lit(_VARS) for _ in range(int(rng.choice(np.arange(1, max_body + 1), p=_BODY_P[max_body])))]
        body_vars = sorted({t for _, args in body for t in args if t in _VARS})
        name, arity = preds[int(rng.integers(len(preds)))]
        head_pool = body_vars or consts
        head = (name, tuple(str(rng.choice(head_pool)) for _ in range(arity)))
        oracle_rules.append((head, tuple(body)))
        rules.append(WeightedRule(atom(head[0], *head[1]), tuple((None, atom(n, *a)) for n, a in body)))

    facts = set()
    for _ in range(int(rng.integers(5, 40))):
        name, arity = preds[int(rng.integers(len(preds)))]
        facts.add((name, tuple(str(rng.choice(consts)) for _ in range(arity))))
    facts = sorted(facts)
    example = Example(tuple(WeightedFact(atom(n, *a)) for n, a in facts))
    return Template(tuple(rules)), example, oracle_rules, facts


def as_tuple(a: Atom):
    return (a.name, tuple(t.name for t in a.terms))


_ACTS = ("identity", "sigmoid", "tanh", "relu")
_AGGS = ("avg", "max", "sum")


def random_prune_case(rng: np.random.Generator, nodes: int = 5, preds: int = 4):
    """A layered relational template rich in single-body unweighted rules.

    Functions on nodes the pruner splices are the identity: single-body
    unweighted rules get ``rule=identity`` and predicates with an unweighted
    head get ``atom=identity``.  Everything else is random.
    Returns ``(template text, example text)``.
    """
    names = [f"n{i}" for i in range(nodes)]
    rules = []
    unweighted_heads = set()
    sources = ["f"]
    for k in range(1, preds + 1):
        head = f"d{k}"
        for j in range(int(rng.integers(1, 4))):
            src = sources[int(rng.integers(len(sources)))]
            tag = f"{k}_{j}"
            kind = rng.integers(3)
            if kind == 0:
                rules.append(f"{head}(X) :- {src}(X) | rule=identity.")
                unweighted_heads.add(head)
            elif kind == 1:
                rules.append(f"{head}(X) :- {src}(Y), 0 : e(X,Y) | rule={rng.choice(_ACTS)}, agg={rng.choice(_AGGS)}.")
                unweighted_heads.add(head)
            else:
                rules.append(
                    f"wh{tag} {{2,2}} :: {head}(X) :- wb{tag} {{2,2}} : {src}(Y), 0 : e(X,Y)"
                    f" | rule={rng.choice(_ACTS)}, agg={rng.choice(_AGGS)}."
                )
        sources.append(head)
    top = sources[-1]
    rules.append(f"wq {{1,2}} :: q :- {top}(X) | rule=identity.")
    fns = [f"@fn {p} atom={'identity' if p in unweighted_heads else rng.choice(_ACTS)}." for p in sources[1:]]
    fns.append("@fn q atom=identity.")
    facts = [f"[{rng.uniform(-1, 1)!r}, {rng.uniform(-1, 1)!r}] :: f({v})." for v in names]
    facts += [f"e({a},{b})." for a in names for b in names if rng.random() < 0.35]
    facts.append("q ?")
    return "\n".join(fns + rules) + "\n", "\n".join(facts) + "\n"
